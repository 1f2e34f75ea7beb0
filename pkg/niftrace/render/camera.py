"""
Pinhole camera rays.
"""

import math

import numpy as np
from numba import njit

from niftrace.bvh.traversal import Ray
from niftrace.core.rng import RngKey, rng_uniform

ONE = np.float32(1.0)
TWO = np.float32(2.0)

JITTER_X_DRAW = 0
JITTER_Y_DRAW = 1


def camera_frame(camera, width, height):
    """
    Float32 frame consumed by camera_ray_kernel: rows position, forward,
    right, up and (tan_x, tan_y, 0) half-extents of the image plane.
    """
    forward, right, up = camera.basis()
    tan_y = math.tan(math.radians(float(camera.vfov)) / 2.0)
    tan_x = tan_y * width / height
    frame = np.zeros((5, 3), dtype=np.float32)
    frame[0] = camera.position
    frame[1] = forward
    frame[2] = right
    frame[3] = up
    frame[4] = (tan_x, tan_y, 0.0)
    return frame


@njit(cache=True, error_model="numpy")
def camera_ray_kernel(frame, width, height, px, py, jx, jy):
    """
    Direction through raster position (px + jx, py + jy); y grows downwards.

    Returns:
        (ox, oy, oz, dx, dy, dz) with a unit direction.
    """
    sx = (TWO * (np.float32(px) + jx) / np.float32(width) - ONE) * frame[4, 0]
    sy = (ONE - TWO * (np.float32(py) + jy) / np.float32(height)) * frame[4, 1]
    dx = frame[1, 0] + sx * frame[2, 0] + sy * frame[3, 0]
    dy = frame[1, 1] + sx * frame[2, 1] + sy * frame[3, 1]
    dz = frame[1, 2] + sx * frame[2, 2] + sy * frame[3, 2]
    inv = ONE / math.sqrt(dx * dx + dy * dy + dz * dz)
    return frame[0, 0], frame[0, 1], frame[0, 2], dx * inv, dy * inv, dz * inv


def camera_ray(camera, width, height, pixel, sample, seed=0, jitter=None):
    """
    Primary ray through a uniformly jittered position inside a pixel.

    Args:
        camera: Camera.
        width, height: raster size.
        pixel: (x, y) with y = 0 the top row.
        sample: sample index.
        seed: render seed.
        jitter: explicit (jx, jy) in [0, 1)^2 instead of the keyed draws.

    Returns:
        Ray.
    """
    x, y = pixel
    if jitter is None:
        key = RngKey(pixel_index=y * width + x, sample_index=sample, bounce_counter=0, global_seed=seed)
        jitter = (rng_uniform(key, JITTER_X_DRAW), rng_uniform(key, JITTER_Y_DRAW))
    frame = camera_frame(camera, width, height)
    ox, oy, oz, dx, dy, dz = camera_ray_kernel(frame, width, height, x, y, np.float32(jitter[0]),
                                               np.float32(jitter[1]))
    return Ray(origin=(ox, oy, oz), direction=(dx, dy, dz), t_min=0.0)


def camera_rays_f64(camera, width, height, jx=0.5, jy=0.5):
    """
    Float64 primary rays of every pixel (row-major), for the precision oracle.

    Returns:
        (origins (N, 3), directions (N, 3)) float64.
    """
    forward, right, up = camera.basis()
    tan_y = math.tan(math.radians(float(camera.vfov)) / 2.0)
    tan_x = tan_y * width / height
    xs = (np.arange(width, dtype=np.float64) + jx)
    ys = (np.arange(height, dtype=np.float64) + jy)
    px, py = np.meshgrid(xs, ys)
    sx = (2.0 * px.reshape(-1) / width - 1.0) * tan_x
    sy = (1.0 - 2.0 * py.reshape(-1) / height) * tan_y
    d = forward[None] + sx[:, None] * right[None] + sy[:, None] * up[None]
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    o = np.broadcast_to(camera.position.astype(np.float64), d.shape).copy()
    return o, d
