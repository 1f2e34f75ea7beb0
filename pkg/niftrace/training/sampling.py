"""
Sub-pixel sampling of equirectangular images.

Pixel centres sit at u = (i + 0.5) / W, v = (j + 0.5) / H. Lookups wrap
horizontally (the panorama is periodic in azimuth) and clamp vertically.
"""

import numpy as np
from scipy.ndimage import map_coordinates

from niftrace.exceptions import ConfigurationError
from niftrace.nif.colour import tone_compress


def _pixels(image):
    pixels = getattr(image, "pixels", image)
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.size == 0:
        raise ConfigurationError(f"expected a non-empty (H, W, 3) image, got {pixels.shape}")
    return pixels


def bilinear(image, u, v):
    """
    Bilinear lookup of an HdrImage (or (H, W, 3) array) at normalised
    coordinates, evaluated at float64.

    Returns:
        (N, 3) float32.
    """
    pixels = _pixels(image).astype(np.float64)
    h, w, _ = pixels.shape
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    # one wrapped column on each side carries the azimuthal periodicity
    padded = np.concatenate([pixels[:, -1:], pixels, pixels[:, :1]], axis=1)
    x = np.mod(u * w - 0.5, w) + 1.0
    y = v * h - 0.5
    coords = np.stack([y, x])
    out = np.empty((u.shape[0], 3), dtype=np.float64)
    for c in range(3):
        out[:, c] = map_coordinates(padded[:, :, c], coords, order=1, mode="nearest", prefilter=False)
    return out.astype(np.float32)


def sample_batch(image, n, rng):
    """
    n uniform coordinates and their tone-compressed bilinear targets.

    Args:
        image: HdrImage.
        n: batch size.
        rng: numpy Generator.

    Returns:
        (uv (n, 2) float32, targets (n, 3) float32)
    """
    uv = rng.random((n, 2), dtype=np.float32)
    targets = tone_compress(bilinear(image, uv[:, 0], uv[:, 1]))
    return uv, targets


def eval_grid(width, height):
    """
    (height * width, 2) pixel-centre coordinates in row-major order.
    """
    u = (np.arange(width, dtype=np.float64) + 0.5) / width
    v = (np.arange(height, dtype=np.float64) + 0.5) / height
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu.reshape(-1), vv.reshape(-1)], axis=1).astype(np.float32)


def resample(image, width, height):
    """
    Image bilinearly resampled onto a width x height pixel-centre grid;
    the identity when the sizes match.
    """
    pixels = _pixels(image)
    if pixels.shape[:2] == (height, width):
        return np.array(pixels, dtype=np.float32)
    uv = eval_grid(width, height)
    return bilinear(pixels, uv[:, 0], uv[:, 1]).reshape(height, width, 3)
