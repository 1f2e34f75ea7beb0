"""
Primary-ray AOVs (hit points and geometric normals) from the float32
production kernels, compared against a float64 re-implementation of the
same intersection routines.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit, prange

from niftrace.constants import T_FAR
from niftrace.exceptions import ConfigurationError
from niftrace.render.camera import camera_frame, camera_ray_kernel, camera_rays_f64
from niftrace.render.integrator import HIT_NONE, HIT_SPHERE, HIT_TRIANGLE, intersect_scene

logger = logging.getLogger(__name__)

KERNELS = ("f32", "f64")


@dataclass
class Aovs:
    """
    Per-pixel primary hit record; kind is 0 for a miss, 1 for a triangle,
    2 for a sphere.
    """
    kind: np.ndarray
    index: np.ndarray
    points: np.ndarray
    normals: np.ndarray

    @property
    def hit(self):
        return self.kind != HIT_NONE


@dataclass
class AovReport:
    """
    Worst-component mean squared errors over pixels where both runs hit the
    same primitive, and counts of the pixels left out.
    """
    normal_mse: float
    hit_mse: float
    pixels: int
    compared: int
    primitive_mismatches: int
    hit_mismatches: int

    def as_dict(self):
        return asdict(self)

    @property
    def outlier_fraction(self):
        return (self.primitive_mismatches + self.hit_mismatches) / max(self.pixels, 1)


@njit(parallel=True, cache=True, error_model="numpy")
def _primary_f32(frame, width, height, lo, hi, offset, count, tree_depth, tris, centres, radii,
                 out_kind, out_index, out_points, out_normals):
    half = np.float32(0.5)
    for p in prange(width * height):
        stack = np.empty(tree_depth + 1, dtype=np.int64)
        stack_t = np.empty(tree_depth + 1, dtype=np.float32)
        ox, oy, oz, dx, dy, dz = camera_ray_kernel(frame, width, height, p % width, p // width, half, half)
        kind, index, t, px, py, pz, nx, ny, nz = intersect_scene(
            ox, oy, oz, dx, dy, dz, np.float32(0.0), T_FAR, lo, hi, offset, count, tris, centres, radii,
            stack, stack_t)
        out_kind[p] = kind
        out_index[p] = index
        out_points[p, 0] = px
        out_points[p, 1] = py
        out_points[p, 2] = pz
        out_normals[p, 0] = nx
        out_normals[p, 1] = ny
        out_normals[p, 2] = nz


def primary_aovs_f32(scene, width, height):
    a = scene.kernel_arrays()
    n = width * height
    kind = np.empty(n, dtype=np.int64)
    index = np.empty(n, dtype=np.int64)
    points = np.empty((n, 3), dtype=np.float32)
    normals = np.empty((n, 3), dtype=np.float32)
    _primary_f32(camera_frame(scene.camera, width, height), width, height, a.lo, a.hi, a.offset, a.count,
                 a.depth, a.triangles, a.centres, a.radii, kind, index, points, normals)
    return Aovs(kind, index, points.astype(np.float64), normals.astype(np.float64))


def _watertight_f64(o, d, tri):
    """
    Watertight test of every ray against one triangle at float64.

    Returns:
        (t, b0, b1, b2) with t = inf on a miss.
    """
    n = o.shape[0]
    rows = np.arange(n)
    kz = np.argmax(np.abs(d), axis=1)
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    dz = d[rows, kz]
    sx = -d[rows, kx] / dz
    sy = -d[rows, ky] / dz
    sz = 1.0 / dz
    px, py, pz = [], [], []
    for k in range(3):
        p = tri[k][None, :] - o
        z = p[rows, kz]
        px.append(p[rows, kx] + sx * z)
        py.append(p[rows, ky] + sy * z)
        pz.append(z * sz)
    e0 = px[1] * py[2] - py[1] * px[2]
    e1 = px[2] * py[0] - py[2] * px[0]
    e2 = px[0] * py[1] - py[0] * px[1]
    det = e0 + e1 + e2
    mixed = ((e0 < 0) | (e1 < 0) | (e2 < 0)) & ((e0 > 0) | (e1 > 0) | (e2 > 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (e0 * pz[0] + e1 * pz[1] + e2 * pz[2]) / det
        b0, b1, b2 = e0 / det, e1 / det, e2 / det
    ok = ~mixed & (det != 0) & (t > 0)
    return np.where(ok, t, np.inf), b0, b1, b2


def _sphere_f64(o, d, centre, radius):
    oc = o - centre[None, :]
    b = np.einsum("ij,ij->i", oc, d)
    h = oc - b[:, None] * d
    disc = radius * radius - np.einsum("ij,ij->i", h, h)
    root = np.sqrt(np.maximum(disc, 0.0))
    q = np.where(b > 0, -(b + root), root - b)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = c / q
    t1 = q
    near = np.minimum(t0, t1)
    far = np.maximum(t0, t1)
    t = np.where(near > 0, near, np.where(far > 0, far, np.inf))
    return np.where((disc >= 0) & (q != 0), t, np.inf)


def primary_aovs_f64(scene, width, height):
    """
    Float64 oracle: brute force over every triangle and sphere.
    """
    o, d = camera_rays_f64(scene.camera, width, height)
    n = o.shape[0]
    best = np.full(n, np.inf)
    kind = np.full(n, HIT_NONE, dtype=np.int64)
    index = np.full(n, -1, dtype=np.int64)
    points = np.zeros((n, 3))
    normals = np.zeros((n, 3))
    tris = scene.triangles.astype(np.float64)
    for k in range(tris.shape[0]):
        t, b0, b1, b2 = _watertight_f64(o, d, tris[k])
        closer = t < best
        if not np.any(closer):
            continue
        best[closer] = t[closer]
        kind[closer] = HIT_TRIANGLE
        index[closer] = k
        points[closer] = (b0[closer, None] * tris[k, 0] + b1[closer, None] * tris[k, 1]
                          + b2[closer, None] * tris[k, 2])
        nrm = np.cross(tris[k, 1] - tris[k, 0], tris[k, 2] - tris[k, 0])
        normals[closer] = nrm / np.linalg.norm(nrm)
    centres = scene.centres.astype(np.float64)
    radii = scene.radii.astype(np.float64)
    for s in range(radii.shape[0]):
        t = _sphere_f64(o, d, centres[s], radii[s])
        closer = t < best
        if not np.any(closer):
            continue
        best[closer] = t[closer]
        kind[closer] = HIT_SPHERE
        index[closer] = s
        p = o[closer] + t[closer, None] * d[closer]
        points[closer] = p
        normals[closer] = (p - centres[s]) / radii[s]
    return Aovs(kind, index, points, normals)


def compute_aovs(scene, width, height, kernel):
    if kernel == "f32":
        return primary_aovs_f32(scene, width, height)
    if kernel == "f64":
        return primary_aovs_f64(scene, width, height)
    raise ConfigurationError(f"unknown AOV kernel {kernel!r}; choose from {KERNELS}")


def compare_aov(scene, width, height=None, kernels=("f32", "f64")):
    """
    Casts one primary ray through every pixel centre with two kernels and
    compares normals and hit points.

    Returns:
        AovReport.
    """
    height = height or width
    first = compute_aovs(scene, width, height, kernels[0])
    second = compute_aovs(scene, width, height, kernels[1])
    both = first.hit & second.hit
    same = both & (first.kind == second.kind) & (first.index == second.index)
    if np.any(same):
        normal_mse = float(np.max(np.mean((first.normals[same] - second.normals[same]) ** 2, axis=0)))
        hit_mse = float(np.max(np.mean((first.points[same] - second.points[same]) ** 2, axis=0)))
    else:
        normal_mse = hit_mse = 0.0
    report = AovReport(normal_mse=normal_mse, hit_mse=hit_mse, pixels=width * height, compared=int(same.sum()),
                       primitive_mismatches=int((both & ~same).sum()),
                       hit_mismatches=int((first.hit != second.hit).sum()))
    logger.info("AOV %s vs %s on %s: normal MSE %.3e, hit MSE %.3e, %d primitive and %d hit mismatches",
                kernels[0], kernels[1], scene.name, normal_mse, hit_mse, report.primitive_mismatches,
                report.hit_mismatches)
    return report
