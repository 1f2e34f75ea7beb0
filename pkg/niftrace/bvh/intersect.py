"""
Ray-primitive kernels at float32: slab test, watertight triangle test
(after PBRT-v3) and an analytic sphere test.
"""

import math

import numpy as np
from numba import njit

from niftrace.constants import GAMMA3

ZERO = np.float32(0.0)
ONE = np.float32(1.0)
TWO = np.float32(2.0)
THREE = np.float32(3.0)
SLAB_ROBUST = np.float32(1.0 + 2.0 * float(GAMMA3))


def _gamma(n):
    eps = 2.0 ** -24
    return np.float32(n * eps / (1.0 - n * eps))


G3 = _gamma(3)
G5 = _gamma(5)
G2 = _gamma(2)


@njit(cache=True, error_model="numpy")
def _slab_axis(o, inv, lo, hi, t0, t1):
    tn = (lo - o) * inv
    tf = (hi - o) * inv
    if tn > tf:
        tn, tf = tf, tn
    tf = tf * SLAB_ROBUST
    if tn > t0:
        t0 = tn
    if tf < t1:
        t1 = tf
    return t0, t1


@njit(cache=True, error_model="numpy")
def slab_entry(ox, oy, oz, ix, iy, iz, t_min, t_max, lo, hi, node):
    """
    Ray/box overlap over [t_min, t_max] for box `node` of the (N, 3) corner
    arrays. The exit distance is widened by 1 + 2*gamma(3) so rounding in the
    slab distances cannot reject a box that a primitive test would hit.

    Returns:
        (hit, entry distance clamped to t_min)
    """
    t0 = t_min
    t1 = t_max
    t0, t1 = _slab_axis(ox, ix, lo[node, 0], hi[node, 0], t0, t1)
    t0, t1 = _slab_axis(oy, iy, lo[node, 1], hi[node, 1], t0, t1)
    t0, t1 = _slab_axis(oz, iz, lo[node, 2], hi[node, 2], t0, t1)
    return t0 <= t1, t0


@njit(cache=True, error_model="numpy")
def _pick(x, y, z, k):
    if k == 0:
        return x
    if k == 1:
        return y
    return z


@njit(cache=True, error_model="numpy")
def _edge(ax, ay, bx, by):
    e = ax * by - ay * bx
    if e == ZERO:
        e = np.float32(np.float64(ax) * np.float64(by) - np.float64(ay) * np.float64(bx))
    return e


@njit(cache=True, error_model="numpy")
def intersect_triangle(ox, oy, oz, dx, dy, dz, tris, prim, t_max):
    """
    Watertight ray/triangle test.

    Returns:
        (hit, t, b0, b1, b2); t is only meaningful when hit. Accepts
        0 < t <= t_max.
    """
    adx = abs(dx)
    ady = abs(dy)
    adz = abs(dz)
    kz = 0
    if ady > adx:
        kz = 1
        if adz > ady:
            kz = 2
    elif adz > adx:
        kz = 2
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0

    dxp = _pick(dx, dy, dz, kx)
    dyp = _pick(dx, dy, dz, ky)
    dzp = _pick(dx, dy, dz, kz)
    sx = -dxp / dzp
    sy = -dyp / dzp
    sz = ONE / dzp

    # translate to the ray origin, permute and shear
    ax = tris[prim, 0, 0] - ox
    ay = tris[prim, 0, 1] - oy
    az = tris[prim, 0, 2] - oz
    bx = tris[prim, 1, 0] - ox
    by = tris[prim, 1, 1] - oy
    bz = tris[prim, 1, 2] - oz
    cx = tris[prim, 2, 0] - ox
    cy = tris[prim, 2, 1] - oy
    cz = tris[prim, 2, 2] - oz

    p0z = _pick(ax, ay, az, kz)
    p1z = _pick(bx, by, bz, kz)
    p2z = _pick(cx, cy, cz, kz)
    p0x = _pick(ax, ay, az, kx) + sx * p0z
    p0y = _pick(ax, ay, az, ky) + sy * p0z
    p1x = _pick(bx, by, bz, kx) + sx * p1z
    p1y = _pick(bx, by, bz, ky) + sy * p1z
    p2x = _pick(cx, cy, cz, kx) + sx * p2z
    p2y = _pick(cx, cy, cz, ky) + sy * p2z

    e0 = _edge(p1x, p1y, p2x, p2y)
    e1 = _edge(p2x, p2y, p0x, p0y)
    e2 = _edge(p0x, p0y, p1x, p1y)

    if (e0 < ZERO or e1 < ZERO or e2 < ZERO) and (e0 > ZERO or e1 > ZERO or e2 > ZERO):
        return False, ZERO, ZERO, ZERO, ZERO
    det = e0 + e1 + e2
    if det == ZERO:
        return False, ZERO, ZERO, ZERO, ZERO

    p0z = p0z * sz
    p1z = p1z * sz
    p2z = p2z * sz
    t_scaled = e0 * p0z + e1 * p1z + e2 * p2z
    if det < ZERO and (t_scaled >= ZERO or t_scaled < t_max * det):
        return False, ZERO, ZERO, ZERO, ZERO
    if det > ZERO and (t_scaled <= ZERO or t_scaled > t_max * det):
        return False, ZERO, ZERO, ZERO, ZERO

    inv_det = ONE / det
    b0 = e0 * inv_det
    b1 = e1 * inv_det
    b2 = e2 * inv_det
    t = t_scaled * inv_det

    # reject t that is not safely positive given the rounding error bounds
    max_zt = max(abs(p0z), max(abs(p1z), abs(p2z)))
    delta_z = G3 * max_zt
    max_xt = max(abs(p0x), max(abs(p1x), abs(p2x)))
    max_yt = max(abs(p0y), max(abs(p1y), abs(p2y)))
    delta_x = G5 * (max_xt + max_zt)
    delta_y = G5 * (max_yt + max_zt)
    delta_e = TWO * (G2 * max_xt * max_yt + delta_y * max_xt + delta_x * max_yt)
    max_e = max(abs(e0), max(abs(e1), abs(e2)))
    delta_t = THREE * (G3 * max_e * max_zt + delta_e * max_zt + delta_z * max_e) * abs(inv_det)
    if t <= delta_t:
        return False, ZERO, ZERO, ZERO, ZERO
    return True, t, b0, b1, b2


@njit(cache=True, error_model="numpy")
def triangle_geometry(tris, prim, b0, b1, b2):
    """
    Hit point from barycentrics and the unit geometric normal
    cross(p1 - p0, p2 - p0) / |.|.

    Returns:
        (px, py, pz, nx, ny, nz)
    """
    px = b0 * tris[prim, 0, 0] + b1 * tris[prim, 1, 0] + b2 * tris[prim, 2, 0]
    py = b0 * tris[prim, 0, 1] + b1 * tris[prim, 1, 1] + b2 * tris[prim, 2, 1]
    pz = b0 * tris[prim, 0, 2] + b1 * tris[prim, 1, 2] + b2 * tris[prim, 2, 2]
    ux = tris[prim, 1, 0] - tris[prim, 0, 0]
    uy = tris[prim, 1, 1] - tris[prim, 0, 1]
    uz = tris[prim, 1, 2] - tris[prim, 0, 2]
    vx = tris[prim, 2, 0] - tris[prim, 0, 0]
    vy = tris[prim, 2, 1] - tris[prim, 0, 1]
    vz = tris[prim, 2, 2] - tris[prim, 0, 2]
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    inv = ONE / math.sqrt(nx * nx + ny * ny + nz * nz)
    return px, py, pz, nx * inv, ny * inv, nz * inv


@njit(cache=True, error_model="numpy")
def intersect_sphere(ox, oy, oz, dx, dy, dz, centres, radii, s, t_min, t_max):
    """
    Ray/sphere test for a unit direction, using the stable quadratic form.

    Returns:
        (hit, t) with t in (t_min, t_max].
    """
    r = radii[s]
    ocx = ox - centres[s, 0]
    ocy = oy - centres[s, 1]
    ocz = oz - centres[s, 2]
    b = ocx * dx + ocy * dy + ocz * dz
    hx = ocx - b * dx
    hy = ocy - b * dy
    hz = ocz - b * dz
    disc = r * r - (hx * hx + hy * hy + hz * hz)
    if disc < ZERO:
        return False, ZERO
    root = math.sqrt(disc)
    if b > ZERO:
        q = -(b + root)
    else:
        q = root - b
    if q == ZERO:
        return False, ZERO
    c = (ocx * ocx + ocy * ocy + ocz * ocz) - r * r
    t0 = c / q
    t1 = q
    if t0 > t1:
        t0, t1 = t1, t0
    if t0 > t_min and t0 <= t_max:
        return True, t0
    if t1 > t_min and t1 <= t_max:
        return True, t1
    return False, ZERO


@njit(cache=True, error_model="numpy")
def sphere_geometry(ox, oy, oz, dx, dy, dz, t, centres, radii, s):
    """
    Returns:
        (px, py, pz, nx, ny, nz) with the outward unit normal.
    """
    px = ox + t * dx
    py = oy + t * dy
    pz = oz + t * dz
    inv = ONE / radii[s]
    return (px, py, pz, (px - centres[s, 0]) * inv, (py - centres[s, 1]) * inv,
            (pz - centres[s, 2]) * inv)
