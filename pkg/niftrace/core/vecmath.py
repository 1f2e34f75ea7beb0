"""
Jitted three-component vector helpers. Vectors travel as scalar triples so
the kernels never allocate; the arithmetic stays in the precision of the
arguments (float32 constants do not widen float32 inputs).
"""

import math

import numpy as np
from numba import njit

ZERO = np.float32(0.0)
ONE = np.float32(1.0)
TWO = np.float32(2.0)
HALF = np.float32(0.5)
TWO_PI = np.float32(2.0 * np.pi)


@njit(cache=True, error_model="numpy")
def dot3(ax, ay, az, bx, by, bz):
    return ax * bx + ay * by + az * bz


@njit(cache=True, error_model="numpy")
def cross3(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True, error_model="numpy")
def length3(x, y, z):
    return math.sqrt(x * x + y * y + z * z)


@njit(cache=True, error_model="numpy")
def normalize3(x, y, z):
    inv = ONE / math.sqrt(x * x + y * y + z * z)
    return x * inv, y * inv, z * inv


@njit(cache=True, error_model="numpy")
def reflect3(dx, dy, dz, nx, ny, nz):
    k = TWO * (dx * nx + dy * ny + dz * nz)
    return dx - k * nx, dy - k * ny, dz - k * nz


@njit(cache=True, error_model="numpy")
def orthonormal_basis(nx, ny, nz):
    """
    Tangent frame around a unit normal (Duff et al., branchless up to the sign).

    Returns:
        (tx, ty, tz, bx, by, bz)
    """
    sign = ONE if nz >= ZERO else -ONE
    a = -ONE / (sign + nz)
    b = nx * ny * a
    return (ONE + sign * nx * nx * a, sign * b, -sign * nx,
            b, sign + ny * ny * a, -ny)
