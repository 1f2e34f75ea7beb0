"""
Half-precision casts with directed and stochastic rounding.

The casts operate on scalars or numpy arrays. Scalars come back as numpy
scalars, arrays as arrays of the same shape.
"""

import numpy as np

from niftrace.constants import F16_MAX
from niftrace.exceptions import DomainError

_F16_INF = np.float16(np.inf)


def _unwrap(values, scalar):
    if scalar:
        return values[()]
    return values


def f16_cast_not_lower(x):
    """
    Round-to-nearest-not-lower cast from float32 to float16.

    Rounds to nearest (ties to even) and bumps the result one ULP upwards when
    the nearest half value lies below the input, so the widened result is never
    smaller than x.

    Args:
        x: non-negative finite float32 value(s), at most 65504.

    Returns:
        float16 value(s) h with f16_to_f32(h) >= x.
    """
    values = np.asarray(x, dtype=np.float32)
    if np.any(np.isnan(values)) or np.any(np.isinf(values)):
        raise DomainError("f16_cast_not_lower: input must be finite")
    if np.any(values < 0):
        raise DomainError("f16_cast_not_lower: input must be non-negative")
    if np.any(values > F16_MAX):
        raise DomainError(f"f16_cast_not_lower: input exceeds the largest finite half ({F16_MAX})")
    nearest = values.astype(np.float16)
    below = nearest.astype(np.float32) < values
    result = np.where(below, np.nextafter(nearest, _F16_INF), nearest).astype(np.float16)
    return _unwrap(result, values.ndim == 0)


def f16_to_f32(x):
    """
    Exact widening of float16 values to float32.
    """
    values = np.asarray(x, dtype=np.float16)
    return _unwrap(values.astype(np.float32), values.ndim == 0)


def f16_neighbours(x):
    """
    The two float16 values bracketing x (equal when x is representable).

    Returns:
        (lower, upper) as float16 arrays.
    """
    values = np.asarray(x, dtype=np.float32)
    nearest = values.astype(np.float16)
    wide = nearest.astype(np.float32)
    lower = np.where(wide > values, np.nextafter(nearest, -_F16_INF), nearest).astype(np.float16)
    upper = np.where(wide < values, np.nextafter(nearest, _F16_INF), nearest).astype(np.float16)
    return lower, upper


def stochastic_round_f16(x, u):
    """
    Stochastic rounding from float32 to float16.

    The upper neighbour is returned with probability equal to the fractional
    position of x between its two neighbours: upper when u >= 1 - frac. At the
    exact midpoint this gives the lower value for u < 0.5 and the upper one
    otherwise.

    Args:
        x: float32 value(s), |x| <= 65504.
        u: uniform draw(s) in [0, 1), broadcastable against x.

    Returns:
        float16 value(s).
    """
    values = np.asarray(x, dtype=np.float32)
    draws = np.asarray(u, dtype=np.float64)
    if np.any(np.isnan(values)):
        raise DomainError("stochastic_round_f16: NaN input")
    if np.any(np.abs(values) > F16_MAX):
        raise DomainError(f"stochastic_round_f16: |x| exceeds {F16_MAX}")
    lower, upper = f16_neighbours(values)
    lo = lower.astype(np.float64)
    gap = upper.astype(np.float64) - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(gap > 0, (values.astype(np.float64) - lo) / np.where(gap > 0, gap, 1.0), 0.0)
    take_upper = (gap > 0) & (draws >= 1.0 - frac)
    result = np.where(take_upper, upper, lower).astype(np.float16)
    return _unwrap(result, values.ndim == 0 and draws.ndim == 0)


def quantise_f16_stochastic(x, rng):
    """
    Stochastically rounds an array to float16 values, returned widened to float32.

    Args:
        x: float32 array.
        rng: numpy Generator supplying the uniform draws.
    """
    values = np.asarray(x, dtype=np.float32)
    draws = rng.random(values.shape)
    return stochastic_round_f16(values, draws).astype(np.float32)
