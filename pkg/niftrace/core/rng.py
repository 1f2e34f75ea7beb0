"""
Counter-based random numbers.

Every draw is a pure function of (pixel index, sample index, bounce counter,
global seed, draw index), computed with the Philox4x32-10 bijection, so the
same key gives the same stream no matter which worker evaluates it or in
which order.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from niftrace.exceptions import DomainError

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)
SHIFT8 = np.uint64(8)
INV_2_24 = np.float32(2.0 ** -24)

U32_MAX = 2 ** 32 - 1
U64_MAX = 2 ** 64 - 1


@njit(cache=True, error_model="numpy")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """
    Ten rounds of Philox4x32 on a 128-bit counter with a 64-bit key.
    All arguments are uint64 holding 32-bit words.
    """
    x0 = c0 & MASK32
    x1 = c1 & MASK32
    x2 = c2 & MASK32
    x3 = c3 & MASK32
    y0 = k0 & MASK32
    y1 = k1 & MASK32
    for _ in range(10):
        p0 = PHILOX_M0 * x0
        p1 = PHILOX_M1 * x2
        x0 = ((p1 >> SHIFT32) ^ x1 ^ y0) & MASK32
        x1 = p1 & MASK32
        x2 = ((p0 >> SHIFT32) ^ x3 ^ y1) & MASK32
        x3 = p0 & MASK32
        y0 = (y0 + PHILOX_W0) & MASK32
        y1 = (y1 + PHILOX_W1) & MASK32
    return x0, x1, x2, x3


@njit(cache=True, error_model="numpy")
def philox_uniform(pixel_index, sample_index, bounce_counter, global_seed, draw_index):
    """
    Uniform float32 in [0, 1) for one key and draw index. Integer arguments
    must be uint64 (the Python wrappers take care of that).
    """
    r0, _, _, _ = philox4x32(draw_index, bounce_counter, sample_index,
                             pixel_index & MASK32,
                             (global_seed & MASK32) ^ (pixel_index >> SHIFT32),
                             global_seed >> SHIFT32)
    return np.float32(r0 >> SHIFT8) * INV_2_24


@njit(cache=True, error_model="numpy")
def philox_uniform_many(pixel_index, sample_index, bounce_counter, global_seed, draw_indices):
    out = np.empty(draw_indices.shape[0], dtype=np.float32)
    for i in range(draw_indices.shape[0]):
        out[i] = philox_uniform(pixel_index, sample_index, bounce_counter, global_seed,
                                np.uint64(draw_indices[i]))
    return out


@dataclass(frozen=True)
class RngKey:
    """
    Key of a counter-based random stream.

    Args:
        pixel_index: u64 linear pixel index.
        sample_index: u32 sample number within the pixel.
        bounce_counter: u32 path vertex counter.
        global_seed: u64 render or training seed.
    """
    pixel_index: int = 0
    sample_index: int = 0
    bounce_counter: int = 0
    global_seed: int = 0

    def __post_init__(self):
        for name, limit in (("pixel_index", U64_MAX), ("sample_index", U32_MAX),
                            ("bounce_counter", U32_MAX), ("global_seed", U64_MAX)):
            value = int(getattr(self, name))
            if value < 0 or value > limit:
                raise DomainError(f"RngKey.{name} out of range: {value}")

    def at_bounce(self, bounce_counter):
        return replace(self, bounce_counter=bounce_counter)

    def words(self):
        """
        The key fields as uint64 scalars, ready for the jitted kernels.
        """
        return (np.uint64(self.pixel_index), np.uint64(self.sample_index),
                np.uint64(self.bounce_counter), np.uint64(self.global_seed))


def rng_uniform(key, draw_index):
    """
    Draw number `draw_index` of the stream identified by `key`.

    Returns:
        float32 in [0, 1).
    """
    if draw_index < 0 or draw_index > U32_MAX:
        raise DomainError(f"draw_index out of range: {draw_index}")
    pixel, sample, bounce, seed = key.words()
    return philox_uniform(pixel, sample, bounce, seed, np.uint64(draw_index))


def rng_uniform_many(key, draw_indices):
    """
    Vectorised rng_uniform over an array of draw indices.
    """
    indices = np.ascontiguousarray(draw_indices, dtype=np.uint64)
    pixel, sample, bounce, seed = key.words()
    return philox_uniform_many(pixel, sample, bounce, seed, indices)
