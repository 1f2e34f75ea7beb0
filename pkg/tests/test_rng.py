"""
Tests the counter-based random streams
"""

import numpy as np
import pytest
from numpy import testing

from niftrace.core.rng import RngKey, rng_uniform, rng_uniform_many
from niftrace.exceptions import DomainError

key = RngKey(pixel_index=1234, sample_index=7, bounce_counter=2, global_seed=42)


def test_purity():
    assert rng_uniform(key, 3) == rng_uniform(key, 3)
    assert rng_uniform(RngKey(1234, 7, 2, 42), 3) == rng_uniform(key, 3)


def test_range_and_dtype():
    draws = rng_uniform_many(key, np.arange(10000))
    assert draws.dtype == np.float32
    assert np.all(draws >= 0) and np.all(draws < 1)


def test_many_matches_scalar():
    draws = rng_uniform_many(key, np.arange(20))
    testing.assert_array_equal(draws, [rng_uniform(key, i) for i in range(20)])


def test_mean():
    draws = rng_uniform_many(key, np.arange(1_000_000))
    testing.assert_allclose(draws.astype(np.float64).mean(), 0.5, atol=0.002)


@pytest.mark.parametrize("field", ["pixel_index", "sample_index", "bounce_counter", "global_seed"])
def test_every_key_field_changes_the_stream(field):
    other = RngKey(**{**key.__dict__, field: getattr(key, field) + 1})
    a = rng_uniform_many(key, np.arange(8))
    b = rng_uniform_many(other, np.arange(8))
    assert not np.array_equal(a, b)


def test_large_pixel_and_seed():
    big = RngKey(pixel_index=2 ** 40 + 5, global_seed=2 ** 63 + 11)
    assert rng_uniform(big, 0) != rng_uniform(RngKey(pixel_index=5, global_seed=2 ** 63 + 11), 0)


def test_at_bounce():
    assert key.at_bounce(5).bounce_counter == 5
    assert key.at_bounce(5).pixel_index == key.pixel_index


def test_key_range():
    with pytest.raises(DomainError):
        RngKey(sample_index=2 ** 32)
    with pytest.raises(DomainError):
        RngKey(pixel_index=-1)
    with pytest.raises(DomainError):
        rng_uniform(key, -1)
