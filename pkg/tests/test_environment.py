"""
Tests camera rays, the equirectangular mapping and the environment backends
"""

import math

import numpy as np
import pytest
from numpy import testing

from niftrace.exceptions import ConfigurationError, FormatError
from niftrace.images import HdrImage, write_pfm
from niftrace.nif.network import NifConfig, NifWeights, nif_forward
from niftrace.nif.weights_io import write_nifw
from niftrace.render.camera import camera_ray, camera_rays_f64
from niftrace.render.environment import (ConstantEnvironment, ImageEnvironment, NifEnvironment, as_environment,
                                         dir_to_equirect, equirect_to_dir, parse_environment)
from niftrace.scene.builtin import cornell_camera
from niftrace.scene.scene import Camera

camera = Camera(position=(0, 0, 0), look_at=(0, 0, -1), up=(0, 1, 0), vfov=60)


def test_centre_ray_is_forward():
    ray = camera_ray(camera, 9, 9, (4, 4), 0, jitter=(0.5, 0.5))
    testing.assert_allclose(ray.direction, [0, 0, -1], atol=1e-7)
    ray = camera_ray(cornell_camera(), 9, 9, (4, 4), 0, jitter=(0.5, 0.5))
    testing.assert_allclose(ray.direction, [0, 0, 1], atol=1e-7)
    testing.assert_array_equal(ray.origin, [278, 273, -800])


def test_corner_rays_are_symmetric():
    w, h = 8, 6
    top_left = camera_ray(camera, w, h, (0, 0), 0, jitter=(0.5, 0.5)).direction
    bottom_right = camera_ray(camera, w, h, (w - 1, h - 1), 0, jitter=(0.5, 0.5)).direction
    top_right = camera_ray(camera, w, h, (w - 1, 0), 0, jitter=(0.5, 0.5)).direction
    testing.assert_allclose(top_left[:2], -bottom_right[:2], atol=1e-6)
    testing.assert_allclose(top_left[2], bottom_right[2], atol=1e-6)
    testing.assert_allclose(top_left[0], -top_right[0], atol=1e-6)
    assert top_left[1] > 0 and top_left[0] < 0


def test_vertical_field_of_view():
    top = camera_ray(camera, 1, 1, (0, 0), 0, jitter=(0.5, 0.0)).direction
    testing.assert_allclose(math.degrees(math.atan2(top[1], -top[2])), 30.0, rtol=1e-5)


def test_jitter_is_keyed():
    a = camera_ray(camera, 8, 8, (3, 2), 5, seed=1)
    b = camera_ray(camera, 8, 8, (3, 2), 5, seed=1)
    c = camera_ray(camera, 8, 8, (3, 2), 6, seed=1)
    testing.assert_array_equal(a.direction, b.direction)
    assert not np.array_equal(a.direction, c.direction)


def test_f64_rays_match_f32():
    o, d = camera_rays_f64(camera, 8, 6)
    f32 = camera_ray(camera, 8, 6, (5, 2), 0, jitter=(0.5, 0.5)).direction
    testing.assert_allclose(d[2 * 8 + 5], f32, atol=1e-6)


def test_equirect_poles_and_axes():
    assert dir_to_equirect([0, 1, 0]) == (np.float32(0.5), np.float32(0.0))
    testing.assert_allclose(dir_to_equirect([0, 0, -1]), (0.5, 0.5))
    testing.assert_allclose(dir_to_equirect([1, 0, 0]), (0.75, 0.5))
    testing.assert_allclose(dir_to_equirect([-1, 0, 0]), (0.25, 0.5))
    u, v = dir_to_equirect([0, -1, 0])
    assert u == np.float32(0.5) and v < 1


def test_equirect_range():
    d = np.random.default_rng(0).normal(size=(5000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    uv = dir_to_equirect(d)
    assert uv.dtype == np.float32 and uv.shape == (5000, 2)
    assert np.all((uv >= 0) & (uv < 1))
    testing.assert_allclose(equirect_to_dir(uv[:, 0], uv[:, 1]), d, atol=1e-5)


def test_behind_camera_wraps():
    u, v = dir_to_equirect([-1e-9, 0, 1])
    assert 0 <= u < 1
    u2, _ = dir_to_equirect([1e-9, 0, 1])
    assert u2 < 0.01 or u2 > 0.99


def test_constant_environment():
    env = ConstantEnvironment(0.5)
    out = env.radiance(np.zeros((4, 2), np.float32))
    testing.assert_array_equal(out, 0.5)
    with pytest.raises(ConfigurationError):
        ConstantEnvironment(-1)


def test_parse_specs(tmp_path):
    env = parse_environment("constant:0.1,0.2,0.3")
    testing.assert_allclose(env.rgb, [0.1, 0.2, 0.3])
    testing.assert_array_equal(parse_environment("constant:2").rgb, [2, 2, 2])
    with pytest.raises(ConfigurationError):
        parse_environment("constant:1,2")
    with pytest.raises(ConfigurationError):
        parse_environment("sky:blue")
    with pytest.raises(FormatError):
        parse_environment("image:" + str(tmp_path / "x.exr"))

    image = HdrImage.constant(8, 4, (1, 2, 3))
    write_pfm(tmp_path / "env.pfm", image)
    env = parse_environment("image:" + str(tmp_path / "env.pfm"))
    assert isinstance(env, ImageEnvironment)
    testing.assert_allclose(env.radiance(np.float32([[0.3, 0.7]])), [[1, 2, 3]])
    assert isinstance(parse_environment(str(tmp_path / "env.pfm")), ImageEnvironment)

    config = NifConfig(hidden=16, layers=2, fourier_dim=8)
    weights = NifWeights.he_uniform(config, np.random.default_rng(0))
    write_nifw(tmp_path / "env.nifw", weights)
    env = parse_environment(str(tmp_path / "env.nifw"))
    assert isinstance(env, NifEnvironment)
    assert env.describe() == "nif:env.nifw"
    uv = np.random.default_rng(1).random((10, 2)).astype(np.float32)
    testing.assert_array_equal(env.radiance(uv), nif_forward(weights, config, uv))


def test_as_environment():
    image = HdrImage.constant(4, 2, (1, 1, 1))
    assert isinstance(as_environment(image), ImageEnvironment)
    env = ConstantEnvironment(1)
    assert as_environment(env) is env
