"""
Tests the path tracer: single bounces, roulette, furnace renders and a
bit-exact comparison against a brute-force integrator
"""

import numpy as np
import pytest
from numba import njit
from numpy import testing

from niftrace.bvh.intersect import intersect_sphere, sphere_geometry, triangle_geometry
from niftrace.bvh.traversal import brute_force_kernel
from niftrace.constants import T_FAR
from niftrace.core.rng import RngKey, philox_uniform
from niftrace.exceptions import ConfigurationError
from niftrace.images import HdrImage
from niftrace.render.camera import camera_frame, camera_ray_kernel
from niftrace.render.environment import ConstantEnvironment, ImageEnvironment, dir_to_uv
from niftrace.render.integrator import (DIELECTRIC, EMISSIVE, PathState, PathStatus, RenderConfig, Renderer, render,
                                        roulette, roulette_kernel, scatter, trace_bounce)
from niftrace.scene.builtin import builtin_scene, empty_scene
from niftrace.training.sampling import bilinear

box = builtin_scene("box")
box_spheres = builtin_scene("box_spheres")
empty = empty_scene()


def test_empty_scene_escapes():
    state = PathState(origin=(0, 0, 0), direction=(0, 0, -1))
    out = trace_bounce(state, empty)
    assert out.status == PathStatus.ESCAPED
    assert out.depth == 1
    testing.assert_array_equal(out.throughput, [1, 1, 1])
    testing.assert_array_equal(out.direction, [0, 0, -1])


def test_emitter_hit_from_below():
    state = PathState(origin=(278, 400, 279.6), direction=(0, 1, 0))
    out = trace_bounce(state, box_spheres)
    assert out.status == PathStatus.TERMINATED
    testing.assert_array_equal(out.radiance, [17, 12, 4])


def test_emitter_back_side_is_dark():
    state = PathState(origin=(278, 548.75, 279.6), direction=(0, -1, 0))
    out = trace_bounce(state, box_spheres)
    assert out.status == PathStatus.TERMINATED
    testing.assert_array_equal(out.radiance, [0, 0, 0])


def test_emission_scaled_by_throughput():
    state = PathState(origin=(278, 400, 279.6), direction=(0, 1, 0), throughput=(0.5, 0.25, 1.0))
    out = trace_bounce(state, box_spheres)
    testing.assert_array_equal(out.radiance, [8.5, 3, 4])


def test_mirror_axial_reflection():
    state = PathState(origin=(540, 100, 350), direction=(-1, 0, 0))
    out = trace_bounce(state, box_spheres)
    assert out.status == PathStatus.ALIVE and out.depth == 1
    testing.assert_allclose(out.direction, [1, 0, 0], atol=1e-6)
    testing.assert_allclose(out.origin, [500, 100, 350], atol=1e-3)
    testing.assert_allclose(out.throughput, [0.95, 0.95, 0.95])


def test_mirror_oblique_reflection():
    d = np.array([-1.0, 0.0, 0.0])
    state = PathState(origin=(540, 150, 350), direction=d)
    out = trace_bounce(state, box_spheres)
    n = (out.origin.astype(np.float64) - [400, 100, 350]) / 100.0
    expected = d - 2 * np.dot(d, n) * n
    testing.assert_allclose(out.direction, expected, atol=1e-5)
    testing.assert_allclose(out.direction, [0.5, np.sqrt(3) / 2, 0], atol=1e-4)


def test_diffuse_floor_bounce():
    state = PathState(origin=(278, 273, 279.6), direction=(0, -1, 0), key=RngKey(pixel_index=3, global_seed=9))
    out = trace_bounce(state, box_spheres)
    assert out.status == PathStatus.ALIVE
    testing.assert_allclose(out.origin[1], 0.0, atol=1e-3)
    assert out.direction[1] > 0
    testing.assert_allclose(np.linalg.norm(out.direction), 1.0, rtol=1e-6)
    testing.assert_allclose(out.throughput, [0.73, 0.73, 0.73])
    assert out.t_min == box_spheres.secondary_t_min()
    assert out.key.bounce_counter == 1


def test_bounce_is_deterministic():
    state = PathState(origin=(278, 273, 279.6), direction=(0, -1, 0), key=RngKey(pixel_index=3, global_seed=9))
    a = trace_bounce(state, box_spheres)
    b = trace_bounce(state, box_spheres)
    testing.assert_array_equal(a.direction, b.direction)
    c = trace_bounce(PathState(origin=(278, 273, 279.6), direction=(0, -1, 0),
                               key=RngKey(pixel_index=4, global_seed=9)), box_spheres)
    assert not np.array_equal(a.direction, c.direction)


def test_max_depth_terminates():
    state = PathState(origin=(278, 273, 279.6), direction=(0, -1, 0), depth=9)
    out = trace_bounce(state, box_spheres, RenderConfig(max_depth=10))
    assert out.status == PathStatus.TERMINATED and out.depth == 10


def test_roulette_before_start_depth():
    state = PathState(origin=(0, 0, 0), direction=(0, 0, 1), throughput=(0.01, 0.01, 0.01), depth=2)
    for u in (0.0, 0.5, 0.999):
        out = roulette(state, u=u)
        assert out.status == PathStatus.ALIVE
        testing.assert_array_equal(out.throughput, state.throughput)


def test_roulette_full_throughput_survives():
    state = PathState(origin=(0, 0, 0), direction=(0, 0, 1), depth=5)
    out = roulette(state, u=0.999)
    assert out.status == PathStatus.ALIVE
    testing.assert_array_equal(out.throughput, [1, 1, 1])


def test_roulette_is_unbiased():
    throughput = np.array([0.3, 0.2, 0.1], dtype=np.float32)
    state = PathState(origin=(0, 0, 0), direction=(0, 0, 1), throughput=throughput, depth=3)
    total = np.zeros(3)
    n = 10000
    for u in (np.arange(n) + 0.5) / n:
        out = roulette(state, u=u)
        if out.status == PathStatus.ALIVE:
            total += out.throughput
    testing.assert_allclose(total / n, throughput, rtol=1e-3)


def test_roulette_uses_keyed_draw():
    state = PathState(origin=(0, 0, 0), direction=(0, 0, 1), throughput=(0.5, 0.5, 0.5), depth=4,
                      key=RngKey(pixel_index=11, global_seed=1))
    assert roulette(state).status == roulette(state).status


def test_render_config_validation():
    with pytest.raises(ConfigurationError):
        RenderConfig(spp=0)
    with pytest.raises(ConfigurationError):
        RenderConfig(max_depth=2, roulette_start_depth=3)
    with pytest.raises(ConfigurationError):
        RenderConfig(workers=-1)
    assert RenderConfig.from_json(RenderConfig(width=8).to_json()).width == 8


@pytest.mark.parametrize("spp", [1, 5])
def test_furnace_constant(spp):
    image = render(empty, RenderConfig(width=16, height=8, spp=spp), ConstantEnvironment(0.5))
    assert image.pixels.dtype == np.float32
    assert image.shape == (8, 16, 3)
    testing.assert_array_equal(image.pixels, 0.5)


def test_furnace_coloured():
    image = render(empty, RenderConfig(width=8, height=8, spp=3, environment="constant:0.1,0.2,0.3"))
    testing.assert_array_equal(image.pixels, np.broadcast_to(np.float32([0.1, 0.2, 0.3]), (8, 8, 3)))


def test_image_environment_through_empty_scene():
    u = (np.arange(32) + 0.5) / 32
    v = (np.arange(16) + 0.5) / 16
    sky = (1.0 + 0.5 * np.cos(2 * np.pi * u)[None, :] * np.sin(np.pi * v)[:, None])[:, :, None] * [1, 1, 1]
    env = ImageEnvironment(HdrImage(sky.astype(np.float32)))
    config = RenderConfig(width=8, height=8, spp=64)
    image = render(empty, config, env)
    frame = camera_frame(empty.camera, 8, 8)
    expected = np.empty((8, 8, 3), dtype=np.float32)
    for y in range(8):
        for x in range(8):
            _, _, _, dx, dy, dz = camera_ray_kernel(frame, 8, 8, x, y, np.float32(0.5), np.float32(0.5))
            uu, vv = dir_to_uv(dx, dy, dz)
            expected[y, x] = bilinear(env.image, [uu], [vv])[0]
    testing.assert_allclose(image.pixels, expected, rtol=0.02)


def test_chunking_and_workers_do_not_change_the_image():
    base = RenderConfig(width=16, height=16, spp=4, environment="constant:0.7")
    reference = render(box_spheres, base)
    for kwargs in (dict(env_batch_chunk=7), dict(workers=1), dict(workers=2, env_batch_chunk=100)):
        other = render(box_spheres, RenderConfig(**{**base.to_dict(), **kwargs}))
        testing.assert_array_equal(other.pixels, reference.pixels)


def test_seed_changes_noise_not_mean():
    a = render(box, RenderConfig(width=24, height=24, spp=32, seed=0, environment="constant:1"))
    b = render(box, RenderConfig(width=24, height=24, spp=32, seed=1, environment="constant:1"))
    assert not np.array_equal(a.pixels, b.pixels)
    testing.assert_allclose(a.pixels.mean(), b.pixels.mean(), rtol=0.1)


def test_renderer_stats():
    renderer = Renderer(empty, RenderConfig(width=4, height=4, spp=3, env_batch_chunk=5))
    renderer.render()
    assert renderer.stats.paths == 48
    assert renderer.stats.escaped_paths == 48
    assert renderer.stats.env_queries == 3 * 4
    assert renderer.stats.max_path_depth == 1


@njit
def oracle_path(frame, width, height, x, y, sample, seed, max_depth, start, eps, tris, tri_material, centres,
                radii, sphere_material, kinds, albedo, emission, ior, env):
    """
    One path with brute-force intersection and the same sampling decisions
    as the renderer. Returns the path's float32 contribution.
    """
    pixel = np.uint64(y * width + x)
    jx = philox_uniform(pixel, sample, np.uint64(0), seed, np.uint64(0))
    jy = philox_uniform(pixel, sample, np.uint64(0), seed, np.uint64(1))
    ox, oy, oz, dx, dy, dz = camera_ray_kernel(frame, width, height, x, y, jx, jy)
    thr = np.ones(3, dtype=np.float32)
    rad = np.zeros(3, dtype=np.float32)
    t_min = np.float32(0.0)
    depth = 0
    while True:
        found, t, prim, b0, b1, b2 = brute_force_kernel(ox, oy, oz, dx, dy, dz, t_min, T_FAR, tris)
        best = t if found else T_FAR
        sphere = -1
        for s in range(radii.shape[0]):
            hit, ts = intersect_sphere(ox, oy, oz, dx, dy, dz, centres, radii, s, t_min, best)
            if hit and ((not found and sphere < 0) or ts < best):
                sphere = s
                best = ts
        bounce = np.uint64(depth + 1)
        depth += 1
        if not found and sphere < 0:
            for c in range(3):
                rad[c] = rad[c] + thr[c] * env[c]
            return rad
        if sphere >= 0:
            px, py, pz, nx, ny, nz = sphere_geometry(ox, oy, oz, dx, dy, dz, best, centres, radii, sphere)
            mat = sphere_material[sphere]
        else:
            px, py, pz, nx, ny, nz = triangle_geometry(tris, prim, b0, b1, b2)
            mat = tri_material[prim]
        if kinds[mat] == EMISSIVE:
            if dx * nx + dy * ny + dz * nz < np.float32(0.0):
                for c in range(3):
                    rad[c] += thr[c] * emission[mat, c]
            return rad
        if depth >= max_depth:
            return rad
        u1 = philox_uniform(pixel, sample, bounce, seed, np.uint64(0))
        u2 = philox_uniform(pixel, sample, bounce, seed, np.uint64(1))
        u3 = np.float32(0.0)
        if kinds[mat] == DIELECTRIC:
            u3 = philox_uniform(pixel, sample, bounce, seed, np.uint64(2))
        wx, wy, wz = scatter(kinds[mat], ior[mat], dx, dy, dz, nx, ny, nz, u1, u2, u3)
        ox, oy, oz = px, py, pz
        dx, dy, dz = wx, wy, wz
        t_min = eps
        tr = thr[0] * albedo[mat, 0]
        tg = thr[1] * albedo[mat, 1]
        tb = thr[2] * albedo[mat, 2]
        u = philox_uniform(pixel, sample, bounce, seed, np.uint64(3))
        survived, tr, tg, tb = roulette_kernel(depth, start, tr, tg, tb, u)
        thr[0] = tr
        thr[1] = tg
        thr[2] = tb
        if not survived:
            return rad


def oracle_render(scene, config, env):
    a = scene.kernel_arrays()
    frame = camera_frame(scene.camera, config.width, config.height)
    env = np.asarray(env, dtype=np.float32)
    acc = np.zeros((config.height, config.width, 3), dtype=np.float64)
    for sample in range(config.spp):
        for y in range(config.height):
            for x in range(config.width):
                acc[y, x] += oracle_path(frame, config.width, config.height, x, y, np.uint64(sample),
                                         np.uint64(config.seed), config.max_depth, config.roulette_start_depth,
                                         a.t_min, a.triangles, a.tri_material, a.centres, a.radii,
                                         a.sphere_material, a.mat_kind, a.mat_albedo, a.mat_emission,
                                         a.mat_ior, env)
    return (acc / config.spp).astype(np.float32)


@pytest.mark.parametrize("scene, size, spp", [(box, 64, 64), (box_spheres, 32, 16)])
def test_matches_brute_force_integrator(scene, size, spp):
    config = RenderConfig(width=size, height=size, spp=spp, seed=5, environment="constant:0.25")
    image = render(scene, config)
    expected = oracle_render(scene, config, [0.25, 0.25, 0.25])
    testing.assert_array_equal(image.pixels, expected)
    assert image.pixels.max() > 0.25
