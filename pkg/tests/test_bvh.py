"""
Tests the BVH builder, the compact node layout and traversal
"""

import numpy as np
import pytest
from numpy import testing

from niftrace.bvh import builder, compact
from niftrace.bvh.traversal import Ray, TraversalStats, brute_force_many, intersect_slab, traverse, traverse_many
from niftrace.exceptions import DomainError
from niftrace.scene.builtin import builtin_scene


def random_soup(n, seed=0, size=10.0):
    rng = np.random.default_rng(seed)
    centres = rng.random((n, 1, 3)) * size
    return (centres + rng.normal(scale=0.5, size=(n, 3, 3))).astype(np.float32)


def random_rays(n, seed=1, size=10.0):
    rng = np.random.default_rng(seed)
    origins = rng.random((n, 3)) * 2 * size - 0.5 * size
    targets = rng.random((n, 3)) * size
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origins.astype(np.float32), dirs.astype(np.float32)


tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], dtype=np.float32)
soup = random_soup(300)
tree, order = builder.build_bvh2(soup)
leaf_soup = soup[order]
nodes = compact.compact(tree)


def test_single_triangle():
    t, order = builder.build_bvh2(tri)
    assert t.node_count == 1
    assert t.prim_count[0] == 1
    testing.assert_array_equal(order, [0])


def test_two_disjoint_triangles():
    t, order = builder.build_bvh2(np.concatenate([tri, tri + 5]))
    assert t.node_count == 3
    assert t.prim_count[0] == 0
    testing.assert_array_equal(t.prim_count[1:], [1, 1])
    assert t.right[0] == 2
    assert sorted(order.tolist()) == [0, 1]


def test_empty_input():
    with pytest.raises(DomainError):
        builder.build_bvh2(np.zeros((0, 3, 3), dtype=np.float32))


def test_leaf_size():
    t, order = builder.build_bvh2(soup, max_leaf_size=4)
    assert t.prim_count.max() <= 4
    assert sorted(order.tolist()) == list(range(len(soup)))
    compact.validate_nodes(compact.compact(t), len(soup), max_leaf_size=4)


def test_parent_boxes_contain_children():
    for i in np.flatnonzero(tree.prim_count == 0):
        parent = tree.aabb(i)
        assert parent.contains(tree.aabb(i + 1))
        assert parent.contains(tree.aabb(tree.right[i]))


def test_compact_size():
    assert compact.COMPACT_NODE_DTYPE.itemsize == 24
    assert compact.NODE32_DTYPE.itemsize == 32
    assert nodes.nbytes == 24 * tree.node_count
    assert compact.node32(tree).nbytes == 32 * tree.node_count


def test_compact_is_conservative():
    lo, hi = compact.decode(nodes)
    assert np.all(lo <= tree.lo)
    assert np.all(hi >= tree.hi)
    testing.assert_array_equal(lo, tree.lo)


def test_exact_extent_decodes_exactly():
    t = builder.Bvh2(lo=np.array([[1.0, 2.0, 3.0]], dtype=np.float32),
                     hi=np.array([[1.5, 6.0, 3.25]], dtype=np.float32),
                     right=np.array([-1]), prim_offset=np.array([0]), prim_count=np.array([1]),
                     prim_order=np.array([0]))
    lo, hi = compact.decode(compact.compact(t))
    testing.assert_array_equal(hi[0], [1.5, 6.0, 3.25])


def test_extent_overflow():
    with pytest.raises(DomainError):
        compact.conservative_extent(np.zeros((1, 3), np.float32), np.array([[7e4, 1, 1]], np.float32))


def test_validate_nodes():
    assert compact.validate_nodes(nodes, len(soup), max_leaf_size=1)
    broken = nodes.copy()
    broken["offset"][np.flatnonzero(broken["prim_count"])[0]] = len(soup) + 3
    with pytest.raises(DomainError):
        compact.validate_nodes(broken, len(soup))


def test_to_bvh2_keeps_topology():
    back = compact.to_bvh2(nodes)
    testing.assert_array_equal(back.right, tree.right)
    testing.assert_array_equal(back.prim_count, tree.prim_count)
    assert back.depth() == tree.depth()


box_node = compact.CompactBvhNode(origin=np.array([1.0, -0.5, -0.5], dtype=np.float32),
                                  extent=np.array([1.0, 1.0, 1.0], dtype=np.float16),
                                  right_child_or_prim_offset=0, prim_count=1)


def test_slab_hit():
    ray = Ray(origin=[0, 0, 0], direction=[1, 0, 0])
    testing.assert_allclose(intersect_slab(ray, box_node), 1.0)


def test_slab_miss():
    ray = Ray(origin=[0, 0, 0], direction=[-1, 0, 0])
    assert intersect_slab(ray, box_node) is None


def test_slab_inside():
    ray = Ray(origin=[1.5, 0, 0], direction=[0, 1, 0], t_min=0.25)
    testing.assert_allclose(intersect_slab(ray, box_node), 0.25)


def test_traverse_misses_root():
    stats = TraversalStats()
    ray = Ray(origin=[-100, -100, -100], direction=[-1, 0, 0])
    assert traverse(ray, nodes, leaf_soup, stats) is None
    assert stats.prim_tests == 0


def test_traverse_matches_brute_force():
    origins, dirs = random_rays(2000)
    fast = traverse_many(origins, dirs, nodes, leaf_soup)
    slow = brute_force_many(origins, dirs, leaf_soup)
    assert fast.hit.sum() > 100
    testing.assert_array_equal(fast.prim, slow.prim)
    testing.assert_array_equal(fast.t[fast.hit], slow.t[slow.hit])


def test_compact_matches_float32_layout():
    origins, dirs = random_rays(1000, seed=4)
    a = traverse_many(origins, dirs, nodes, leaf_soup)
    b = traverse_many(origins, dirs, compact.node32(tree), leaf_soup)
    testing.assert_array_equal(a.prim, b.prim)
    testing.assert_array_equal(a.t, b.t)
    assert a.visits.sum() >= b.visits.sum()


def test_traverse_single_matches_batch():
    origins, dirs = random_rays(50, seed=7)
    batch = traverse_many(origins, dirs, nodes, leaf_soup)
    for i in range(50):
        hit = traverse(Ray(origins[i], dirs[i]), nodes, leaf_soup)
        if batch.hit[i]:
            assert hit.prim_index == batch.prim[i]
            assert hit.t == batch.t[i]
        else:
            assert hit is None


def test_coincident_triangles_pick_smallest_index():
    pair = np.concatenate([tri, tri])
    t, order = builder.build_bvh2(pair)
    ray = Ray(origin=[0.2, 0.2, 1.0], direction=[0, 0, -1])
    hit = traverse(ray, compact.compact(t), pair[order])
    assert hit.prim_index == 0
    testing.assert_allclose(hit.t, 1.0)


def test_hit_geometry():
    ray = Ray(origin=[0.25, 0.25, 2.0], direction=[0, 0, -1])
    hit = traverse(ray, compact.compact(builder.build_bvh2(tri)[0]), tri)
    testing.assert_allclose(hit.hit_point, [0.25, 0.25, 0.0], atol=1e-6)
    testing.assert_allclose(np.abs(hit.normal), [0, 0, 1], atol=1e-6)
    testing.assert_allclose(hit.barycentric, [0.25, 0.25], atol=1e-6)


def test_centre_ray_hits_back_wall():
    scene = builtin_scene("box_spheres")
    tris = scene.triangles
    ray = Ray(origin=scene.camera.position, direction=[0, 0, 1])
    hit = traverse(ray, scene.nodes, tris)
    slow = brute_force_many(ray.origin[None], ray.direction[None], tris)
    assert hit.prim_index == slow.prim[0]
    testing.assert_allclose(hit.hit_point[2], 559.2, rtol=1e-5)
    testing.assert_allclose(hit.t, 1359.2, rtol=1e-5)


def test_compact_is_conservative_over_many_rays():
    origins, dirs = random_rays(100_000, seed=5)
    a = traverse_many(origins, dirs, nodes, leaf_soup)
    b = traverse_many(origins, dirs, compact.node32(tree), leaf_soup)
    slow = brute_force_many(origins, dirs, leaf_soup)
    assert a.hit.sum() > 10_000
    # a float16 box that clipped geometry would lose hits the exact boxes find
    assert np.count_nonzero(a.prim != slow.prim) == 0
    assert np.count_nonzero(a.prim != b.prim) == 0
    testing.assert_array_equal(a.t, b.t)


def scene_rays(scene, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = scene.bounds()
    size = np.maximum(hi - lo, 1e-3)
    origins = lo - 0.25 * size + rng.random((n, 3)) * 1.5 * size
    targets = lo + rng.random((n, 3)) * size
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origins.astype(np.float32), dirs.astype(np.float32)


@pytest.mark.parametrize("name", ["box", "box_spheres", "spheres"])
def test_builtin_scene_compact_against_float32_layout(name):
    scene = builtin_scene(name)
    rebuilt, rebuilt_order = builder.build_bvh2(scene.triangles)
    tris = scene.triangles[rebuilt_order]
    small, wide = compact.compact(rebuilt), compact.node32(rebuilt)
    assert small.nbytes * 4 == wide.nbytes * 3
    assert scene.bvh_bytes == scene.nodes.nbytes == 24 * len(scene.nodes)
    assert scene.nodes.nbytes * 4 == len(scene.nodes) * compact.NODE32_DTYPE.itemsize * 3

    origins, dirs = scene_rays(scene, 100_000)
    a = traverse_many(origins, dirs, small, tris)
    b = traverse_many(origins, dirs, wide, tris)
    assert np.count_nonzero(a.prim != b.prim) == 0
    testing.assert_array_equal(a.t, b.t)
    assert a.visits.sum() <= 1.02 * b.visits.sum()
