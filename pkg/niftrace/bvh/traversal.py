"""
Traversal of the pointer-less node arrays.

The kernels consume decoded float32 corner arrays, so the same code walks the
compact 24-byte layout and the 32-byte float32 layout; only the decoded boxes
differ. Nearest-hit ties are broken towards the lower primitive index, which
makes the result independent of the visiting order.
"""

from dataclasses import dataclass, field
import numpy as np
from numba import njit, prange

from niftrace.bvh.compact import CompactBvhNode, kernel_arrays
from niftrace.bvh.intersect import intersect_triangle, slab_entry, triangle_geometry
from niftrace.constants import T_FAR
from niftrace.exceptions import DomainError

ZERO = np.float32(0.0)
ONE = np.float32(1.0)


@dataclass
class Ray:
    """
    Ray with a unit direction and a parametric interval (t_min, t_max].
    """
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = float(T_FAR)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float32).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float32).reshape(3)
        self.t_min = np.float32(self.t_min)
        self.t_max = np.float32(self.t_max)

    @property
    def inv_dir(self):
        with np.errstate(divide="ignore"):
            return (np.float32(1.0) / self.direction).astype(np.float32)


@dataclass
class Hit:
    """
    Nearest intersection.

    Args:
        t: ray parameter.
        prim_index: primitive index in the array that was traversed.
        barycentric: (b1, b2) weights of the second and third vertex.
        hit_point: position in scene units.
        normal: unit geometric normal.
    """
    t: float
    prim_index: int
    barycentric: tuple
    hit_point: np.ndarray
    normal: np.ndarray


@dataclass
class TraversalStats:
    node_visits: int = 0
    prim_tests: int = 0


@dataclass
class BatchHits:
    """
    Column arrays of a batched traversal; prim is -1 on a miss.
    """
    t: np.ndarray
    prim: np.ndarray
    bary: np.ndarray
    visits: np.ndarray = field(default=None)
    tests: np.ndarray = field(default=None)

    @property
    def hit(self):
        return self.prim >= 0


@njit(cache=True, error_model="numpy")
def traverse_kernel(ox, oy, oz, dx, dy, dz, t_min, t_max, lo, hi, offset, count, tris,
                    stack, stack_t):
    """
    Closest hit through a depth-first node array.

    Returns:
        (found, t, prim, b0, b1, b2, node visits, primitive tests)
    """
    best_t = t_max
    best_prim = -1
    best_b0 = ZERO
    best_b1 = ZERO
    best_b2 = ZERO
    visits = 0
    tests = 0
    if lo.shape[0] == 0:
        return False, best_t, best_prim, best_b0, best_b1, best_b2, visits, tests
    ix = ONE / dx
    iy = ONE / dy
    iz = ONE / dz
    hit_root, _ = slab_entry(ox, oy, oz, ix, iy, iz, t_min, best_t, lo, hi, 0)
    if not hit_root:
        return False, best_t, best_prim, best_b0, best_b1, best_b2, visits, tests

    sp = 0
    node = 0
    while True:
        visits += 1
        descend = False
        if count[node] > 0:
            first = offset[node]
            for p in range(first, first + count[node]):
                tests += 1
                ok, t, b0, b1, b2 = intersect_triangle(ox, oy, oz, dx, dy, dz, tris, p, best_t)
                if ok and t > t_min:
                    if t < best_t or best_prim < 0 or p < best_prim:
                        best_t = t
                        best_prim = p
                        best_b0 = b0
                        best_b1 = b1
                        best_b2 = b2
        else:
            c0 = node + 1
            c1 = offset[node]
            h0, e0 = slab_entry(ox, oy, oz, ix, iy, iz, t_min, best_t, lo, hi, c0)
            h1, e1 = slab_entry(ox, oy, oz, ix, iy, iz, t_min, best_t, lo, hi, c1)
            if h0 and h1:
                if e1 < e0:
                    stack[sp] = c0
                    stack_t[sp] = e0
                    node = c1
                else:
                    stack[sp] = c1
                    stack_t[sp] = e1
                    node = c0
                sp += 1
                descend = True
            elif h0:
                node = c0
                descend = True
            elif h1:
                node = c1
                descend = True
        if descend:
            continue
        found = False
        while sp > 0:
            sp -= 1
            if stack_t[sp] <= best_t:
                node = stack[sp]
                found = True
                break
        if not found:
            break
    return best_prim >= 0, best_t, best_prim, best_b0, best_b1, best_b2, visits, tests


@njit(cache=True, error_model="numpy")
def brute_force_kernel(ox, oy, oz, dx, dy, dz, t_min, t_max, tris):
    """
    Closest hit by testing every triangle, with the same tie rule as traversal.
    """
    best_t = t_max
    best_prim = -1
    best_b0 = ZERO
    best_b1 = ZERO
    best_b2 = ZERO
    for p in range(tris.shape[0]):
        ok, t, b0, b1, b2 = intersect_triangle(ox, oy, oz, dx, dy, dz, tris, p, best_t)
        if ok and t > t_min:
            if t < best_t or best_prim < 0 or p < best_prim:
                best_t = t
                best_prim = p
                best_b0 = b0
                best_b1 = b1
                best_b2 = b2
    return best_prim >= 0, best_t, best_prim, best_b0, best_b1, best_b2


@njit(parallel=True, cache=True, error_model="numpy")
def _traverse_batch(origins, dirs, t_min, t_max, lo, hi, offset, count, tris, depth,
                    out_t, out_prim, out_bary, out_visits, out_tests):
    for i in prange(origins.shape[0]):
        stack = np.empty(depth + 1, dtype=np.int64)
        stack_t = np.empty(depth + 1, dtype=np.float32)
        found, t, prim, b0, b1, b2, visits, tests = traverse_kernel(
            origins[i, 0], origins[i, 1], origins[i, 2], dirs[i, 0], dirs[i, 1], dirs[i, 2],
            t_min[i], t_max[i], lo, hi, offset, count, tris, stack, stack_t)
        out_visits[i] = visits
        out_tests[i] = tests
        if found:
            out_t[i] = t
            out_prim[i] = prim
            out_bary[i, 0] = b0
            out_bary[i, 1] = b1
            out_bary[i, 2] = b2
        else:
            out_t[i] = t_max[i]
            out_prim[i] = -1
            out_bary[i, 0] = ZERO
            out_bary[i, 1] = ZERO
            out_bary[i, 2] = ZERO


@njit(parallel=True, cache=True, error_model="numpy")
def _brute_force_batch(origins, dirs, t_min, t_max, tris, out_t, out_prim, out_bary):
    for i in prange(origins.shape[0]):
        found, t, prim, b0, b1, b2 = brute_force_kernel(
            origins[i, 0], origins[i, 1], origins[i, 2], dirs[i, 0], dirs[i, 1], dirs[i, 2],
            t_min[i], t_max[i], tris)
        if found:
            out_t[i] = t
            out_prim[i] = prim
            out_bary[i, 0] = b0
            out_bary[i, 1] = b1
            out_bary[i, 2] = b2
        else:
            out_t[i] = t_max[i]
            out_prim[i] = -1
            out_bary[i, 0] = ZERO
            out_bary[i, 1] = ZERO
            out_bary[i, 2] = ZERO


def _as_triangles(primitives):
    tris = np.ascontiguousarray(primitives, dtype=np.float32)
    if tris.ndim != 3 or tris.shape[1:] != (3, 3):
        raise DomainError(f"primitives must have shape (T, 3, 3), got {tris.shape}")
    return tris


def intersect_slab(ray, node):
    """
    Slab test of a ray against one node box.

    Args:
        ray: Ray.
        node: CompactBvhNode, or a record of a compact node array.

    Returns:
        entry distance (clamped to t_min) if the segment overlaps the box, else None.
    """
    if not isinstance(node, CompactBvhNode):
        node = CompactBvhNode.from_record(node)
    lo, hi = node.decode()
    inv = ray.inv_dir
    hit, entry = slab_entry(ray.origin[0], ray.origin[1], ray.origin[2], inv[0], inv[1], inv[2],
                            ray.t_min, ray.t_max, lo.reshape(1, 3), hi.reshape(1, 3), 0)
    if hit:
        return float(entry)
    return None


def traverse(ray, nodes, primitives, stats=None):
    """
    Nearest hit of a ray against a node array and its leaf-ordered triangles.

    Args:
        ray: Ray.
        nodes: compact (24-byte) or float32 (32-byte) node array.
        primitives: (T, 3, 3) triangle vertices in leaf order.
        stats: optional TraversalStats accumulating visits and tests.

    Returns:
        Hit or None.
    """
    tris = _as_triangles(primitives)
    lo, hi, offset, count, depth = kernel_arrays(nodes)
    stack = np.empty(depth + 1, dtype=np.int64)
    stack_t = np.empty(depth + 1, dtype=np.float32)
    o = ray.origin
    d = ray.direction
    found, t, prim, b0, b1, b2, visits, tests = traverse_kernel(
        o[0], o[1], o[2], d[0], d[1], d[2], ray.t_min, ray.t_max, lo, hi, offset, count, tris,
        stack, stack_t)
    if stats is not None:
        stats.node_visits += int(visits)
        stats.prim_tests += int(tests)
    if not found:
        return None
    px, py, pz, nx, ny, nz = triangle_geometry(tris, prim, b0, b1, b2)
    return Hit(t=np.float32(t), prim_index=int(prim), barycentric=(np.float32(b1), np.float32(b2)),
               hit_point=np.array([px, py, pz], dtype=np.float32),
               normal=np.array([nx, ny, nz], dtype=np.float32))


def _batch_inputs(origins, directions, t_min, t_max):
    origins = np.ascontiguousarray(origins, dtype=np.float32).reshape(-1, 3)
    directions = np.ascontiguousarray(directions, dtype=np.float32).reshape(-1, 3)
    n = origins.shape[0]
    t_min = np.ascontiguousarray(np.broadcast_to(np.asarray(t_min, dtype=np.float32), (n,)))
    t_max = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, dtype=np.float32), (n,)))
    return origins, directions, t_min, t_max


def traverse_many(origins, directions, nodes, primitives, t_min=0.0, t_max=T_FAR):
    """
    Batched traverse over N rays.

    Returns:
        BatchHits with per-ray visit and test counts.
    """
    origins, directions, t_min, t_max = _batch_inputs(origins, directions, t_min, t_max)
    tris = _as_triangles(primitives)
    lo, hi, offset, count, depth = kernel_arrays(nodes)
    n = origins.shape[0]
    out = BatchHits(t=np.empty(n, np.float32), prim=np.empty(n, np.int64),
                    bary=np.empty((n, 3), np.float32), visits=np.empty(n, np.int64),
                    tests=np.empty(n, np.int64))
    _traverse_batch(origins, directions, t_min, t_max, lo, hi, offset, count, tris, depth,
                    out.t, out.prim, out.bary, out.visits, out.tests)
    return out


def brute_force_many(origins, directions, primitives, t_min=0.0, t_max=T_FAR):
    """
    Batched nearest hit by testing every triangle (the traversal oracle).
    """
    origins, directions, t_min, t_max = _batch_inputs(origins, directions, t_min, t_max)
    tris = _as_triangles(primitives)
    n = origins.shape[0]
    out = BatchHits(t=np.empty(n, np.float32), prim=np.empty(n, np.int64),
                    bary=np.empty((n, 3), np.float32))
    _brute_force_batch(origins, directions, t_min, t_max, tris, out.t, out.prim, out.bary)
    return out

