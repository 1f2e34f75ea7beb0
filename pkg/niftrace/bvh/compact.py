"""
Pointer-less node arrays.

A compact node is 24 bytes: the box origin at float32, the box extent at
float16 (rounded with round-to-nearest-not-lower so the decoded box always
contains the exact one), the second-child index or first primitive, and the
primitive count (0 marks interior nodes, whose first child is the next node).
The 32-byte float32 layout is kept as the uncompressed baseline.
"""

import logging
from typing import NamedTuple

import numpy as np

from niftrace.bvh.builder import Bvh2, tree_depth
from niftrace.constants import COMPACT_NODE_BYTES, F16_MAX, NODE32_BYTES
from niftrace.core.precision import f16_cast_not_lower
from niftrace.exceptions import DomainError

logger = logging.getLogger(__name__)

COMPACT_NODE_DTYPE = np.dtype([
    ("origin", "<f4", (3,)),
    ("extent", "<f2", (3,)),
    ("offset", "<u4"),
    ("prim_count", "<u2"),
])

NODE32_DTYPE = np.dtype([
    ("aabb_min", "<f4", (3,)),
    ("offset", "<u4"),
    ("aabb_max", "<f4", (3,)),
    ("prim_count", "<u4"),
])

assert COMPACT_NODE_DTYPE.itemsize == COMPACT_NODE_BYTES
assert NODE32_DTYPE.itemsize == NODE32_BYTES


class CompactBvhNode(NamedTuple):
    origin: np.ndarray
    extent: np.ndarray
    right_child_or_prim_offset: int
    prim_count: int

    @classmethod
    def from_record(cls, record):
        return cls(np.array(record["origin"], dtype=np.float32),
                   np.array(record["extent"], dtype=np.float16),
                   int(record["offset"]), int(record["prim_count"]))

    @property
    def is_leaf(self):
        return self.prim_count > 0

    def decode(self):
        """
        Returns:
            (lo, hi) float32 corners; hi = origin + widen(extent) in float32.
        """
        lo = self.origin.astype(np.float32)
        return lo, lo + self.extent.astype(np.float32)


def conservative_extent(lo, hi):
    """
    Float16 extents whose float32 decode origin + extent is >= hi.

    The exact difference hi - lo is formed at float64 (exact for float32
    operands), rounded up to float32, then cast not-lower to float16.
    """
    exact = hi.astype(np.float64) - lo.astype(np.float64)
    ext32 = exact.astype(np.float32)
    ext32 = np.where(ext32.astype(np.float64) < exact, np.nextafter(ext32, np.float32(np.inf)), ext32)
    if np.any(ext32 > F16_MAX):
        worst = float(ext32.max())
        raise DomainError(f"box extent {worst} exceeds the float16 range; normalise the scene first")
    return f16_cast_not_lower(ext32.astype(np.float32))


def compact(tree):
    """
    Packs a Bvh2 into the 24-byte node array.

    Args:
        tree: Bvh2 in depth-first order.

    Returns:
        numpy structured array of COMPACT_NODE_DTYPE, same node count.
    """
    n = tree.node_count
    nodes = np.zeros(n, dtype=COMPACT_NODE_DTYPE)
    if n == 0:
        return nodes
    if np.any(tree.prim_count > np.iinfo(np.uint16).max):
        raise DomainError("leaf primitive count does not fit in 16 bits")
    nodes["origin"] = tree.lo
    nodes["extent"] = conservative_extent(tree.lo, tree.hi)
    leaf = tree.prim_count > 0
    nodes["offset"] = np.where(leaf, tree.prim_offset, tree.right).astype(np.uint32)
    nodes["prim_count"] = tree.prim_count.astype(np.uint16)

    lo, hi = decode(nodes)
    assert np.all(lo <= tree.lo) and np.all(hi >= tree.hi), "compact box lost conservativeness"
    logger.info("compacted %d nodes: %d bytes (float32 layout %d bytes)",
                n, nodes.nbytes, n * NODE32_BYTES)
    return nodes


def node32(tree):
    """
    Packs a Bvh2 into the 32-byte float32 node array.
    """
    nodes = np.zeros(tree.node_count, dtype=NODE32_DTYPE)
    if tree.node_count == 0:
        return nodes
    leaf = tree.prim_count > 0
    nodes["aabb_min"] = tree.lo
    nodes["aabb_max"] = tree.hi
    nodes["offset"] = np.where(leaf, tree.prim_offset, tree.right).astype(np.uint32)
    nodes["prim_count"] = tree.prim_count.astype(np.uint32)
    return nodes


def decode(nodes):
    """
    Float32 box corners of a node array (either layout).

    Returns:
        (lo, hi) arrays of shape (N, 3).
    """
    if nodes.dtype == COMPACT_NODE_DTYPE:
        lo = np.ascontiguousarray(nodes["origin"], dtype=np.float32)
        return lo, lo + nodes["extent"].astype(np.float32)
    if nodes.dtype == NODE32_DTYPE:
        return (np.ascontiguousarray(nodes["aabb_min"], dtype=np.float32),
                np.ascontiguousarray(nodes["aabb_max"], dtype=np.float32))
    raise DomainError(f"unknown node layout {nodes.dtype}")


def kernel_arrays(nodes):
    """
    Plain arrays consumed by the jitted traversal kernels.

    Returns:
        (lo, hi, offset, count, depth)
    """
    lo, hi = decode(nodes)
    offset = np.ascontiguousarray(nodes["offset"], dtype=np.int64)
    count = np.ascontiguousarray(nodes["prim_count"], dtype=np.int64)
    depth = tree_depth(offset, count)
    return np.ascontiguousarray(lo), np.ascontiguousarray(hi), offset, count, depth


def validate_nodes(nodes, prim_total, max_leaf_size=None):
    """
    Structural checks of a node array against the number of primitives.
    Raises DomainError on the first violation.
    """
    n = len(nodes)
    offset = nodes["offset"].astype(np.int64)
    count = nodes["prim_count"].astype(np.int64)
    seen = np.zeros(prim_total, dtype=np.int64)
    for i in range(n):
        if count[i] == 0:
            if i + 1 >= n or offset[i] <= i or offset[i] >= n:
                raise DomainError(f"node {i}: child index out of range")
        else:
            if max_leaf_size is not None and count[i] > max_leaf_size:
                raise DomainError(f"node {i}: leaf holds {count[i]} > {max_leaf_size} primitives")
            if offset[i] + count[i] > prim_total:
                raise DomainError(f"node {i}: primitive range out of bounds")
            seen[offset[i]:offset[i] + count[i]] += 1
    if prim_total and not np.all(seen == 1):
        raise DomainError("every primitive must be referenced by exactly one leaf")
    return True


def to_bvh2(nodes, prim_order=None):
    """
    Rebuilds the Bvh2 view of a node array (boxes decoded to float32).
    """
    lo, hi = decode(nodes)
    count = nodes["prim_count"].astype(np.int64)
    offset = nodes["offset"].astype(np.int64)
    leaf = count > 0
    if prim_order is None:
        prim_order = np.arange(int(count.sum()), dtype=np.int64)
    return Bvh2(lo=lo, hi=hi, right=np.where(leaf, -1, offset), prim_offset=np.where(leaf, offset, 0),
                prim_count=count, prim_order=np.asarray(prim_order, dtype=np.int64))
