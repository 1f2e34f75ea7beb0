"""
This module builds the binary BVH over triangles with a binned surface area heuristic.
"""

import logging
from dataclasses import dataclass

import numpy as np

from niftrace.constants import (DEFAULT_MAX_LEAF_SIZE, SAH_BINS, SAH_INTERSECT_COST,
                                SAH_TRAVERSAL_COST)
from niftrace.exceptions import DomainError

logger = logging.getLogger(__name__)


@dataclass
class Aabb:
    """
    Axis aligned box in scene units.
    """
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float32).reshape(3)
        self.max = np.asarray(self.max, dtype=np.float32).reshape(3)
        if not (np.all(np.isfinite(self.min)) and np.all(np.isfinite(self.max))):
            raise DomainError("Aabb bounds must be finite")
        if np.any(self.min > self.max):
            raise DomainError("Aabb min must not exceed max")

    @classmethod
    def from_points(cls, points):
        points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
        return cls(points.min(axis=0), points.max(axis=0))

    @property
    def extent(self):
        return self.max - self.min

    def surface_area(self):
        return _surface_area(self.min[None], self.max[None])[0]

    def contains(self, other):
        return bool(np.all(self.min <= other.min) and np.all(self.max >= other.max))

    def union(self, other):
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))


def _surface_area(lo, hi):
    d = hi.astype(np.float64) - lo.astype(np.float64)
    return 2.0 * (d[:, 0] * d[:, 1] + d[:, 1] * d[:, 2] + d[:, 2] * d[:, 0])


@dataclass
class Bvh2:
    """
    Binary BVH in depth-first order: the first child of an interior node is
    the next node in the arrays, `right` holds the second child (-1 for
    leaves). Leaves reference `prim_count` consecutive entries of
    `prim_order` starting at `prim_offset`.
    """
    lo: np.ndarray
    hi: np.ndarray
    right: np.ndarray
    prim_offset: np.ndarray
    prim_count: np.ndarray
    prim_order: np.ndarray

    @property
    def node_count(self):
        return self.lo.shape[0]

    @property
    def is_leaf(self):
        return self.prim_count > 0

    def depth(self):
        return tree_depth(self.right, self.prim_count)

    def aabb(self, node):
        return Aabb(self.lo[node], self.hi[node])


def tree_depth(right, prim_count):
    """
    Maximum depth (root = 0) of a depth-first node array.
    """
    n = len(prim_count)
    if n == 0:
        return 0
    depth = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if prim_count[i] == 0:
            depth[i + 1] = depth[i] + 1
            depth[right[i]] = depth[i] + 1
    return int(depth.max())


class SahBuilder:
    """
    Top-down binned SAH builder.

    Parameters
    ----------
    max_leaf_size : int
        Largest number of triangles stored in one leaf.
    bins : int
        Number of centroid bins per axis.
    """

    def __init__(self, max_leaf_size=DEFAULT_MAX_LEAF_SIZE, bins=SAH_BINS,
                 traversal_cost=SAH_TRAVERSAL_COST, intersect_cost=SAH_INTERSECT_COST):
        if max_leaf_size < 1:
            raise DomainError("max_leaf_size must be at least 1")
        self.max_leaf_size = int(max_leaf_size)
        self.bins = int(bins)
        self.traversal_cost = traversal_cost
        self.intersect_cost = intersect_cost

    def build(self, triangles):
        """
        Args:
            triangles: (T, 3, 3) vertex positions.

        Returns:
            Bvh2 tree.
        """
        tris = np.asarray(triangles, dtype=np.float32)
        if tris.ndim != 3 or tris.shape[1:] != (3, 3):
            raise DomainError(f"triangles must have shape (T, 3, 3), got {tris.shape}")
        if tris.shape[0] == 0:
            raise DomainError("cannot build a BVH over zero triangles")
        if not np.all(np.isfinite(tris)):
            raise DomainError("triangle vertices must be finite")

        self.tri_lo = tris.min(axis=1)
        self.tri_hi = tris.max(axis=1)
        self.centroids = 0.5 * (self.tri_lo.astype(np.float64) + self.tri_hi.astype(np.float64))

        lo, hi, right, offsets, counts = [], [], [], [], []
        order = []
        stack = [(np.arange(tris.shape[0]), -1)]
        while stack:
            idx, parent = stack.pop()
            node = len(lo)
            if parent >= 0:
                right[parent] = node
            lo.append(self.tri_lo[idx].min(axis=0))
            hi.append(self.tri_hi[idx].max(axis=0))
            split = None
            if len(idx) > self.max_leaf_size:
                split = self.split(idx, lo[-1], hi[-1])
            if split is None:
                right.append(-1)
                offsets.append(len(order))
                counts.append(len(idx))
                order.extend(idx.tolist())
            else:
                left_idx, right_idx = split
                right.append(-1)
                offsets.append(0)
                counts.append(0)
                stack.append((right_idx, node))
                stack.append((left_idx, -1))

        tree = Bvh2(lo=np.array(lo, dtype=np.float32).reshape(-1, 3),
                    hi=np.array(hi, dtype=np.float32).reshape(-1, 3),
                    right=np.array(right, dtype=np.int64),
                    prim_offset=np.array(offsets, dtype=np.int64),
                    prim_count=np.array(counts, dtype=np.int64),
                    prim_order=np.array(order, dtype=np.int64))
        logger.info("built BVH-2: %d triangles, %d nodes", tris.shape[0], tree.node_count)
        return tree

    def split(self, idx, node_lo, node_hi):
        """
        Best binned SAH partition of the triangles `idx`, or an object median
        split when every centroid coincides.
        """
        c = self.centroids[idx]
        cmin = c.min(axis=0)
        cmax = c.max(axis=0)
        n = len(idx)
        parent_area = _surface_area(node_lo[None], node_hi[None])[0]
        best_cost = np.inf
        best = None
        for axis in range(3):
            span = cmax[axis] - cmin[axis]
            if span <= 0:
                continue
            bin_ids = ((c[:, axis] - cmin[axis]) * (self.bins / span)).astype(np.int64)
            bin_ids = np.clip(bin_ids, 0, self.bins - 1)
            counts = np.bincount(bin_ids, minlength=self.bins)
            blo = np.full((self.bins, 3), np.inf)
            bhi = np.full((self.bins, 3), -np.inf)
            np.minimum.at(blo, bin_ids, self.tri_lo[idx])
            np.maximum.at(bhi, bin_ids, self.tri_hi[idx])
            left_lo = np.minimum.accumulate(blo, axis=0)[:-1]
            left_hi = np.maximum.accumulate(bhi, axis=0)[:-1]
            right_lo = np.minimum.accumulate(blo[::-1], axis=0)[::-1][1:]
            right_hi = np.maximum.accumulate(bhi[::-1], axis=0)[::-1][1:]
            left_count = np.cumsum(counts)[:-1]
            right_count = n - left_count
            valid = (left_count > 0) & (right_count > 0)
            if not np.any(valid):
                continue
            with np.errstate(invalid="ignore"):
                cost = self.traversal_cost + self.intersect_cost * (
                    _surface_area(left_lo, left_hi) * left_count
                    + _surface_area(right_lo, right_hi) * right_count) / max(parent_area, 1e-30)
            cost = np.where(valid, cost, np.inf)
            k = int(np.argmin(cost))
            if cost[k] < best_cost:
                best_cost = cost[k]
                best = (axis, bin_ids <= k)
        if best is None:
            half = n // 2
            return idx[:half], idx[half:]
        _, mask = best
        return idx[mask], idx[~mask]


def build_bvh2(triangles, max_leaf_size=DEFAULT_MAX_LEAF_SIZE):
    """
    Builds a binary BVH over triangles.

    Args:
        triangles: (T, 3, 3) float32 vertex positions.
        max_leaf_size: maximum triangles per leaf.

    Returns:
        (tree, primitive order): the Bvh2 and the permutation of triangle
        indices in leaf order.
    """
    tree = SahBuilder(max_leaf_size=max_leaf_size).build(triangles)
    return tree, tree.prim_order
