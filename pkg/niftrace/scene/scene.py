"""
Scene assembly: geometry buffers, materials, camera and the compact BVH.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from niftrace.bvh.builder import build_bvh2
from niftrace.bvh.compact import COMPACT_NODE_DTYPE, compact, kernel_arrays, validate_nodes
from niftrace.bvh.traversal import brute_force_many, traverse_many
from niftrace.constants import DEFAULT_MAX_LEAF_SIZE, DEFAULT_VFOV, F16_MAX, RAY_EPSILON_SCALE
from niftrace.exceptions import ConfigurationError, DomainError
from niftrace.scene.materials import Material, kernel_materials, material_table

logger = logging.getLogger(__name__)

# 10 float32: position, look_at, up, vertical fov in degrees
CAMERA_DTYPE = np.dtype([
    ("position", "<f4", (3,)),
    ("look_at", "<f4", (3,)),
    ("up", "<f4", (3,)),
    ("vfov", "<f4"),
])


@dataclass
class Camera:
    """
    Right-handed pinhole camera.
    """
    position: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    look_at: np.ndarray = field(default_factory=lambda: np.array([0, 0, -1], dtype=np.float32))
    up: np.ndarray = field(default_factory=lambda: np.array([0, 1, 0], dtype=np.float32))
    vfov: float = DEFAULT_VFOV

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float32).reshape(3)
        self.look_at = np.asarray(self.look_at, dtype=np.float32).reshape(3)
        self.up = np.asarray(self.up, dtype=np.float32).reshape(3)
        self.vfov = np.float32(self.vfov)
        if not 0 < self.vfov < 180:
            raise ConfigurationError(f"vertical field of view must be in (0, 180), got {self.vfov}")
        forward = self.look_at.astype(np.float64) - self.position
        if np.linalg.norm(forward) == 0:
            raise ConfigurationError("camera position and look_at coincide")
        if np.linalg.norm(np.cross(forward, self.up.astype(np.float64))) == 0:
            raise ConfigurationError("camera up vector is parallel to the view direction")

    def basis(self):
        """
        Float64 (forward, right, up) unit vectors.
        """
        forward = self.look_at.astype(np.float64) - self.position.astype(np.float64)
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, self.up.astype(np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return forward, right, up

    def to_record(self):
        rec = np.zeros(1, dtype=CAMERA_DTYPE)
        rec["position"] = self.position
        rec["look_at"] = self.look_at
        rec["up"] = self.up
        rec["vfov"] = self.vfov
        return rec

    @classmethod
    def from_record(cls, rec):
        rec = rec.reshape(-1)[0]
        return cls(position=rec["position"], look_at=rec["look_at"], up=rec["up"], vfov=rec["vfov"])

    @classmethod
    def framing(cls, lo, hi, vfov=DEFAULT_VFOV):
        """
        Camera on the +z side of a box, looking at its centre with the whole
        bounding sphere in view.
        """
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        centre = 0.5 * (lo + hi)
        radius = max(0.5 * np.linalg.norm(hi - lo), 1e-3)
        distance = radius / np.sin(np.radians(vfov) / 2) * 1.05
        return cls(position=centre + np.array([0.0, 0.0, distance]), look_at=centre,
                   up=(0.0, 1.0, 0.0), vfov=vfov)

    def equals(self, other):
        return self.to_record().tobytes() == other.to_record().tobytes()


@dataclass
class SceneArrays:
    """
    Plain arrays handed to the jitted kernels.
    """
    lo: np.ndarray
    hi: np.ndarray
    offset: np.ndarray
    count: np.ndarray
    depth: int
    triangles: np.ndarray
    tri_material: np.ndarray
    centres: np.ndarray
    radii: np.ndarray
    sphere_material: np.ndarray
    mat_kind: np.ndarray
    mat_albedo: np.ndarray
    mat_emission: np.ndarray
    mat_ior: np.ndarray
    t_min: np.float32


@dataclass
class Scene:
    """
    Immutable scene description. Triangles are stored in BVH leaf order, so
    the primitive order of the node array is the identity.

    Args:
        vertices: (V, 3) float32 positions.
        indices: (T, 3) uint32 vertex indices per triangle.
        tri_material: (T,) uint32 material index per triangle.
        centres: (S, 3) float32 sphere centres.
        radii: (S,) float32 sphere radii.
        sphere_material: (S,) uint32 material index per sphere.
        materials: list of Material.
        nodes: compact node array over the triangles.
        camera: Camera.
    """
    vertices: np.ndarray
    indices: np.ndarray
    tri_material: np.ndarray
    centres: np.ndarray
    radii: np.ndarray
    sphere_material: np.ndarray
    materials: List[Material]
    nodes: np.ndarray
    camera: Camera
    name: str = "scene"

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float32).reshape(-1, 3)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.uint32).reshape(-1, 3)
        self.tri_material = np.ascontiguousarray(self.tri_material, dtype=np.uint32).reshape(-1)
        self.centres = np.ascontiguousarray(self.centres, dtype=np.float32).reshape(-1, 3)
        self.radii = np.ascontiguousarray(self.radii, dtype=np.float32).reshape(-1)
        self.sphere_material = np.ascontiguousarray(self.sphere_material, dtype=np.uint32).reshape(-1)
        if self.nodes.dtype != COMPACT_NODE_DTYPE:
            raise ConfigurationError("scene nodes must use the compact layout")
        self.validate()

    @property
    def triangle_count(self):
        return self.indices.shape[0]

    @property
    def sphere_count(self):
        return self.radii.shape[0]

    @property
    def prim_order(self):
        return np.arange(self.triangle_count, dtype=np.int64)

    @property
    def triangles(self):
        """
        (T, 3, 3) float32 vertex positions in leaf order.
        """
        return np.ascontiguousarray(self.vertices[self.indices.astype(np.int64)], dtype=np.float32)

    @property
    def bvh_bytes(self):
        return self.nodes.nbytes

    def validate(self):
        """
        Structural checks; raises ConfigurationError on the first problem.
        """
        m = len(self.materials)
        t = self.triangle_count
        if self.tri_material.shape[0] != t:
            raise ConfigurationError("one material index per triangle is required")
        if self.centres.shape[0] != self.radii.shape[0] or self.sphere_material.shape[0] != self.radii.shape[0]:
            raise ConfigurationError("sphere buffers disagree in length")
        if t and self.indices.max() >= self.vertices.shape[0]:
            raise ConfigurationError("triangle vertex index out of range")
        if t and np.any((self.indices[:, 0] == self.indices[:, 1]) & (self.indices[:, 1] == self.indices[:, 2])):
            raise ConfigurationError("triangle references the same vertex three times")
        if (t and self.tri_material.max() >= m) or (self.sphere_count and self.sphere_material.max() >= m):
            raise ConfigurationError("primitive references a missing material")
        if np.any(self.radii <= 0) or not np.all(np.isfinite(self.centres)):
            raise ConfigurationError("spheres need finite centres and positive radii")
        if not np.all(np.isfinite(self.vertices)):
            raise ConfigurationError("vertices must be finite")
        if t == 0 and len(self.nodes):
            raise ConfigurationError("node array present without triangles")
        if t:
            try:
                validate_nodes(self.nodes, t)
            except DomainError as err:
                raise ConfigurationError(f"BVH inconsistent with primitives: {err}") from err
        return True

    def bounds(self):
        """
        (lo, hi) float64 corners over triangles and spheres, or None for an empty scene.
        """
        los, his = [], []
        if self.triangle_count:
            used = self.vertices[np.unique(self.indices.astype(np.int64))].astype(np.float64)
            los.append(used.min(axis=0))
            his.append(used.max(axis=0))
        if self.sphere_count:
            r = self.radii.astype(np.float64)[:, None]
            los.append((self.centres - r).min(axis=0))
            his.append((self.centres + r).max(axis=0))
        if not los:
            return None
        return np.min(los, axis=0), np.max(his, axis=0)

    def extent(self):
        b = self.bounds()
        if b is None:
            return 0.0
        return float(np.max(b[1] - b[0]))

    def secondary_t_min(self):
        """
        Offset along secondary rays that avoids self-intersection.
        """
        return np.float32(RAY_EPSILON_SCALE * max(self.extent(), 1.0))

    def kernel_arrays(self):
        lo, hi, offset, count, depth = kernel_arrays(self.nodes)
        kind, albedo, emission, ior = kernel_materials(self.materials)
        return SceneArrays(lo=lo, hi=hi, offset=offset, count=count, depth=depth,
                           triangles=self.triangles,
                           tri_material=self.tri_material.astype(np.int64),
                           centres=self.centres, radii=self.radii,
                           sphere_material=self.sphere_material.astype(np.int64),
                           mat_kind=kind, mat_albedo=albedo, mat_emission=emission, mat_ior=ior,
                           t_min=self.secondary_t_min())

    def emissive_count(self):
        return sum(1 for m in self.materials if m.is_emissive)

    def equals(self, other):
        """
        Bitwise equality of every buffer.
        """
        pairs = [(self.vertices, other.vertices), (self.indices, other.indices),
                 (self.tri_material, other.tri_material), (self.centres, other.centres),
                 (self.radii, other.radii), (self.sphere_material, other.sphere_material),
                 (self.nodes, other.nodes),
                 (material_table(self.materials), material_table(other.materials))]
        for a, b in pairs:
            if a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return self.camera.equals(other.camera)


def assemble_scene(vertices, indices, tri_material, materials, camera, centres=None, radii=None,
                   sphere_material=None, max_leaf_size=DEFAULT_MAX_LEAF_SIZE, name="scene"):
    """
    Builds the BVH over the triangles, reorders the triangle buffers into
    leaf order and compacts the tree.

    Returns:
        Scene.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float32).reshape(-1, 3)
    indices = np.ascontiguousarray(indices, dtype=np.uint32).reshape(-1, 3)
    tri_material = np.ascontiguousarray(tri_material, dtype=np.uint32).reshape(-1)
    if centres is None:
        centres = np.zeros((0, 3), dtype=np.float32)
        radii = np.zeros(0, dtype=np.float32)
        sphere_material = np.zeros(0, dtype=np.uint32)
    if indices.shape[0]:
        if indices.max() >= vertices.shape[0]:
            raise ConfigurationError("triangle vertex index out of range")
        tree, order = build_bvh2(vertices[indices.astype(np.int64)], max_leaf_size=max_leaf_size)
        indices = indices[order]
        tri_material = tri_material[order]
        nodes = compact(tree)
    else:
        nodes = np.zeros(0, dtype=COMPACT_NODE_DTYPE)
    scene = Scene(vertices=vertices, indices=indices, tri_material=tri_material, centres=centres,
                  radii=radii, sphere_material=sphere_material, materials=list(materials),
                  nodes=nodes, camera=camera, name=name)
    logger.info("assembled scene %s: %d triangles, %d spheres, %d nodes (%d BVH bytes)", name,
                scene.triangle_count, scene.sphere_count, len(nodes), scene.bvh_bytes)
    return scene


@dataclass
class AuditReport:
    rays: int
    mismatches: int
    node_visits: int

    @property
    def passed(self):
        return self.mismatches == 0


def audit_scene(scene, n_rays=1000, seed=0):
    """
    Compares BVH traversal with brute force on random rays aimed through the
    scene bounds.

    Returns:
        AuditReport; mismatches counts rays whose nearest primitive or t differ.
    """
    if scene.triangle_count == 0:
        return AuditReport(rays=0, mismatches=0, node_visits=0)
    rng = np.random.default_rng(seed)
    lo, hi = scene.bounds()
    size = np.maximum(hi - lo, 1e-3)
    origins = lo - 0.25 * size + rng.random((n_rays, 3)) * 1.5 * size
    targets = lo + rng.random((n_rays, 3)) * size
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    tris = scene.triangles
    fast = traverse_many(origins, dirs, scene.nodes, tris)
    slow = brute_force_many(origins, dirs, tris)
    bad = (fast.prim != slow.prim) | (fast.hit & (fast.t != slow.t))
    report = AuditReport(rays=n_rays, mismatches=int(bad.sum()), node_visits=int(fast.visits.sum()))
    if not report.passed:
        logger.warning("BVH audit of %s: %d of %d rays disagree with brute force",
                       scene.name, report.mismatches, n_rays)
    return report


def normalise_vertices(vertices, max_extent=1.0e3):
    """
    Recentres vertices on the origin and scales them so the largest box
    extent is max_extent, for meshes beyond the float16 extent ceiling.

    Returns:
        (vertices float32, centre, scale) with original = vertices / scale + centre.
    """
    if not 0 < max_extent <= F16_MAX:
        raise DomainError(f"max_extent must be in (0, {F16_MAX}]")
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if v.shape[0] == 0:
        return v.astype(np.float32), np.zeros(3), 1.0
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    centre = 0.5 * (lo + hi)
    span = float(np.max(hi - lo))
    scale = max_extent / span if span > 0 else 1.0
    return ((v - centre) * scale).astype(np.float32), centre, scale
