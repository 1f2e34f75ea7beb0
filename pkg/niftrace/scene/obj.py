"""
Wavefront OBJ ingestion (positions and faces only).
"""

import logging
from dataclasses import dataclass

import numpy as np

from niftrace.exceptions import ParseError
from niftrace.scene.materials import Material
from niftrace.scene.scene import Camera, assemble_scene, normalise_vertices
from niftrace.constants import F16_MAX

logger = logging.getLogger(__name__)

IGNORED_RECORDS = {"vt", "vn", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p"}


@dataclass
class ObjMesh:
    """
    Args:
        vertices: (V, 3) float32 positions as written in the file.
        indices: (T, 3) uint32 triangle indices after fan triangulation.
        normals: (T, 3) float32 unit face normals.
    """
    vertices: np.ndarray
    indices: np.ndarray
    normals: np.ndarray

    @property
    def triangle_count(self):
        return self.indices.shape[0]


def _face_index(token, vertex_count, line, path):
    head = token.split("/")[0]
    try:
        i = int(head)
    except ValueError:
        raise ParseError(f"malformed face vertex {token!r}", line=line, path=path) from None
    if i < 0:
        i = vertex_count + i
    else:
        i -= 1
    if i < 0 or i >= vertex_count:
        raise ParseError(f"face vertex {token!r} out of range", line=line, path=path)
    return i


def face_normals(vertices, indices):
    """
    Unit geometric normals cross(v1 - v0, v2 - v0); zero for degenerate faces.
    """
    tri = vertices[indices.astype(np.int64)].astype(np.float64)
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = np.where(length > 0, n / length, 0.0)
    return n.astype(np.float32)


def load_obj(path):
    """
    Reads vertices and faces of an OBJ file; polygons are fan-triangulated.

    Raises:
        ParseError naming the line of the first malformed record, or the
        path when the file cannot be read.
    """
    try:
        with open(path) as f:
            lines = f.readlines()
    except (OSError, UnicodeDecodeError) as err:
        raise ParseError(f"cannot read OBJ file: {err}", path=path) from err

    vertices = []
    indices = []
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        record = parts[0]
        if record == "v":
            if len(parts) < 4:
                raise ParseError("vertex record needs three coordinates", line=number, path=path)
            try:
                xyz = [float(p) for p in parts[1:4]]
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {text!r}", line=number, path=path) from None
            if not np.all(np.isfinite(xyz)):
                raise ParseError("non-finite coordinate", line=number, path=path)
            vertices.append(xyz)
        elif record == "f":
            if len(parts) < 4:
                raise ParseError("face record needs at least three vertices", line=number, path=path)
            face = [_face_index(tok, len(vertices), number, path) for tok in parts[1:]]
            for k in range(1, len(face) - 1):
                indices.append([face[0], face[k], face[k + 1]])
        elif record not in IGNORED_RECORDS:
            logger.debug("%s:%d: skipping record %r", path, number, record)

    v = np.array(vertices, dtype=np.float32).reshape(-1, 3)
    idx = np.array(indices, dtype=np.uint32).reshape(-1, 3)
    mesh = ObjMesh(vertices=v, indices=idx, normals=face_normals(v, idx))
    logger.info("loaded %s: %d vertices, %d triangles", path, v.shape[0], idx.shape[0])
    return mesh


def scene_from_obj(path, material=None, max_leaf_size=1, max_extent=None):
    """
    Scene with every triangle of the OBJ file in one material and a camera
    framing the mesh. Meshes wider than the float16 extent ceiling are
    normalised (or always, when max_extent is given).
    """
    mesh = load_obj(path)
    vertices = mesh.vertices
    if mesh.triangle_count:
        span = float(np.max(vertices.max(axis=0).astype(np.float64) - vertices.min(axis=0)))
        if max_extent is not None or span > F16_MAX:
            vertices, centre, scale = normalise_vertices(vertices, max_extent or 1.0e3)
            logger.warning("normalised %s: centre %s, scale %g", path, centre, scale)
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    else:
        lo, hi = np.zeros(3), np.ones(3)
    material = material or Material.diffuse((0.73, 0.73, 0.73))
    return assemble_scene(vertices, mesh.indices, np.zeros(mesh.triangle_count, dtype=np.uint32),
                          [material], Camera.framing(lo, hi), max_leaf_size=max_leaf_size, name=str(path))
