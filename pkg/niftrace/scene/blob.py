"""
Serialisation of a Scene into one contiguous binary chunk (.sblob).

Layout, little-endian throughout: the 8-byte magic, a table of
(offset u64, length u64) for the six buffers in fixed order, then the raw
buffers back to back.
"""

import logging

import numpy as np

from niftrace.bvh.compact import COMPACT_NODE_DTYPE
from niftrace.constants import SBLOB_BUFFERS, SBLOB_MAGIC
from niftrace.exceptions import ConfigurationError, FormatError
from niftrace.scene.materials import MATERIAL_DTYPE, materials_from_table, material_table
from niftrace.scene.scene import CAMERA_DTYPE, Camera, Scene

logger = logging.getLogger(__name__)

VERTEX_DTYPE = np.dtype([("position", "<f4", (3,))])
INDEX_DTYPE = np.dtype([("vertices", "<u4", (3,)), ("material", "<u4")])
SPHERE_DTYPE = np.dtype([("centre", "<f4", (3,)), ("radius", "<f4"), ("material", "<u4")])
TABLE_DTYPE = np.dtype([("offset", "<u8"), ("length", "<u8")])

RECORDS = {
    "nodes": COMPACT_NODE_DTYPE,
    "vertices": VERTEX_DTYPE,
    "indices": INDEX_DTYPE,
    "spheres": SPHERE_DTYPE,
    "materials": MATERIAL_DTYPE,
    "camera": CAMERA_DTYPE,
}

HEADER_BYTES = len(SBLOB_MAGIC) + TABLE_DTYPE.itemsize * len(SBLOB_BUFFERS)


def _buffers(scene):
    vertices = np.zeros(scene.vertices.shape[0], dtype=VERTEX_DTYPE)
    vertices["position"] = scene.vertices
    indices = np.zeros(scene.triangle_count, dtype=INDEX_DTYPE)
    indices["vertices"] = scene.indices
    indices["material"] = scene.tri_material
    spheres = np.zeros(scene.sphere_count, dtype=SPHERE_DTYPE)
    spheres["centre"] = scene.centres
    spheres["radius"] = scene.radii
    spheres["material"] = scene.sphere_material
    return {
        "nodes": np.ascontiguousarray(scene.nodes),
        "vertices": vertices,
        "indices": indices,
        "spheres": spheres,
        "materials": material_table(scene.materials),
        "camera": scene.camera.to_record(),
    }


def serialize(scene):
    """
    Returns:
        bytes of the scene blob.
    """
    buffers = _buffers(scene)
    table = np.zeros(len(SBLOB_BUFFERS), dtype=TABLE_DTYPE)
    offset = HEADER_BYTES
    payload = []
    for i, key in enumerate(SBLOB_BUFFERS):
        raw = buffers[key].tobytes()
        table[i] = (offset, len(raw))
        payload.append(raw)
        offset += len(raw)
    blob = SBLOB_MAGIC + table.tobytes() + b"".join(payload)
    logger.info("serialised scene %s: %d bytes (%d node bytes)", scene.name, len(blob), len(payload[0]))
    return blob


def read_table(blob):
    """
    Validates the header of a blob.

    Returns:
        dict buffer name -> (offset, length).
    """
    if len(blob) < HEADER_BYTES:
        raise FormatError(f"header: blob of {len(blob)} bytes is shorter than the {HEADER_BYTES}-byte header")
    magic = bytes(blob[:len(SBLOB_MAGIC)])
    if magic[:-1] != SBLOB_MAGIC[:-1]:
        raise FormatError(f"header: bad magic {magic!r}")
    if magic[-1] != SBLOB_MAGIC[-1]:
        raise FormatError(f"header: unsupported version {magic[-1]}")
    table = np.frombuffer(blob, dtype=TABLE_DTYPE, count=len(SBLOB_BUFFERS), offset=len(SBLOB_MAGIC))
    spans = {}
    for key, (offset, length) in zip(SBLOB_BUFFERS, table.tolist()):
        size = RECORDS[key].itemsize
        if offset < HEADER_BYTES or offset + length > len(blob):
            raise FormatError(f"table: buffer {key} [{offset}, {offset + length}) is out of bounds")
        if length % size:
            raise FormatError(f"table: buffer {key} length {length} is not a multiple of {size}")
        spans[key] = (offset, length)
    ordered = sorted(spans.items(), key=lambda kv: kv[1][0])
    for (ka, (oa, la)), (kb, (ob, _)) in zip(ordered, ordered[1:]):
        if oa + la > ob:
            raise FormatError(f"table: buffers {ka} and {kb} overlap")
    end = max(o + n for o, n in spans.values())
    if end != len(blob):
        raise FormatError(f"table: buffers end at byte {end} but the blob holds {len(blob)}")
    if spans["camera"][1] != CAMERA_DTYPE.itemsize:
        raise FormatError("camera: exactly one camera record is required")
    return spans


def deserialize(blob):
    """
    Rebuilds a Scene from blob bytes without rebuilding the BVH.

    Raises:
        FormatError on bad magic, version, bounds or inconsistent buffers.
    """
    blob = bytes(blob)
    spans = read_table(blob)
    arrays = {}
    for key, (offset, length) in spans.items():
        dtype = RECORDS[key]
        arrays[key] = np.frombuffer(blob, dtype=dtype, count=length // dtype.itemsize, offset=offset).copy()
    try:
        scene = Scene(vertices=arrays["vertices"]["position"],
                      indices=arrays["indices"]["vertices"],
                      tri_material=arrays["indices"]["material"],
                      centres=arrays["spheres"]["centre"],
                      radii=arrays["spheres"]["radius"],
                      sphere_material=arrays["spheres"]["material"],
                      materials=materials_from_table(arrays["materials"]),
                      nodes=arrays["nodes"],
                      camera=Camera.from_record(arrays["camera"]),
                      name="sblob")
    except (ConfigurationError, ValueError) as err:
        raise FormatError(f"buffers: {err}") from err
    return scene


def write_sblob(path, scene):
    blob = serialize(scene)
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def read_sblob(path):
    with open(path, "rb") as f:
        return deserialize(f.read())
