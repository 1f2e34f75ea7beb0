"""
Surface materials and their packed table.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from niftrace.exceptions import ConfigurationError


class MaterialKind(IntEnum):
    DIFFUSE = 0
    MIRROR = 1
    DIELECTRIC = 2
    EMISSIVE = 3


# 32 bytes per record
MATERIAL_DTYPE = np.dtype([
    ("kind", "<u4"),
    ("albedo", "<f4", (3,)),
    ("emission", "<f4", (3,)),
    ("ior", "<f4"),
])


def _rgb(value):
    return np.asarray(value, dtype=np.float32).reshape(3)


@dataclass
class Material:
    """
    Args:
        kind: MaterialKind.
        albedo: reflectance in [0, 1] (diffuse, mirror, dielectric tint).
        emission: emitted radiance (emissive only).
        ior: index of refraction (dielectric only), > 1.
    """
    kind: MaterialKind = MaterialKind.DIFFUSE
    albedo: np.ndarray = field(default_factory=lambda: np.ones(3, dtype=np.float32))
    emission: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    ior: float = 1.0

    def __post_init__(self):
        self.kind = MaterialKind(int(self.kind))
        self.albedo = _rgb(self.albedo)
        self.emission = _rgb(self.emission)
        self.ior = np.float32(self.ior)
        if not (np.all(np.isfinite(self.albedo)) and np.all(np.isfinite(self.emission))):
            raise ConfigurationError("material colours must be finite")
        if np.any(self.albedo < 0) or np.any(self.albedo > 1):
            raise ConfigurationError(f"albedo must lie in [0, 1], got {self.albedo}")
        if np.any(self.emission < 0):
            raise ConfigurationError(f"emission must be non-negative, got {self.emission}")
        if self.kind == MaterialKind.DIELECTRIC and not self.ior > 1:
            raise ConfigurationError(f"dielectric ior must exceed 1, got {self.ior}")
        if self.kind == MaterialKind.EMISSIVE and not np.any(self.emission > 0):
            raise ConfigurationError("emissive material needs a positive emission")

    @classmethod
    def diffuse(cls, albedo):
        return cls(MaterialKind.DIFFUSE, albedo=albedo)

    @classmethod
    def mirror(cls, albedo=(1.0, 1.0, 1.0)):
        return cls(MaterialKind.MIRROR, albedo=albedo)

    @classmethod
    def dielectric(cls, ior=1.5, albedo=(1.0, 1.0, 1.0)):
        return cls(MaterialKind.DIELECTRIC, albedo=albedo, ior=ior)

    @classmethod
    def emissive(cls, emission):
        return cls(MaterialKind.EMISSIVE, albedo=(0.0, 0.0, 0.0), emission=emission)

    @property
    def is_emissive(self):
        return self.kind == MaterialKind.EMISSIVE


def material_table(materials):
    """
    Packs a list of materials into a MATERIAL_DTYPE array.
    """
    table = np.zeros(len(materials), dtype=MATERIAL_DTYPE)
    for i, m in enumerate(materials):
        table["kind"][i] = int(m.kind)
        table["albedo"][i] = m.albedo
        table["emission"][i] = m.emission
        table["ior"][i] = m.ior
    return table


def materials_from_table(table):
    return [Material(MaterialKind(int(r["kind"])), albedo=r["albedo"], emission=r["emission"],
                     ior=r["ior"]) for r in table]


def kernel_materials(materials):
    """
    Column arrays of the material table for the jitted kernels.

    Returns:
        (kind int64 (M,), albedo f32 (M, 3), emission f32 (M, 3), ior f32 (M,))
    """
    table = material_table(materials)
    return (table["kind"].astype(np.int64),
            np.ascontiguousarray(table["albedo"], dtype=np.float32).reshape(-1, 3),
            np.ascontiguousarray(table["emission"], dtype=np.float32).reshape(-1, 3),
            np.ascontiguousarray(table["ior"], dtype=np.float32))
