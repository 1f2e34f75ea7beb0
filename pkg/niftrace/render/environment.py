"""
Equirectangular mapping and the environment light backends.

Convention: u = 0.5 + atan2(d.x, -d.z) / 2pi wrapped to [0, 1),
v = acos(d.y) / pi, so -z maps to the image centre and +y to the top row.
"""

import logging
import math
import os

import numpy as np
from numba import njit

from niftrace.exceptions import ConfigurationError
from niftrace.images import HdrImage, read_image
from niftrace.nif.network import DEFAULT_CHUNK, nif_forward
from niftrace.nif.weights_io import read_nifw
from niftrace.training.sampling import bilinear

logger = logging.getLogger(__name__)

BELOW_ONE = np.nextafter(np.float32(1.0), np.float32(0.0))


@njit(cache=True, error_model="numpy")
def dir_to_uv(dx, dy, dz):
    """
    Equirectangular coordinates of a unit direction, computed at float64.

    Returns:
        (u, v) float32 in [0, 1); u = 0.5 at the poles.
    """
    x = np.float64(dx)
    y = np.float64(dy)
    z = np.float64(dz)
    if x == 0.0 and z == 0.0:
        u = 0.5
    else:
        u = 0.5 + math.atan2(x, -z) / (2.0 * math.pi)
    if y > 1.0:
        y = 1.0
    elif y < -1.0:
        y = -1.0
    v = math.acos(y) / math.pi
    u32 = np.float32(u)
    if u32 >= np.float32(1.0):
        u32 = u32 - np.float32(1.0)
    if u32 < np.float32(0.0):
        u32 = np.float32(0.0)
    v32 = np.float32(v)
    if v32 >= np.float32(1.0):
        v32 = BELOW_ONE
    return u32, v32


@njit(cache=True, error_model="numpy")
def _dirs_to_uv(dirs, out):
    for i in range(dirs.shape[0]):
        u, v = dir_to_uv(dirs[i, 0], dirs[i, 1], dirs[i, 2])
        out[i, 0] = u
        out[i, 1] = v


def dir_to_equirect(d):
    """
    Args:
        d: unit direction(s), shape (3,) or (N, 3).

    Returns:
        (u, v) for one direction, or an (N, 2) float32 array.
    """
    arr = np.asarray(d, dtype=np.float32)
    if arr.ndim == 1:
        return dir_to_uv(arr[0], arr[1], arr[2])
    arr = np.ascontiguousarray(arr.reshape(-1, 3))
    out = np.empty((arr.shape[0], 2), dtype=np.float32)
    _dirs_to_uv(arr, out)
    return out


def equirect_to_dir(u, v):
    """
    Unit direction(s) of equirectangular coordinates, at float64.
    """
    phi = (np.asarray(u, dtype=np.float64) - 0.5) * 2.0 * np.pi
    theta = np.asarray(v, dtype=np.float64) * np.pi
    s = np.sin(theta)
    return np.stack([s * np.sin(phi), np.cos(theta), -s * np.cos(phi)], axis=-1)


class EnvironmentLight:
    """
    Radiance arriving from infinity, looked up by equirectangular coordinates.
    """
    kind = "abstract"

    def radiance(self, uv):
        """
        Args:
            uv: (N, 2) float32 coordinates.

        Returns:
            (N, 3) float32 linear radiance.
        """
        raise NotImplementedError

    def describe(self):
        return self.kind


class ConstantEnvironment(EnvironmentLight):
    kind = "constant"

    def __init__(self, rgb):
        rgb = np.broadcast_to(np.asarray(rgb, dtype=np.float32), (3,)).copy()
        if not np.all(np.isfinite(rgb)) or np.any(rgb < 0):
            raise ConfigurationError(f"constant environment must be finite and non-negative, got {rgb}")
        self.rgb = rgb

    def radiance(self, uv):
        return np.broadcast_to(self.rgb, (len(uv), 3)).copy()

    def describe(self):
        return "constant:" + ",".join(repr(float(c)) for c in self.rgb)


class ImageEnvironment(EnvironmentLight):
    kind = "image"

    def __init__(self, image, source=None):
        self.image = image
        self.source = source

    def radiance(self, uv):
        uv = np.asarray(uv, dtype=np.float32)
        return bilinear(self.image, uv[:, 0], uv[:, 1])

    def describe(self):
        return f"image:{self.source}" if self.source else "image"


class NifEnvironment(EnvironmentLight):
    kind = "nif"

    def __init__(self, weights, chunk_size=DEFAULT_CHUNK, source=None):
        self.weights = weights
        self.chunk_size = chunk_size
        self.source = source

    def radiance(self, uv):
        return nif_forward(self.weights, self.weights.config, uv, self.chunk_size)

    def describe(self):
        return f"nif:{self.source}" if self.source else "nif"


def parse_environment(spec):
    """
    Environment from a spec string: "constant:<v>" or "constant:<r>,<g>,<b>",
    "image:<path>" (.pfm/.hdr) or "nif:<path>" (.nifw). A bare path is
    dispatched on its extension.
    """
    if isinstance(spec, EnvironmentLight):
        return spec
    kind, _, arg = str(spec).partition(":")
    if not arg:
        kind, arg = ("nif" if str(spec).endswith(".nifw") else "image"), str(spec)
    if kind == "constant":
        try:
            values = [float(x) for x in arg.split(",")]
        except ValueError:
            raise ConfigurationError(f"malformed constant environment {spec!r}") from None
        if len(values) not in (1, 3):
            raise ConfigurationError("constant environment takes one or three values")
        return ConstantEnvironment(values if len(values) == 3 else values * 3)
    if kind == "image":
        return ImageEnvironment(read_image(arg), source=os.path.basename(arg))
    if kind == "nif":
        return NifEnvironment(read_nifw(arg), source=os.path.basename(arg))
    raise ConfigurationError(f"unknown environment kind {kind!r} (constant, image, nif)")


def as_environment(env):
    if isinstance(env, HdrImage):
        return ImageEnvironment(env)
    return parse_environment(env)
