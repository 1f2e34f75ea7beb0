"""
The neural image field: Fourier embedding of (u, v), a dense/ReLU trunk with
the embedding concatenated back in after one early layer, an activation-free
output layer, a fixed colour matrix and the inverse tone mapping.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
from numba import njit, prange

from niftrace.constants import DEFAULT_FOURIER_DIM, DEFAULT_HIDDEN, DEFAULT_LAYERS
from niftrace.core.precision import quantise_f16_stochastic
from niftrace.exceptions import ConfigurationError
from niftrace.nif.colour import COLOUR_MATRICES, TONE_CODES, colour_matrix

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 65536


def concat_layer_index(layers):
    """
    1-based index of the trunk layer whose output is concatenated with the
    embedding: the largest odd integer <= layers // 2, at least 1.
    """
    if layers < 2:
        raise ConfigurationError(f"a field needs at least 2 layers, got {layers}")
    c = layers // 2
    if c % 2 == 0:
        c -= 1
    return max(c, 1)


@dataclass
class NifConfig:
    """
    Architecture of a field.

    Args:
        hidden: trunk width H.
        layers: number of dense+ReLU layers L.
        fourier_dim: embedding width F, a multiple of 4 smaller than H.
        colour_matrix: fixed output matrix (identity, yuv_to_rgb, ycocg_to_rgb).
        tone_map: range mapping of the targets (log1p).
    """
    hidden: int = DEFAULT_HIDDEN
    layers: int = DEFAULT_LAYERS
    fourier_dim: int = DEFAULT_FOURIER_DIM
    colour_matrix: str = "yuv_to_rgb"
    tone_map: str = "log1p"

    def __post_init__(self):
        self.hidden = int(self.hidden)
        self.layers = int(self.layers)
        self.fourier_dim = int(self.fourier_dim)
        if self.fourier_dim <= 0 or self.fourier_dim % 4:
            raise ConfigurationError(f"fourier_dim must be a positive multiple of 4, got {self.fourier_dim}")
        if self.hidden <= self.fourier_dim:
            raise ConfigurationError(f"hidden ({self.hidden}) must exceed fourier_dim ({self.fourier_dim})")
        if self.layers < 2:
            raise ConfigurationError(f"layers must be at least 2, got {self.layers}")
        if self.colour_matrix not in COLOUR_MATRICES:
            raise ConfigurationError(f"unknown colour matrix {self.colour_matrix!r}")
        if self.tone_map not in TONE_CODES:
            raise ConfigurationError(f"unknown tone map {self.tone_map!r}")

    @property
    def concat_layer(self):
        return concat_layer_index(self.layers)

    def layer_shapes(self):
        """
        (fan_in, fan_out) of every dense layer, output layer last.
        """
        h, f = self.hidden, self.fourier_dim
        shapes = []
        for i in range(1, self.layers + 1):
            fan_in = f if i == 1 else h
            fan_out = h - f if i == self.concat_layer else h
            shapes.append((fan_in, fan_out))
        shapes.append((h, 3))
        return shapes

    def parameter_count(self):
        return sum(i * o + o for i, o in self.layer_shapes())

    def weight_bytes(self, bytes_per_parameter=4):
        return self.parameter_count() * bytes_per_parameter

    def label(self):
        return f"H{self.hidden}L{self.layers}F{self.fourier_dim}-{self.colour_matrix}"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class NifWeights:
    """
    Dense layer parameters; weights are stored (fan_in, fan_out) so a layer
    computes x @ W + b.
    """
    config: NifConfig
    weights: List[np.ndarray] = field(default_factory=list)
    biases: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.check()

    def check(self):
        """
        Shape audit against the config; raises ConfigurationError.
        """
        shapes = self.config.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ConfigurationError(f"expected {len(shapes)} layers, got {len(self.weights)} weights "
                                     f"and {len(self.biases)} biases")
        for k, ((fan_in, fan_out), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ConfigurationError(f"layer {k}: expected W {(fan_in, fan_out)} b {(fan_out,)}, "
                                         f"got W {w.shape} b {b.shape}")
        return True

    @classmethod
    def zeros(cls, config, dtype=np.float32):
        shapes = config.layer_shapes()
        return cls(config, [np.zeros(s, dtype=dtype) for s in shapes],
                   [np.zeros(s[1], dtype=dtype) for s in shapes])

    @classmethod
    def he_uniform(cls, config, rng, dtype=np.float32):
        """
        He-uniform initialisation (limit sqrt(6 / fan_in)), zero biases.
        """
        weights, biases = [], []
        for fan_in, fan_out in config.layer_shapes():
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(config, weights, biases)

    def parameters(self):
        """
        Flat list [W0, b0, W1, b1, ...] of the parameter arrays (not copies).
        """
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_parameters(cls, config, params):
        return cls(config, list(params[0::2]), list(params[1::2]))

    def copy(self, dtype=None):
        dtype = dtype or self.weights[0].dtype
        return NifWeights(self.config, [w.astype(dtype, copy=True) for w in self.weights],
                          [b.astype(dtype, copy=True) for b in self.biases])

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def quantise_f16(self, rng):
        """
        Copy whose parameters are stochastically rounded to float16 values
        (stored widened to float32).
        """
        return NifWeights.from_parameters(self.config, [quantise_f16_stochastic(p, rng)
                                                        for p in self.parameters()])

    def flat(self):
        """
        Returns:
            (params float32 (P,), layout int64 (L + 1, 4) of
            [weight offset, bias offset, fan_in, fan_out]).
        """
        chunks = []
        layout = np.zeros((len(self.weights), 4), dtype=np.int64)
        offset = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            layout[k] = (offset, offset + w.size, w.shape[0], w.shape[1])
            chunks.extend([np.ascontiguousarray(w, dtype=np.float32).reshape(-1),
                           np.ascontiguousarray(b, dtype=np.float32)])
            offset += w.size + b.size
        return np.concatenate(chunks), layout


@njit(cache=True, error_model="numpy")
def encode_row(u, v, bands, out):
    """
    Writes sin/cos of 2^j * pi * u and 2^j * pi * v for j < bands into out,
    evaluated at float64.
    """
    uu = np.float64(u)
    vv = np.float64(v)
    scale = math.pi
    for j in range(bands):
        out[4 * j] = np.float32(math.sin(scale * uu))
        out[4 * j + 1] = np.float32(math.cos(scale * uu))
        out[4 * j + 2] = np.float32(math.sin(scale * vv))
        out[4 * j + 3] = np.float32(math.cos(scale * vv))
        scale *= 2.0


@njit(parallel=True, cache=True, error_model="numpy")
def _encode_rows(uv, bands, out):
    for r in prange(uv.shape[0]):
        encode_row(uv[r, 0], uv[r, 1], bands, out[r])


def fourier_encode(u, v, fourier_dim):
    """
    Embedding of one coordinate pair: for band j, [sin(2^j pi u),
    cos(2^j pi u), sin(2^j pi v), cos(2^j pi v)].

    Returns:
        float32 vector of length fourier_dim.
    """
    if fourier_dim % 4:
        raise ConfigurationError("fourier_dim must be a multiple of 4")
    out = np.empty(fourier_dim, dtype=np.float32)
    encode_row(np.float32(u), np.float32(v), fourier_dim // 4, out)
    return out


def fourier_encode_batch(uv, fourier_dim):
    """
    Embedding of (N, 2) coordinates as an (N, fourier_dim) float32 array.
    """
    uv = np.ascontiguousarray(uv, dtype=np.float32).reshape(-1, 2)
    if fourier_dim % 4:
        raise ConfigurationError("fourier_dim must be a multiple of 4")
    out = np.empty((uv.shape[0], fourier_dim), dtype=np.float32)
    _encode_rows(uv, fourier_dim // 4, out)
    return out


@njit(cache=True, error_model="numpy")
def _dense(params, w_off, b_off, fan_in, fan_out, x, y, relu):
    for o in range(fan_out):
        acc = params[b_off + o]
        for i in range(fan_in):
            acc += x[i] * params[w_off + i * fan_out + o]
        if relu and acc < np.float32(0.0):
            acc = np.float32(0.0)
        y[o] = acc


@njit(cache=True, error_model="numpy")
def forward_row(u, v, params, layout, concat, fourier_dim, hidden, cmat, enc, xa, xb, out, row):
    """
    Full pipeline for one row. Scratch vectors enc (F), xa and xb (H) belong to the caller.
    """
    encode_row(u, v, fourier_dim // 4, enc)
    n_trunk = layout.shape[0] - 1
    for i in range(fourier_dim):
        xa[i] = enc[i]
    for k in range(n_trunk):
        _dense(params, layout[k, 0], layout[k, 1], layout[k, 2], layout[k, 3], xa, xb, True)
        width = layout[k, 3]
        if k + 1 == concat:
            for i in range(fourier_dim):
                xb[width + i] = enc[i]
            width += fourier_dim
        for i in range(width):
            xa[i] = xb[i]
    _dense(params, layout[n_trunk, 0], layout[n_trunk, 1], layout[n_trunk, 2], 3, xa, xb, False)
    for c in range(3):
        rgb = cmat[c, 0] * xb[0] + cmat[c, 1] * xb[1] + cmat[c, 2] * xb[2]
        value = np.float32(math.expm1(rgb))
        if value < np.float32(0.0):
            value = np.float32(0.0)
        out[row, c] = value


@njit(parallel=True, cache=True, error_model="numpy")
def _forward_rows(uv, start, stop, params, layout, concat, fourier_dim, hidden, cmat, out):
    for r in prange(start, stop):
        enc = np.empty(fourier_dim, dtype=np.float32)
        xa = np.empty(hidden, dtype=np.float32)
        xb = np.empty(hidden, dtype=np.float32)
        forward_row(uv[r, 0], uv[r, 1], params, layout, concat, fourier_dim, hidden, cmat,
                    enc, xa, xb, out, r)


def nif_forward(weights, config, uv, chunk_size=DEFAULT_CHUNK):
    """
    Linear HDR radiance of the field at (N, 2) coordinates in [0, 1)^2.

    Rows are processed in chunks of chunk_size; every row runs the same
    scalar arithmetic, so the result does not depend on the chunking.

    Returns:
        (N, 3) float32.
    """
    config = config or weights.config
    if config != weights.config:
        # re-audits the shapes against the requested architecture
        weights = NifWeights(config, weights.weights, weights.biases)
    uv = np.ascontiguousarray(uv, dtype=np.float32)
    if uv.ndim != 2 or uv.shape[1] != 2:
        raise ConfigurationError(f"coordinates must have shape (N, 2), got {uv.shape}")
    if chunk_size < 1:
        raise ConfigurationError("chunk_size must be at least 1")
    params, layout = weights.flat()
    cmat = colour_matrix(config.colour_matrix)
    out = np.empty((uv.shape[0], 3), dtype=np.float32)
    for start in range(0, uv.shape[0], chunk_size):
        stop = min(start + chunk_size, uv.shape[0])
        _forward_rows(uv, start, stop, params, layout, config.concat_layer, config.fourier_dim,
                      config.hidden, cmat, out)
    return out


def shape_audit(config):
    """
    Walks the layer list and checks the activation widths: F at the input,
    H - F after the concat layer's dense output, H everywhere else.
    """
    width = config.fourier_dim
    for k, (fan_in, fan_out) in enumerate(config.layer_shapes()[:-1], start=1):
        if fan_in != width:
            raise ConfigurationError(f"layer {k} expects {fan_in} inputs but receives {width}")
        width = fan_out
        if k == config.concat_layer:
            if fan_out != config.hidden - config.fourier_dim:
                raise ConfigurationError(f"concat layer {k} must output H - F")
            width += config.fourier_dim
        if width != config.hidden:
            raise ConfigurationError(f"trunk width after layer {k} is {width}, expected {config.hidden}")
    if config.layer_shapes()[-1] != (config.hidden, 3):
        raise ConfigurationError("output layer must map H to 3")
    return True
