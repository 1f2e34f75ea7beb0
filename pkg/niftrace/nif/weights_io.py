"""
Weight files (.nifw): magic, version, architecture fields, the float32
arrays of every layer (weights row-major, then biases) and a CRC32 trailer.
"""

import logging
import zlib

import numpy as np

from niftrace.constants import NIFW_MAGIC, NIFW_VERSION
from niftrace.exceptions import ConfigurationError, FormatError
from niftrace.nif.colour import COLOUR_CODES, TONE_CODES
from niftrace.nif.network import NifConfig, NifWeights

logger = logging.getLogger(__name__)

HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("hidden", "<u4"),
    ("layers", "<u4"),
    ("fourier_dim", "<u4"),
    ("colour_matrix", "<u4"),
    ("tone_map", "<u4"),
])
TRAILER_DTYPE = np.dtype("<u4")


def encode_nifw(weights):
    """
    Returns:
        bytes of the weight file.
    """
    config = weights.config
    weights.check()
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (NIFW_MAGIC, NIFW_VERSION, config.hidden, config.layers, config.fourier_dim,
                 COLOUR_CODES[config.colour_matrix], TONE_CODES[config.tone_map])
    parts = [header.tobytes()]
    for w, b in zip(weights.weights, weights.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + np.array([zlib.crc32(body)], dtype=TRAILER_DTYPE).tobytes()


def decode_nifw(data):
    """
    Raises:
        FormatError naming the failing stage.
    """
    data = bytes(data)
    if len(data) < HEADER_DTYPE.itemsize + TRAILER_DTYPE.itemsize:
        raise FormatError(f"header: {len(data)} bytes is too short for a weight file")
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(header["magic"]) != NIFW_MAGIC:
        raise FormatError(f"header: bad magic {bytes(header['magic'])!r}")
    if int(header["version"]) != NIFW_VERSION:
        raise FormatError(f"header: unsupported version {int(header['version'])}")
    body, trailer = data[:-TRAILER_DTYPE.itemsize], data[-TRAILER_DTYPE.itemsize:]
    stored = int(np.frombuffer(trailer, dtype=TRAILER_DTYPE)[0])
    if zlib.crc32(body) != stored:
        raise FormatError("checksum: CRC32 mismatch")
    colour = {v: k for k, v in COLOUR_CODES.items()}.get(int(header["colour_matrix"]))
    tone = {v: k for k, v in TONE_CODES.items()}.get(int(header["tone_map"]))
    if colour is None or tone is None:
        raise FormatError("header: unknown colour matrix or tone map code")
    try:
        config = NifConfig(hidden=int(header["hidden"]), layers=int(header["layers"]),
                           fourier_dim=int(header["fourier_dim"]), colour_matrix=colour, tone_map=tone)
    except ConfigurationError as err:
        raise FormatError(f"header: {err}") from err

    offset = HEADER_DTYPE.itemsize
    expected = offset + 4 * config.parameter_count()
    if expected != len(body):
        raise FormatError(f"layers: expected {expected - offset} parameter bytes, found {len(body) - offset}")
    weights, biases = [], []
    for fan_in, fan_out in config.layer_shapes():
        w = np.frombuffer(body, dtype="<f4", count=fan_in * fan_out, offset=offset)
        offset += w.nbytes
        b = np.frombuffer(body, dtype="<f4", count=fan_out, offset=offset)
        offset += b.nbytes
        weights.append(w.reshape(fan_in, fan_out).astype(np.float32))
        biases.append(b.astype(np.float32))
    return NifWeights(config, weights, biases)


def write_nifw(path, weights):
    data = encode_nifw(weights)
    with open(path, "wb") as f:
        f.write(data)
    logger.info("wrote %s: %s, %d bytes", path, weights.config.label(), len(data))
    return len(data)


def read_nifw(path):
    with open(path, "rb") as f:
        return decode_nifw(f.read())
