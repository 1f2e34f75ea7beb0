"""
HDR image currency and file codecs: PFM (exact float32), Radiance RGBE
(.hdr) and an 8-bit PNG preview.
"""

import logging
import os
import re
from dataclasses import dataclass

import imageio.v2 as iio
import numpy as np
from numba import njit

from niftrace.exceptions import ConfigurationError, FormatError

logger = logging.getLogger(__name__)

RGBE_MIN_RLE_WIDTH = 8
RGBE_MAX_RLE_WIDTH = 32767


@dataclass
class HdrImage:
    """
    Row-major linear RGB raster, (height, width, 3) float32; row 0 is the top.
    """
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ConfigurationError(f"image must have shape (H, W, 3), got {self.pixels.shape}")
        if self.pixels.shape[0] == 0 or self.pixels.shape[1] == 0:
            raise ConfigurationError("image must not be empty")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    @classmethod
    def constant(cls, width, height, rgb):
        rgb = np.asarray(rgb, dtype=np.float32).reshape(3)
        return cls(np.broadcast_to(rgb, (height, width, 3)).copy())

    def copy(self):
        return HdrImage(self.pixels.copy())

    def equals(self, other):
        return self.shape == other.shape and self.pixels.tobytes() == other.pixels.tobytes()


# PFM #

def write_pfm(path, image):
    """
    Little-endian colour PFM; scanlines are stored bottom to top.
    """
    h, w = image.height, image.width
    header = f"PF\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(image.pixels[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header + body)


def decode_pfm(data):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = re.compile(rb"\s*(\S+)").match(data, pos)
        if match is None:
            raise FormatError("pfm header: truncated")
        tokens.append(match.group(1))
        pos = match.end()
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    magic = tokens[0]
    if magic not in (b"PF", b"Pf"):
        raise FormatError(f"pfm header: bad magic {magic!r}")
    try:
        w, h = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError:
        raise FormatError("pfm header: malformed dimensions or scale") from None
    if w <= 0 or h <= 0 or scale == 0:
        raise FormatError("pfm header: non-positive dimensions or zero scale")
    channels = 3 if magic == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(data) - pos != 4 * count:
        raise FormatError(f"pfm raster: expected {4 * count} bytes, found {len(data) - pos}")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos).reshape(h, w, channels)
    raster = raster[::-1].astype(np.float32)
    if channels == 1:
        raster = np.repeat(raster, 3, axis=2)
    return HdrImage(raster)


def read_pfm(path):
    with open(path, "rb") as f:
        return decode_pfm(f.read())


# Radiance RGBE #

def rgbe_to_rgb(rgbe):
    """
    (..., 4) uint8 RGBE to (..., 3) float32; exponent 0 decodes to black.
    """
    rgb = rgbe[..., :3].astype(np.float32)
    e = rgbe[..., 3:].astype(np.int32)
    return np.where(e > 0, rgb * np.ldexp(np.float32(1.0), e - (128 + 8)), np.float32(0.0)).astype(np.float32)


def rgb_to_rgbe(rgb):
    """
    Shared-exponent encoding with truncated mantissas.
    """
    rgb = np.maximum(np.asarray(rgb, dtype=np.float64), 0.0)
    peak = rgb.max(axis=-1)
    mantissa, exponent = np.frexp(peak)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    ok = peak >= 1e-32
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(ok, mantissa * 256.0 / np.where(ok, peak, 1.0), 0.0)
    out[..., :3] = np.clip(np.floor(rgb * scale[..., None]), 0, 255).astype(np.uint8)
    out[..., 3] = np.where(ok, np.clip(exponent + 128, 0, 255), 0).astype(np.uint8)
    return out


@njit(cache=True)
def _decode_scanlines(data, pos, width, height, out):
    """
    Decodes RLE or flat scanlines into out (H, W, 4). Returns the end
    position, or -1 on malformed data.
    """
    n = data.shape[0]
    for y in range(height):
        rle = (width >= RGBE_MIN_RLE_WIDTH and width <= RGBE_MAX_RLE_WIDTH and pos + 4 <= n
               and data[pos] == 2 and data[pos + 1] == 2 and data[pos + 2] < 128
               and (np.int64(data[pos + 2]) << 8 | np.int64(data[pos + 3])) == width)
        if rle:
            pos += 4
            for c in range(4):
                x = 0
                while x < width:
                    if pos >= n:
                        return -1
                    count = np.int64(data[pos])
                    pos += 1
                    if count > 128:
                        count -= 128
                        if count > width - x or pos >= n:
                            return -1
                        for k in range(count):
                            out[y, x + k, c] = data[pos]
                        pos += 1
                    else:
                        if count == 0 or count > width - x or pos + count > n:
                            return -1
                        for k in range(count):
                            out[y, x + k, c] = data[pos + k]
                        pos += count
                    x += count
        else:
            if pos + 4 * width > n:
                return -1
            for x in range(width):
                for c in range(4):
                    out[y, x, c] = data[pos + 4 * x + c]
            pos += 4 * width
    return pos


def decode_hdr(data):
    """
    Radiance picture with 32-bit_rle_rgbe pixels in standard orientation.
    """
    pos = 0
    lines = []
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise FormatError("hdr header: missing blank line after the header")
        line = data[pos:end].decode("ascii", errors="replace")
        pos = end + 1
        if line == "":
            break
        lines.append(line)
    if lines and not lines[0].startswith("#?"):
        raise FormatError(f"hdr header: bad signature {lines[0]!r}")
    for line in lines:
        if line.startswith("FORMAT=") and line != "FORMAT=32-bit_rle_rgbe":
            raise FormatError(f"hdr header: unsupported pixel format {line[7:]!r}")
    end = data.find(b"\n", pos)
    if end < 0:
        raise FormatError("hdr resolution: missing resolution line")
    match = re.match(r"-Y (\d+) \+X (\d+)$", data[pos:end].decode("ascii", errors="replace"))
    if match is None:
        raise FormatError("hdr resolution: only '-Y H +X W' orientation is supported")
    h, w = int(match.group(1)), int(match.group(2))
    if w <= 0 or h <= 0:
        raise FormatError("hdr resolution: non-positive dimensions")
    pos = end + 1
    raw = np.frombuffer(data, dtype=np.uint8)
    rgbe = np.zeros((h, w, 4), dtype=np.uint8)
    stop = _decode_scanlines(raw, pos, w, h, rgbe)
    if stop < 0:
        raise FormatError("hdr scanlines: truncated or malformed run-length data")
    return HdrImage(rgbe_to_rgb(rgbe))


def read_hdr(path):
    with open(path, "rb") as f:
        return decode_hdr(f.read())


def encode_hdr(image):
    """
    Radiance picture; scanlines use run-length layout with literal runs
    where the width allows it, flat pixels otherwise.
    """
    h, w = image.height, image.width
    rgbe = rgb_to_rgbe(image.pixels)
    parts = [f"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n".encode("ascii")]
    rle = RGBE_MIN_RLE_WIDTH <= w <= RGBE_MAX_RLE_WIDTH
    for y in range(h):
        if not rle:
            parts.append(rgbe[y].tobytes())
            continue
        parts.append(bytes([2, 2, w >> 8, w & 0xFF]))
        for c in range(4):
            channel = rgbe[y, :, c]
            for start in range(0, w, 128):
                chunk = channel[start:start + 128]
                parts.append(bytes([len(chunk)]) + chunk.tobytes())
    return b"".join(parts)


def write_hdr(path, image):
    with open(path, "wb") as f:
        f.write(encode_hdr(image))


# dispatch #

READERS = {".pfm": read_pfm, ".hdr": read_hdr, ".pic": read_hdr}
WRITERS = {".pfm": write_pfm, ".hdr": write_hdr}


def read_image(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in READERS:
        raise FormatError(f"image: unsupported extension {ext!r} (use .pfm or .hdr)")
    image = READERS[ext](path)
    logger.info("read %s: %dx%d", path, image.width, image.height)
    return image


def write_image(path, image):
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in WRITERS:
        raise FormatError(f"image: unsupported extension {ext!r} (use .pfm or .hdr)")
    WRITERS[ext](path, image)


def tonemap_preview(image, exposure=0.0, gamma=2.2):
    """
    8-bit display version: scale by 2^exposure, gamma encode, clip.
    """
    x = np.maximum(image.pixels.astype(np.float64) * 2.0 ** exposure, 0.0)
    x = np.clip(x ** (1.0 / gamma), 0.0, 1.0)
    return np.round(x * 255.0).astype(np.uint8)


def write_png_preview(path, image, exposure=0.0, gamma=2.2):
    iio.imwrite(path, tonemap_preview(image, exposure, gamma))
