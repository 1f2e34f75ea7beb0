"""
Fixed colour-conversion matrices and the logarithmic HDR range mapping.
"""

import numpy as np

from niftrace.exceptions import ConfigurationError

# BT.601 luma weights and chroma ranges
KR = 0.299
KB = 0.114
KG = 1.0 - KR - KB
U_MAX = 0.436
V_MAX = 0.615

RGB_TO_YUV = np.array([
    [KR, KG, KB],
    [-U_MAX * KR / (1.0 - KB), -U_MAX * KG / (1.0 - KB), U_MAX],
    [V_MAX, -V_MAX * KG / (1.0 - KR), -V_MAX * KB / (1.0 - KR)],
], dtype=np.float64)
YUV_TO_RGB = np.linalg.inv(RGB_TO_YUV)

RGB_TO_YCOCG = np.array([
    [0.25, 0.5, 0.25],
    [0.5, 0.0, -0.5],
    [-0.25, 0.5, -0.25],
], dtype=np.float64)
YCOCG_TO_RGB = np.array([
    [1.0, 1.0, -1.0],
    [1.0, 0.0, 1.0],
    [1.0, -1.0, -1.0],
], dtype=np.float64)

COLOUR_MATRICES = {
    "identity": (np.eye(3), np.eye(3)),
    "yuv_to_rgb": (YUV_TO_RGB, RGB_TO_YUV),
    "ycocg_to_rgb": (YCOCG_TO_RGB, RGB_TO_YCOCG),
}
# stable codes used by the weight file
COLOUR_CODES = {"identity": 0, "yuv_to_rgb": 1, "ycocg_to_rgb": 2}
TONE_CODES = {"log1p": 0}


def _check(kind):
    if kind not in COLOUR_MATRICES:
        raise ConfigurationError(f"unknown colour matrix {kind!r}; choose from {sorted(COLOUR_MATRICES)}")


def colour_matrix(kind, dtype=np.float32):
    """
    Matrix C mapping the network's output colour space to RGB: rgb = C @ y.
    """
    _check(kind)
    return COLOUR_MATRICES[kind][0].astype(dtype)


def inverse_colour_matrix(kind, dtype=np.float32):
    """
    Matrix mapping RGB into the network's output colour space.
    """
    _check(kind)
    return COLOUR_MATRICES[kind][1].astype(dtype)


def rgb_to_yuv(rgb):
    """
    BT.601 YUV of (..., 3) RGB values, computed at float64.
    """
    return np.asarray(rgb, dtype=np.float64) @ RGB_TO_YUV.T


def tone_compress(x):
    """
    ln(1 + x) per channel at float32. Negative inputs are treated as 0.
    """
    x = np.asarray(x, dtype=np.float32)
    return np.log1p(np.maximum(x, np.float32(0.0)))


def tone_expand(y):
    """
    exp(y) - 1 per channel at float32, clamped below at 0.
    """
    y = np.asarray(y, dtype=np.float32)
    return np.maximum(np.expm1(y), np.float32(0.0))
