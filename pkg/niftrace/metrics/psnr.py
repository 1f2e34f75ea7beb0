"""
PSNR of HDR images, measured after tone compression.

Both images are compressed with log1p and converted to BT.601 YUV. The
luminance variant uses Y, the chrominance variant pools U and V into one
mean squared error, the RGB variant uses the compressed RGB. All three
share one peak: the largest absolute compressed-reference RGB value.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from niftrace.exceptions import ConfigurationError
from niftrace.nif.colour import rgb_to_yuv, tone_compress


@dataclass
class PsnrReport:
    psnr_rgb: float
    psnr_luma: float
    psnr_chroma: float

    def as_dict(self):
        return asdict(self)

    def __str__(self):
        def fmt(x):
            return "inf" if math.isinf(x) else f"{x:.3f}"
        return (f"PSNR RGB {fmt(self.psnr_rgb)} dB, luminance {fmt(self.psnr_luma)} dB, "
                f"chrominance {fmt(self.psnr_chroma)} dB")


def psnr_from_mse(mse, peak):
    """
    10 log10(peak^2 / mse), +inf for mse == 0, never below 0.
    """
    if mse == 0:
        return math.inf
    if peak <= 0:
        return 0.0
    return max(0.0, 10.0 * math.log10(peak * peak / mse))


def _pixels(image):
    return np.asarray(getattr(image, "pixels", image))


def psnr(reference, test):
    """
    Args:
        reference: HdrImage (or (H, W, 3) array) defining the peak.
        test: image of the same dimensions.

    Returns:
        PsnrReport.
    """
    ref = _pixels(reference)
    tst = _pixels(test)
    if ref.shape != tst.shape:
        raise ConfigurationError(f"image dimensions differ: {ref.shape} vs {tst.shape}")
    ref_c = tone_compress(ref).astype(np.float64)
    tst_c = tone_compress(tst).astype(np.float64)
    peak = float(np.max(np.abs(ref_c))) if ref_c.size else 0.0
    diff_yuv = rgb_to_yuv(ref_c) - rgb_to_yuv(tst_c)
    mse_rgb = float(np.mean((ref_c - tst_c) ** 2))
    mse_luma = float(np.mean(diff_yuv[..., 0] ** 2))
    mse_chroma = float(np.mean(diff_yuv[..., 1:] ** 2))
    return PsnrReport(psnr_rgb=psnr_from_mse(mse_rgb, peak), psnr_luma=psnr_from_mse(mse_luma, peak),
                      psnr_chroma=psnr_from_mse(mse_chroma, peak))
