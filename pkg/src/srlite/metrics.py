"""Image quality metrics on 8-bit images: PSNR and SSIM.

Inputs are uint8 arrays, (H, W) grayscale or (H, W, 3) RGB. Both metrics
treat the value range as [0, 255]; multichannel scores are the mean over
channels.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

__all__ = ["psnr", "ssim"]

PSNR_CAP_DB = 100.0

# 11x11 Gaussian window: sigma 1.5, truncated at 5 pixels either side
_SSIM_SIGMA = 1.5
_SSIM_TRUNCATE = 3.5
_SSIM_RADIUS = 5


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] not in (1, 3)):
        raise ValueError(f"expected (H, W) or (H, W, channels<=3), got {a.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical images cap at 100 dB."""
    a, b = _check_pair(a, b)
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(data_range**2 / mse))


def _ssim_channel(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def filt(img):
        return gaussian_filter(img, sigma=_SSIM_SIGMA, truncate=_SSIM_TRUNCATE)

    mu_a = filt(a)
    mu_b = filt(b)
    # population (not sample) moments over the Gaussian window
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    smap = num / den
    r = _SSIM_RADIUS
    return float(smap[r:-r, r:-r].mean())


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 255.0) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Uses K1 = 0.01, K2 = 0.03 and ignores a 5-pixel border where the window
    is incomplete. Symmetric in its arguments. Images must be larger than
    the window.
    """
    a, b = _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) <= 2 * _SSIM_RADIUS:
        raise ValueError(f"images must be at least {2 * _SSIM_RADIUS + 1} pixels per side")
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    if af.ndim == 2:
        return _ssim_channel(af, bf, data_range)
    scores = [_ssim_channel(af[..., c], bf[..., c], data_range) for c in range(af.shape[2])]
    return float(np.mean(scores))
