"""Evaluation scores: kernel SSD, error ratio, PSNR and success rate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

from .nonblind import HQParams, deconv_hyper_laplacian
from .types import as_image

PSNR_CAP_DB = 99.0
DEFAULT_SUCCESS_THRESHOLD = 3.0


@dataclass(frozen=True)
class EvalScores:
    ssd_kernel: float
    ssd_kernel_raw: float
    err_ratio: float
    psnr_db: float
    success: bool


def _common_frame(a: np.ndarray, b: np.ndarray):
    shape = (max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1]))

    def embed(m):
        out = np.zeros(shape)
        r0 = (shape[0] - m.shape[0]) // 2
        c0 = (shape[1] - m.shape[1]) // 2
        out[r0: r0 + m.shape[0], c0: c0 + m.shape[1]] = m
        return out

    return embed(a), embed(b)


def ssd_kernel_raw(k_est, k_gt) -> float:
    """Summed squared difference after centring both kernels in a common frame."""
    a, b = _common_frame(np.asarray(k_est, float), np.asarray(k_gt, float))
    return float(np.sum((a - b) ** 2))


def ssd_kernel_aligned(k_est, k_gt) -> float:
    """Smallest SSD over integer translations of ``k_est`` against ``k_gt``.

    Shifts range over +/- half the common frame in each axis. Kernels are
    treated as zero outside their support, so no mass is lost when shifting
    and the score is symmetric in its arguments.
    """
    a, b = _common_frame(np.asarray(k_est, float), np.asarray(k_gt, float))
    hr, hc = a.shape[0] // 2, a.shape[1] // 2
    # corr[s] = sum_p a[p - s] b[p]; full correlation puts s = 0 at the centre
    corr = signal.correlate(b, a, mode="full", method="direct")
    cr, cc = a.shape[0] - 1, a.shape[1] - 1
    window = corr[cr - hr: cr + hr + 1, cc - hc: cc + hc + 1]
    ssd = np.sum(a * a) + np.sum(b * b) - 2.0 * window
    return float(max(ssd.min(), 0.0))


def psnr(a, b, peak: float = 1.0) -> float:
    a = as_image(a, "a")
    b = as_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


def _crop(img, border):
    br, bc = border
    h, w = img.shape
    return img[br: h - br, bc: w - bc]


def ssd_image(a, b, border=(0, 0)) -> float:
    return float(np.sum((_crop(a, border) - _crop(b, border)) ** 2))


def error_ratio_from(x_est, x_kgt, x_gt, border=(0, 0)) -> float:
    """``SSD(x_est, x_gt) / SSD(x_kgt, x_gt)`` with a border excluded from both."""
    denom = ssd_image(x_kgt, x_gt, border)
    if denom == 0.0:
        raise ZeroDivisionError("known-kernel restoration equals ground truth; ratio undefined")
    return ssd_image(x_est, x_gt, border) / denom


def kernel_border(k) -> tuple:
    shape = np.shape(k)
    return (shape[0] // 2, shape[1] // 2)


def error_ratio(x_est, x_gt, y, k_gt, nb: HQParams | None = None) -> float:
    """Error ratio against the restoration obtained with the true kernel."""
    x_est = as_image(x_est, "x_est")
    x_gt = as_image(x_gt, "x_gt")
    if x_est.shape != x_gt.shape:
        raise ValueError("x_est and x_gt differ in shape")
    x_kgt = deconv_hyper_laplacian(y, k_gt, nb)
    return error_ratio_from(x_est, x_kgt, x_gt, kernel_border(k_gt))


def success_rate(errs: Sequence[float], threshold: float = DEFAULT_SUCCESS_THRESHOLD) -> float:
    errs = list(errs)
    if not errs:
        raise ValueError("success_rate needs at least one error ratio")
    return sum(1 for e in errs if e <= threshold) / len(errs)


def evaluate(x_est, k_est, x_gt, y, k_gt, nb: HQParams | None = None,
             threshold: float = DEFAULT_SUCCESS_THRESHOLD, x_kgt=None) -> EvalScores:
    if x_kgt is None:
        x_kgt = deconv_hyper_laplacian(y, k_gt, nb)
    err = error_ratio_from(x_est, x_kgt, x_gt, kernel_border(k_gt))
    return EvalScores(
        ssd_kernel=ssd_kernel_aligned(k_est, k_gt),
        ssd_kernel_raw=ssd_kernel_raw(k_est, k_gt),
        err_ratio=err,
        psnr_db=psnr(np.clip(x_est, 0, 1), x_gt),
        success=err <= threshold,
    )
