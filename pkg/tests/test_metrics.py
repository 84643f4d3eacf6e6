import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowrank_deblur import metrics


def brute_aligned_ssd(a, b):
    """Shift ``a`` over every offset in a zero-extended canvas and keep the best SSD."""
    a, b = metrics._common_frame(np.asarray(a, float), np.asarray(b, float))
    H, W = a.shape
    best = math.inf
    for dr in range(-(H // 2), H // 2 + 1):
        for dc in range(-(W // 2), W // 2 + 1):
            big = np.zeros((3 * H, 3 * W))
            big[H + dr: 2 * H + dr, W + dc: 2 * W + dc] = a
            ref = np.zeros((3 * H, 3 * W))
            ref[H: 2 * H, W: 2 * W] = b
            best = min(best, float(np.sum((big - ref) ** 2)))
    return best


def test_identical_kernels_score_zero():
    k = np.full((5, 5), 1 / 25)
    assert metrics.ssd_kernel_aligned(k, k) == pytest.approx(0.0, abs=1e-15)


def test_shifted_delta_aligns_to_zero():
    a = np.zeros((5, 5))
    a[2, 2] = 1
    b = np.zeros((5, 5))
    b[3, 2] = 1
    assert metrics.ssd_kernel_aligned(a, b) == pytest.approx(0.0, abs=1e-15)
    assert metrics.ssd_kernel_raw(a, b) == 2.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(3, 3), (5, 3), (5, 7)]), st.sampled_from([(3, 3), (5, 5)]))
def test_aligned_ssd_matches_exhaustive_oracle(seed, sa, sb):
    r = np.random.default_rng(seed)
    a, b = r.uniform(size=sa), r.uniform(size=sb)
    a /= a.sum()
    b /= b.sum()
    assert metrics.ssd_kernel_aligned(a, b) == pytest.approx(brute_aligned_ssd(a, b), abs=1e-12)
    assert metrics.ssd_kernel_aligned(a, b) == pytest.approx(metrics.ssd_kernel_aligned(b, a), abs=1e-12)


def test_psnr_values(rng):
    a = np.zeros((10, 10))
    b = np.full((10, 10), 0.1)
    assert metrics.psnr(a, b) == pytest.approx(20.0)
    assert metrics.psnr(a, a) == metrics.PSNR_CAP_DB
    x, y = rng.uniform(size=(4, 4)), rng.uniform(size=(4, 4))
    assert metrics.psnr(x, y) == pytest.approx(10 * math.log10(1 / np.mean((x - y) ** 2)))
    with pytest.raises(ValueError):
        metrics.psnr(a, np.zeros((3, 3)))


def test_psnr_drops_with_noise_variance(rng):
    base = rng.uniform(size=(32, 32))
    means = []
    for s in (0.01, 0.02, 0.05, 0.1):
        means.append(np.mean([metrics.psnr(base, base + s * rng.standard_normal(base.shape))
                              for _ in range(20)]))
    assert np.all(np.diff(means) < 0)


def test_error_ratio_trivial_cases(rng):
    gt = rng.uniform(size=(12, 12))
    kgt = gt + 0.1 * rng.standard_normal(gt.shape)
    assert metrics.error_ratio_from(kgt, kgt, gt, (2, 2)) == 1.0
    assert metrics.error_ratio_from(gt, kgt, gt, (2, 2)) == 0.0
    with pytest.raises(ZeroDivisionError):
        metrics.error_ratio_from(kgt, gt, gt)


def test_error_ratio_ignores_border_and_constant_offset(rng):
    gt = rng.uniform(size=(12, 12))
    kgt = gt + 0.1 * rng.standard_normal(gt.shape)
    est = gt + 0.2 * rng.standard_normal(gt.shape)
    r = metrics.error_ratio_from(est, kgt, gt, (2, 2))
    est2 = est.copy()
    est2[0, :] = 100.0
    assert metrics.error_ratio_from(est2, kgt, gt, (2, 2)) == r
    c = 0.37
    assert metrics.error_ratio_from(est + c, kgt + c, gt + c, (2, 2)) == pytest.approx(r)


def test_success_rate():
    assert metrics.success_rate([1, 1, 1]) == 1.0
    assert metrics.success_rate([2, 4], 3) == 0.5
    rates = [metrics.success_rate([1, 2, 3, 4, 5], t) for t in np.linspace(0, 6, 13)]
    assert np.all(np.diff(rates) >= 0)
    with pytest.raises(ValueError):
        metrics.success_rate([])


def test_evaluate_with_true_kernel_is_ratio_one():
    from lowrank_deblur.synthetic import blurry_pair, motion_kernel

    k = motion_kernel(7, 0)
    x, y = blurry_pair((40, 40), k, 0)
    s = metrics.evaluate(metrics.deconv_hyper_laplacian(y, k), k, x, y, k)
    assert s.err_ratio == pytest.approx(1.0)
    assert s.ssd_kernel == pytest.approx(0.0, abs=1e-15)
    assert s.success
