import numpy as np
import pytest

from lowrank_deblur import metrics, pipeline
from lowrank_deblur.synthetic import blurry_pair, motion_kernel
from lowrank_deblur.types import Kernel, default_config


@pytest.mark.parametrize("v,expected", [(3.0, 3), (4.0, 3), (4.01, 5), (6.0, 5), (7.9, 7), (1.2, 3), (16.26, 17)])
def test_round_odd(v, expected):
    assert pipeline.round_odd(v) == expected


def test_pyramid_kernel_chain_for_default_settings():
    levels = pipeline.build_pyramid(np.zeros((255, 255)), (23, 23), 7)
    assert [lv.kernel_dims[0] for lv in levels] == [3, 5, 5, 9, 11, 17, 23]
    assert levels[-1].image.shape == (255, 255)
    assert [lv.scale_index for lv in levels] == list(range(6, -1, -1))
    shapes = [lv.image.shape[0] for lv in levels]
    assert shapes == sorted(shapes)


def test_pyramid_rejects_oversized_kernel():
    with pytest.raises(ValueError):
        pipeline.build_pyramid(np.zeros((20, 20)), (23, 23), 2)
    with pytest.raises(ValueError):
        pipeline.build_pyramid(np.zeros((20, 20)), (3, 3), 0)


def test_resize_bilinear_preserves_constants():
    out = pipeline.resize_bilinear(np.full((10, 14), 0.3), (7, 9))
    np.testing.assert_allclose(out, 0.3)


def test_init_kernel():
    k = np.asarray(pipeline.init_kernel(5))
    assert k[2, 1] == k[2, 2] == 0.5
    assert k.sum() == 1.0


def test_threshold_kernel():
    w = np.array([[0.01, 0.5, 0.49]])
    k = np.asarray(pipeline.threshold_kernel(w, 0.05))
    assert k[0, 0] == 0.0
    assert k.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pipeline.threshold_kernel(w, 1.0)


def test_recenter_kernel_moves_mass_to_centre():
    w = np.zeros((7, 7))
    w[1, 5] = 1.0
    k = np.asarray(pipeline.recenter_kernel(w))
    assert k[3, 3] == 1.0


def test_lambda_schedule():
    cfg = default_config().with_(iter_max=5, lam=0.01, lam_start=0.16)
    np.testing.assert_allclose(pipeline.lambda_schedule(cfg), [0.16, 0.08, 0.04, 0.02, 0.01])
    flat = pipeline.lambda_schedule(cfg.with_(lam_start=0.0))
    np.testing.assert_array_equal(flat, 0.01)


def test_border_mask():
    m = pipeline.border_mask((7, 9), (3, 5))
    assert m.sum() == 5 * 5
    assert m[0].sum() == 0 and m[:, 1].sum() == 0


def test_invalid_config_rejected():
    with pytest.raises(ValueError, match="odd"):
        pipeline.deblur_single_scale(np.zeros((20, 20)), default_config().with_(kernel_size=(4, 4)))


def test_single_scale_returns_valid_kernels():
    k = motion_kernel(7, 3)
    _, y = blurry_pair((40, 40), k, 3)
    cfg = default_config().with_(kernel_size=(7, 7), iter_max=4)
    res = pipeline.deblur_single_scale(y, cfg)
    assert isinstance(res.kernel, Kernel)
    assert res.image.shape == y.shape
    assert len(res.objective_trace) == 4


def test_blind_pipeline_recovers_small_blur():
    k = motion_kernel(9, 0)
    x, y = blurry_pair((64, 64), k, 0)
    cfg = default_config().with_(kernel_size=(9, 9), pyramid_levels=3)
    res = pipeline.deblur_blind(y, cfg)
    assert len(res.per_level_kernels) == 3
    assert metrics.evaluate(res.image, res.kernel, x, y, k).err_ratio <= 3.0


def test_pipeline_is_deterministic():
    k = motion_kernel(7, 1)
    _, y = blurry_pair((36, 36), k, 1)
    cfg = default_config().with_(kernel_size=(7, 7), iter_max=3, pyramid_levels=2)
    a = pipeline.deblur_blind(y, cfg)
    b = pipeline.deblur_blind(y, cfg)
    assert np.array_equal(a.image, b.image)
    assert a.kernel == b.kernel
