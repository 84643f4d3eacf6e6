import math

import numpy as np
import pytest

from lowrank_deblur.types import (DeblurConfig, ExperimentReport, GradientPair, Kernel, as_image,
                                  default_config, dump_config, parse_config_text, validate_config)


def test_as_image_rejects_bad_input():
    with pytest.raises(ValueError):
        as_image(np.zeros(5))
    with pytest.raises(ValueError):
        as_image(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        as_image([[1.0, np.nan]])


@pytest.mark.parametrize("w", [np.ones((2, 3)) / 6, np.ones((3, 4)) / 12])
def test_kernel_rejects_even_dims(w):
    with pytest.raises(ValueError, match="odd"):
        Kernel(w)


def test_kernel_rejects_negative_and_unnormalized():
    w = np.full((3, 3), 1 / 9)
    w[0, 0] = -0.1
    with pytest.raises(ValueError):
        Kernel(w)
    with pytest.raises(ValueError, match="sum"):
        Kernel(np.ones((3, 3)))


def test_kernel_is_read_only_copy():
    w = np.full((3, 3), 1 / 9)
    k = Kernel(w)
    w[0, 0] = 5.0
    assert k.weights[0, 0] == pytest.approx(1 / 9)
    with pytest.raises(ValueError):
        k.weights[0, 0] = 1.0


def test_kernel_delta_and_equality():
    d = Kernel.delta(5, 3)
    assert d.shape == (5, 3)
    assert np.asarray(d)[2, 1] == 1.0
    assert d == Kernel.delta(5, 3)
    assert hash(d) == hash(Kernel.delta(5, 3))
    assert d != Kernel.delta(5, 5)


def test_one_dimensional_weights_become_a_row():
    k = Kernel(np.array([0.25, 0.5, 0.25]))
    assert k.shape == (1, 3)


def test_gradient_pair_shape_check():
    with pytest.raises(ValueError):
        GradientPair.of(np.zeros((3, 3)), np.zeros((3, 4)))
    g = GradientPair.of(np.ones((2, 2)), np.ones((2, 2)))
    assert g.norm() == pytest.approx(math.sqrt(8))


def test_default_config_values():
    c = default_config()
    assert (c.sigma, c.mu, c.tau, c.delta) == (1.0, 1.0, 5e-5, 0.01)
    assert (c.outer_iter_max, c.cg_iter_max, c.inner_iter_max) == (20, 3, 10)
    assert c.pyramid_levels == 7
    assert c.threshold_ratio == pytest.approx(1 / 20)
    assert c.lam == 5e-3
    assert validate_config(c) == []


@pytest.mark.parametrize("change,message", [
    ({"kernel_size": (22, 23)}, "odd"),
    ({"tau": 0.0}, "tau"),
    ({"lam": -1.0}, "lambda"),
    ({"iter_max": 0}, "iter_max"),
    ({"threshold_ratio": 1.0}, "threshold_ratio"),
    ({"nb_alpha": 0.3}, "nb_alpha"),
])
def test_validate_config_reports_violations(change, message):
    errors = validate_config(default_config().with_(**change))
    assert any(message in e for e in errors)


def test_config_text_round_trip_is_exact():
    c = default_config().with_(lam=1 / 3, kernel_size=(31, 17), seed=2**63 + 5, sigma=0.0)
    assert parse_config_text(dump_config(c)) == c


def test_config_text_parsing_details():
    c = parse_config_text("# comment\nlambda = 0.01\nkernel_size = 9  # odd\n")
    assert c.lam == 0.01
    assert c.kernel_size == (9, 9)
    with pytest.raises(ValueError, match="unknown"):
        parse_config_text("bogus = 1")
    with pytest.raises(ValueError):
        parse_config_text("no equals sign")


def test_experiment_report_requires_equal_columns():
    with pytest.raises(ValueError):
        ExperimentReport("x", columns={"a": [1, 2], "b": [1]})
    r = ExperimentReport.from_rows("x", ["a", "b"], [[1, 2], [3, 4]], seed=3)
    assert r.n_rows == 2
    assert list(r.column("b")) == [2.0, 4.0]


def test_config_is_frozen():
    with pytest.raises(Exception):
        DeblurConfig().lam = 1.0
