import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from focalpu.losses import (
    FocalParams,
    LossKind,
    cross_entropy,
    focal_grad,
    focal_pointwise,
    parse_loss,
    sigmoid_loss,
)


def test_sigmoid_loss_values():
    assert sigmoid_loss(0.0) == 0.5
    assert sigmoid_loss(1.0) == pytest.approx(1 / (1 + math.e), abs=1e-15)
    assert sigmoid_loss(1.0) == pytest.approx(0.26894, abs=1e-5)
    assert sigmoid_loss(800.0) == 0.0
    assert sigmoid_loss(-800.0) == 1.0


@given(st.floats(-50, 50))
def test_sigmoid_loss_symmetry(z):
    assert abs(sigmoid_loss(z) + sigmoid_loss(-z) - 1.0) <= 1e-15


def test_sigmoid_loss_strictly_decreasing():
    z = np.linspace(-20, 20, 401)
    assert np.all(np.diff(sigmoid_loss(z)) < 0)


@pytest.mark.parametrize(
    "p, y, gamma, expected",
    [
        (0.5, 1, 0.0, math.log(2)),
        (0.5, 1, 2.0, 0.25 * math.log(2)),
        (0.9, -1, 3.0, 0.9**3 * -math.log(0.1)),
    ],
)
def test_focal_pointwise_values(p, y, gamma, expected):
    assert focal_pointwise(p, y, FocalParams(gamma)) == pytest.approx(expected, rel=1e-12)


def test_focal_pointwise_reference_numbers():
    assert focal_pointwise(0.9, -1, FocalParams(3.0)) == pytest.approx(1.67858, abs=1e-5)
    assert focal_pointwise(0.5, 1, FocalParams(2.0)) == pytest.approx(0.1733, abs=1e-4)


def test_focal_correct_limit_is_clamp_residual():
    fp = FocalParams(2.0, 1e-7)
    val = focal_pointwise(1.0, 1, fp)
    assert 0 <= val <= (1e-7) ** 2 * -math.log(1 - 1e-7) + 1e-30


def test_focal_rejects_bad_label():
    with pytest.raises(ValueError):
        focal_pointwise(0.5, 0)
    with pytest.raises(ValueError):
        focal_grad(0.5, 2)


def test_focal_params_validation():
    with pytest.raises(ValueError):
        FocalParams(-1.0)
    with pytest.raises(ValueError):
        FocalParams(1.0, 0.5)


@given(st.floats(0, 1), st.sampled_from([1, -1]))
def test_focal_gamma_zero_is_cross_entropy(p, y):
    assert abs(focal_pointwise(p, y, FocalParams(0.0)) - cross_entropy(p, y)) <= 1e-12


@given(st.floats(0, 1), st.sampled_from([1, -1]), st.floats(0, 8))
def test_focal_non_negative(p, y, gamma):
    assert focal_pointwise(p, y, FocalParams(gamma)) >= 0


@given(st.floats(0.5, 1.0, exclude_min=True))
def test_focal_downweights_confident_positives(p):
    vals = [focal_pointwise(p, 1, FocalParams(g)) for g in np.linspace(0, 6, 13)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_focal_grad_cross_entropy_limit():
    assert focal_grad(0.5, 1, FocalParams(0.0)) == pytest.approx(-2.0, rel=1e-15)
    assert focal_grad(0.5, -1, FocalParams(0.0)) == pytest.approx(2.0, rel=1e-15)


def central_difference(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0, 3.0, 5.0])
@pytest.mark.parametrize("y", [1, -1])
def test_focal_grad_matches_finite_differences(gamma, y):
    fp = FocalParams(gamma)
    for p in np.arange(0.05, 0.951, 0.05):
        analytic = focal_grad(p, y, fp)
        numeric = central_difference(lambda q: focal_pointwise(q, y, fp), p)
        assert abs(analytic - numeric) <= 1e-6 * abs(analytic), (p, analytic, numeric)


def test_focal_grad_example_p07():
    fp = FocalParams(2.0)
    numeric = central_difference(lambda q: focal_pointwise(q, 1, fp), 0.7)
    assert focal_grad(0.7, 1, fp) == pytest.approx(numeric, rel=1e-6)


def test_focal_grad_zero_outside_clamp():
    fp = FocalParams(2.0, 1e-3)
    assert focal_grad(1e-5, 1, fp) == 0.0
    assert focal_grad(1 - 1e-5, -1, fp) == 0.0


def test_loss_kind_helpers_agree_with_pointwise():
    p = np.array([0.1, 0.5, 0.8])
    fl = LossKind.focal_loss(2.0)
    np.testing.assert_array_equal(fl.as_positive(p), focal_pointwise(p, np.ones(3), FocalParams(2.0)))
    np.testing.assert_array_equal(fl.as_negative(p), focal_pointwise(p, -np.ones(3), FocalParams(2.0)))
    sg = LossKind.sigmoid()
    z = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(sg.as_positive(z), sigmoid_loss(z))
    np.testing.assert_array_equal(sg.as_negative(z), sigmoid_loss(-z))
    assert LossKind.logistic().gamma == 0.0
    assert LossKind("logistic", FocalParams(3.0)).gamma == 0.0


@pytest.mark.parametrize("kind", [LossKind.sigmoid(), LossKind.logistic(), LossKind.focal_loss(3.0)])
def test_loss_kind_gradients(kind):
    s = np.array([-2.0, -0.3, 0.4, 1.5]) if kind.uses_margins else np.array([0.1, 0.35, 0.6, 0.9])
    h = 1e-6
    for f, g in [(kind.as_positive, kind.as_positive_grad), (kind.as_negative, kind.as_negative_grad)]:
        numeric = (f(s + h) - f(s - h)) / (2 * h)
        np.testing.assert_allclose(g(s), numeric, rtol=1e-6)


def test_parse_loss():
    assert parse_loss("focal:5").focal.gamma == 5.0
    assert parse_loss("focal").focal.gamma == 3.0
    assert parse_loss("Sigmoid").kind == "sigmoid"
    with pytest.raises(ValueError):
        parse_loss("hinge")
