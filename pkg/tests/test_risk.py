import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focalpu.losses import FocalParams, LossKind
from focalpu.pudata import ClassPrior
from focalpu.risk import (
    Estimator,
    evaluate,
    ifpu_risk,
    ifpu_risk_unclipped,
    nnpu_risk,
    pn_risk,
    risk_gradient,
    upu_risk,
)

LOGISTIC = LossKind.logistic()
SIGMOID = LossKind.sigmoid()

probs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12)
margins = st.lists(st.floats(-30.0, 30.0), min_size=1, max_size=12)
priors = st.floats(1e-4, 1 - 1e-4)


def _bce_pos(p):
    return -math.log(min(max(p, 1e-7), 1 - 1e-7))


def _bce_neg(p):
    return -math.log(1 - min(max(p, 1e-7), 1 - 1e-7))


# --- PN --------------------------------------------------------------------------


def test_pn_perfect_scorer():
    r = pn_risk([1.0, 1.0], [0.0], 0.4, LOGISTIC)
    assert 0 <= r.total <= 2 * abs(math.log(1 - 1e-7))
    assert not r.clamped


def test_pn_symmetric_point():
    assert pn_risk([0.5], [0.5, 0.5], 0.5, LOGISTIC).total == pytest.approx(math.log(2), abs=1e-15)


def test_pn_scalar_example():
    expect = 0.3 * (-math.log(0.9) - math.log(0.8)) / 2 + 0.7 * -math.log(0.8)
    r = pn_risk([0.9, 0.8], [0.2], ClassPrior(0.3), LOGISTIC)
    assert r.total == pytest.approx(expect, abs=1e-12)
    assert r.total == pytest.approx(0.205476, abs=1e-6)


def test_empty_vectors_raise():
    for fn in (pn_risk, upu_risk, nnpu_risk):
        with pytest.raises(ValueError):
            fn([], [0.5], 0.3, LOGISTIC)
        with pytest.raises(ValueError):
            fn([0.5], [], 0.3, LOGISTIC)


def test_out_of_range_probability_raises():
    with pytest.raises(ValueError):
        ifpu_risk([1.2], [0.5], 0.3)
    with pytest.raises(ValueError):
        upu_risk([0.5], [-0.1], 0.3, LOGISTIC)
    upu_risk([5.0], [-3.0], 0.3, SIGMOID)  # margins are unrestricted


# --- uPU ---------------------------------------------------------------------------


def test_upu_prior_free_limit():
    sU = [0.2, 0.7, 0.4]
    r = upu_risk([0.9, 0.1], sU, 1e-300, LOGISTIC)
    assert r.total == pytest.approx(np.mean([_bce_neg(p) for p in sU]), abs=1e-12)


def test_upu_negative_regime():
    r = upu_risk([0.99], [0.01], 0.9, LOGISTIC)
    expect = 0.9 * _bce_pos(0.99) - 0.9 * _bce_neg(0.99) + _bce_neg(0.01)
    assert r.total == pytest.approx(expect, abs=1e-12)
    assert r.total < 0
    assert not r.clamped


@settings(max_examples=200, deadline=None)
@given(probs, probs)
def test_mixture_identity(sP, sN):
    # U holds every example; the prior is the true positive fraction
    pi = len(sP) / (len(sP) + len(sN))
    for loss in (LOGISTIC, LossKind.focal_loss(0.0)):
        upu = upu_risk(sP, sP + sN, pi, loss).total
        pn = pn_risk(sP, sN, pi, loss).total
        assert abs(upu - pn) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(margins, margins, priors)
def test_sigmoid_cost_sensitive_identity(zP, zU, pi):
    r = upu_risk(zP, zU, pi, SIGMOID)
    r_pos = np.mean(1 / (1 + np.exp(np.asarray(zP))))
    r_unl = np.mean(1 / (1 + np.exp(-np.asarray(zU))))
    assert abs(r.total - (2 * pi * r_pos + r_unl - pi)) <= 1e-12


# --- nnPU / iFPU -----------------------------------------------------------------------


def test_nnpu_equals_upu_when_clamp_inactive():
    a = nnpu_risk([0.7, 0.6], [0.3, 0.4], 0.2, LOGISTIC)
    b = upu_risk([0.7, 0.6], [0.3, 0.4], 0.2, LOGISTIC)
    assert not a.clamped and a.total == b.total


def test_nnpu_clamps_negative_regime():
    r = nnpu_risk([0.99], [0.01], 0.9, LOGISTIC)
    assert r.clamped
    assert r.total == r.pos_term == pytest.approx(0.9 * _bce_pos(0.99), abs=1e-15)


def test_nnpu_prior_free_limit():
    sU = [0.2, 0.6]
    assert nnpu_risk([0.5], sU, 1e-300, LOGISTIC).total == pytest.approx(np.mean([_bce_neg(p) for p in sU]))


def test_ifpu_scalar_example():
    r = ifpu_risk_unclipped([0.5], [0.5], 0.2, FocalParams(gamma=2.0))
    q = 0.25 * math.log(2)
    assert r.pos_term == pytest.approx(0.2 * q, abs=1e-12)
    assert r.unlabeled_term == pytest.approx(q, abs=1e-12)
    assert r.neg_correction == pytest.approx(0.2 * q, abs=1e-12)
    assert r.total == pytest.approx(q, abs=1e-12)
    assert round(r.total, 5) == 0.17329


def test_ifpu_literal_terms():
    sP, sU, pi, g = [0.8, 0.3], [0.1, 0.6, 0.45], 0.25, 3.0
    r = ifpu_risk_unclipped(sP, sU, pi, FocalParams(gamma=g))
    pos = np.mean([pi * (1 - p) ** g * -math.log(p) for p in sP])
    corr = np.mean([pi * p**g * -math.log(1 - p) for p in sP])
    unl = np.mean([p**g * -math.log(1 - p) for p in sU])
    assert (r.pos_term, r.neg_correction, r.unlabeled_term) == pytest.approx((pos, corr, unl), abs=1e-14)
    assert r.total == pytest.approx(pos - corr + unl, abs=1e-14)


def test_ifpu_prior_free_limit():
    r = ifpu_risk_unclipped([0.4], [0.3, 0.9], 1e-300)
    assert r.total == r.unlabeled_term


def test_ifpu_clamped_example():
    r = ifpu_risk([0.999], [0.001], 0.9, FocalParams(gamma=3.0))
    assert r.clamped
    assert r.total == r.pos_term


def test_ifpu_equals_unclipped_when_inactive():
    a = ifpu_risk([0.3], [0.5, 0.6], 0.1)
    b = ifpu_risk_unclipped([0.3], [0.5, 0.6], 0.1)
    assert not a.clamped and a.total == b.total


def test_gamma_zero_reduces_to_logistic_baselines(rng):
    for _ in range(1000):
        sP = rng.uniform(0, 1, rng.integers(1, 10))
        sU = rng.uniform(0, 1, rng.integers(1, 10))
        pi = rng.uniform(0.01, 0.99)
        a = ifpu_risk_unclipped(sP, sU, pi, FocalParams(gamma=0.0)).total
        assert abs(a - upu_risk(sP, sU, pi, LOGISTIC).total) <= 1e-12
        b = ifpu_risk(sP, sU, pi, FocalParams(gamma=0.0)).total
        assert abs(b - nnpu_risk(sP, sU, pi, LOGISTIC).total) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(probs, probs, priors, st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.0, 5.0]))
def test_non_negative_estimators(sP, sU, pi, gamma):
    for r in (nnpu_risk(sP, sU, pi, LOGISTIC), ifpu_risk(sP, sU, pi, FocalParams(gamma=gamma))):
        assert r.total >= 0
        assert r.clamped == (r.unlabeled_term < r.neg_correction)
        assert r.total == pytest.approx(r.pos_term + max(0.0, r.negative_part), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.51, 1.0), min_size=1, max_size=8),
    st.lists(st.floats(0.0, 0.49), min_size=1, max_size=8),
    priors,
)
def test_gamma_monotone_on_confident_batches(sP, sU, pi):
    totals = [ifpu_risk(sP, sU, pi, FocalParams(gamma=g)).total for g in (0, 0.5, 1, 2, 3, 5, 8)]
    assert all(b <= a + 1e-15 for a, b in zip(totals, totals[1:]))


def test_ifpu_rejects_non_focal_loss():
    with pytest.raises(ValueError):
        evaluate(Estimator.IFPU, [0.5], [0.5], 0.3, LOGISTIC)
    with pytest.raises(ValueError):
        risk_gradient("iFPU", [0.5], [0.5], 0.3, SIGMOID)


def test_estimator_parse():
    assert Estimator.parse("nnpu") is Estimator.NNPU
    assert not Estimator.UPU.non_negative and Estimator.IFPU.non_negative
    with pytest.raises(ValueError):
        Estimator.parse("PN")


# --- gradients ---------------------------------------------------------------------------

CASES = [
    (Estimator.UPU, LOGISTIC),
    (Estimator.UPU, SIGMOID),
    (Estimator.NNPU, LOGISTIC),
    (Estimator.NNPU, SIGMOID),
    (Estimator.IFPU, LossKind.focal_loss(0.0)),
    (Estimator.IFPU, LossKind.focal_loss(1.0)),
    (Estimator.IFPU, LossKind.focal_loss(3.0)),
    (Estimator.IFPU, LossKind.focal_loss(5.0)),
]


def _objective(est, loss, sP, sU, pi, branch):
    r = evaluate(est, sP, sU, pi, loss)
    return r.negative_part if branch == "ascent" else r.pos_term - r.neg_correction + r.unlabeled_term


def _draw(rng, loss, want_clamped):
    for _ in range(1000):
        nP, nU = rng.integers(1, 6), rng.integers(1, 6)
        if loss.uses_margins:
            sP, sU = rng.normal(0, 2, nP), rng.normal(0, 2, nU)
        else:
            sP, sU = rng.uniform(0.05, 0.95, nP), rng.uniform(0.05, 0.95, nU)
        pi = rng.uniform(0.6, 0.95) if want_clamped else rng.uniform(0.05, 0.5)
        r = upu_risk(sP, sU, pi, loss)
        if (r.negative_part < 0) == want_clamped and abs(r.negative_part) > 1e-3:
            return sP, sU, pi
    raise AssertionError("no case found")


GRAD_CASES = [
    pytest.param(est, loss, clamped, id=f"{est.value}-{loss.describe()}-{'ascent' if clamped else 'descent'}")
    for est, loss in CASES
    for clamped in (False, True)
    if est.non_negative or not clamped
]


@pytest.mark.parametrize("est, loss, clamped", GRAD_CASES)
def test_risk_gradient_matches_central_differences(rng, est, loss, clamped):
    h = 1e-6
    for _ in range(20):
        sP, sU, pi = _draw(rng, loss, clamped)
        g = risk_gradient(est, sP, sU, pi, loss)
        assert g.branch == ("ascent" if clamped else "descent")
        for vec, grad, is_p in ((sP, g.grad_P, True), (sU, g.grad_U, False)):
            for i in range(vec.size):
                up, dn = vec.copy(), vec.copy()
                up[i] += h
                dn[i] -= h
                args_up = (up, sU) if is_p else (sP, up)
                args_dn = (dn, sU) if is_p else (sP, dn)
                num = (_objective(est, loss, *args_up, pi, g.branch) - _objective(est, loss, *args_dn, pi, g.branch)) / (2 * h)
                assert grad[i] == pytest.approx(num, rel=1e-6, abs=1e-9)


def test_risk_gradient_sensitivities_multiply(rng):
    sP, sU = rng.uniform(0.1, 0.9, 3), rng.uniform(0.1, 0.9, 4)
    base = risk_gradient("iFPU", sP, sU, 0.2, LossKind.focal_loss(3.0))
    sens = risk_gradient("iFPU", sP, sU, 0.2, LossKind.focal_loss(3.0), sP * (1 - sP), sU * (1 - sU))
    np.testing.assert_allclose(sens.grad_P, base.grad_P * sP * (1 - sP))
    np.testing.assert_allclose(sens.grad_U, base.grad_U * sU * (1 - sU))


def test_prior_zero_annihilates_positive_gradient():
    g = risk_gradient("iFPU", [0.3, 0.8], [0.4], 1e-300, LossKind.focal_loss(3.0))
    assert np.all(np.abs(g.grad_P) < 1e-290)
    assert np.any(g.grad_U != 0)


@pytest.mark.parametrize("est, loss", [(Estimator.NNPU, LOGISTIC), (Estimator.NNPU, SIGMOID), (Estimator.IFPU, LossKind.focal_loss(3.0))])
def test_ascent_branch_direction(rng, est, loss):
    eps = 1e-4
    for _ in range(20):
        sP, sU, pi = _draw(rng, loss, True)
        g = risk_gradient(est, sP, sU, pi, loss)
        assert g.branch == "ascent"
        before = upu_risk(sP, sU, pi, loss).negative_part
        step = lambda sign: upu_risk(sP + sign * eps * g.grad_P, sU + sign * eps * g.grad_U, pi, loss).negative_part  # noqa: E731
        assert step(+1) > before  # the ascent direction raises R_U- - pi R_P-
        assert step(-1) < before
