"""Empirical PN / PU risk estimators with term-by-term breakdowns.

All estimators consume scorer outputs rather than raw examples: probabilities
for the logistic and focal losses, margins ``g(x)`` for the sigmoid loss.
That keeps them usable by any trainer that can produce scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .losses import FocalParams, LossKind
from .pudata import ClassPrior


class Estimator(str, Enum):
    UPU = "uPU"
    NNPU = "nnPU"
    IFPU = "iFPU"

    @classmethod
    def parse(cls, text: str) -> "Estimator":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ValueError(f"unknown estimator {text!r}")

    @property
    def non_negative(self) -> bool:
        return self is not Estimator.UPU


@dataclass(frozen=True)
class RiskBreakdown:
    """Terms of one risk evaluation.

    For the PU estimators ``pos_term = pi * R_P+``, ``neg_correction = pi * R_P-``
    and ``unlabeled_term = R_U-``. :func:`pn_risk` stores the negative-class
    term ``(1 - pi) * R_N-`` in ``neg_correction`` and leaves ``unlabeled_term``
    at zero; its total is ``pos_term + neg_correction``.
    """

    pos_term: float
    neg_correction: float
    unlabeled_term: float
    total: float
    clamped: bool
    estimator: str = "uPU"

    @property
    def negative_part(self) -> float:
        """``R_U- - pi * R_P-``, the quantity the non-negative estimators clamp."""
        return self.unlabeled_term - self.neg_correction


def _vec(scores, name):
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise ValueError(f"{name} is empty")
    return s


def _prior(prior) -> float:
    return prior.pi_p if isinstance(prior, ClassPrior) else float(prior)


def _check_probabilities(s, loss: LossKind, name):
    if not loss.uses_margins and (np.any(s < 0) or np.any(s > 1) or np.any(np.isnan(s))):
        raise ValueError(f"{name} must lie in [0, 1] for the {loss.kind} loss")


def _terms(scores_P, scores_U, prior, loss: LossKind):
    sP = _vec(scores_P, "scores_P")
    sU = _vec(scores_U, "scores_U")
    _check_probabilities(sP, loss, "scores_P")
    _check_probabilities(sU, loss, "scores_U")
    pi = _prior(prior)
    pos = pi * float(np.mean(loss.as_positive(sP)))
    corr = pi * float(np.mean(loss.as_negative(sP)))
    unl = float(np.mean(loss.as_negative(sU)))
    return pos, corr, unl


def pn_risk(scores_P, scores_N, prior, loss: LossKind) -> RiskBreakdown:
    sP = _vec(scores_P, "scores_P")
    sN = _vec(scores_N, "scores_N")
    _check_probabilities(sP, loss, "scores_P")
    _check_probabilities(sN, loss, "scores_N")
    pi = _prior(prior)
    pos = pi * float(np.mean(loss.as_positive(sP)))
    neg = (1.0 - pi) * float(np.mean(loss.as_negative(sN)))
    return RiskBreakdown(pos, neg, 0.0, pos + neg, False, "PN")


def upu_risk(scores_P, scores_U, prior, loss: LossKind) -> RiskBreakdown:
    pos, corr, unl = _terms(scores_P, scores_U, prior, loss)
    return RiskBreakdown(pos, corr, unl, pos - corr + unl, False, "uPU")


def nnpu_risk(scores_P, scores_U, prior, loss: LossKind) -> RiskBreakdown:
    pos, corr, unl = _terms(scores_P, scores_U, prior, loss)
    diff = unl - corr
    return RiskBreakdown(pos, corr, unl, pos + max(0.0, diff), diff < 0, "nnPU")


def ifpu_risk_unclipped(scores_P, scores_U, prior, focal: FocalParams = FocalParams()) -> RiskBreakdown:
    pos, corr, unl = _terms(scores_P, scores_U, prior, LossKind("focal", focal))
    return RiskBreakdown(pos, corr, unl, pos - corr + unl, False, "iFPU-unclipped")


def ifpu_risk(scores_P, scores_U, prior, focal: FocalParams = FocalParams()) -> RiskBreakdown:
    pos, corr, unl = _terms(scores_P, scores_U, prior, LossKind("focal", focal))
    diff = unl - corr
    return RiskBreakdown(pos, corr, unl, pos + max(0.0, diff), diff < 0, "iFPU")


def check_pairing(estimator: Estimator, loss: LossKind) -> None:
    if estimator is Estimator.IFPU and loss.kind != "focal":
        raise ValueError(f"iFPU requires the focal loss, got {loss.kind}")


def evaluate(estimator: Estimator, scores_P, scores_U, prior, loss: LossKind) -> RiskBreakdown:
    """Dispatch to the estimator's risk function."""
    estimator = Estimator(estimator)
    check_pairing(estimator, loss)
    if estimator is Estimator.UPU:
        return upu_risk(scores_P, scores_U, prior, loss)
    if estimator is Estimator.NNPU:
        return nnpu_risk(scores_P, scores_U, prior, loss)
    return ifpu_risk(scores_P, scores_U, prior, loss.focal)


@dataclass(frozen=True)
class RiskGradient:
    grad_P: np.ndarray
    grad_U: np.ndarray
    branch: str  # "descent" or "ascent"
    breakdown: RiskBreakdown


def risk_gradient(
    estimator: Estimator,
    scores_P,
    scores_U,
    prior,
    loss: LossKind,
    sensitivity_P=None,
    sensitivity_U=None,
) -> RiskGradient:
    """Gradient of the training objective with respect to each score.

    In the descent branch this is the gradient of the full risk. When a
    non-negative estimator is clamped (``R_U- < pi * R_P-``) it is instead the
    gradient of ``R_U- - pi * R_P-`` and the branch is ``"ascent"``: the
    caller is expected to step *up* that gradient.

    ``sensitivity_P`` / ``sensitivity_U`` are optional per-score factors
    (e.g. ``dp/dlogit``) multiplied into the result.
    """
    estimator = Estimator(estimator)
    check_pairing(estimator, loss)
    sP = _vec(scores_P, "scores_P")
    sU = _vec(scores_U, "scores_U")
    breakdown = evaluate(estimator, sP, sU, prior, loss)
    pi = _prior(prior)
    nP, nU = sP.size, sU.size

    d_corr = (pi / nP) * loss.as_negative_grad(sP)
    d_unl = loss.as_negative_grad(sU) / nU
    if estimator.non_negative and breakdown.clamped:
        grad_P = -d_corr
        branch = "ascent"
    else:
        grad_P = (pi / nP) * loss.as_positive_grad(sP) - d_corr
        branch = "descent"
    grad_U = d_unl
    if sensitivity_P is not None:
        grad_P = grad_P * np.asarray(sensitivity_P, dtype=float).ravel()
    if sensitivity_U is not None:
        grad_U = grad_U * np.asarray(sensitivity_U, dtype=float).ravel()
    return RiskGradient(np.asarray(grad_P, dtype=float), np.asarray(grad_U, dtype=float), branch, breakdown)
