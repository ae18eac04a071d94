"""Pointwise surrogate losses and their derivatives.

Two input conventions are used:

* the sigmoid loss consumes real-valued margins ``z = y * g(x)``;
* the logistic (cross-entropy) and focal losses consume probabilities ``p``
  and are clamped to ``[eps, 1 - eps]`` before any logarithm.

Derivatives of the probability losses are taken with respect to ``p``; the
chain rule through the scorer's output squashing lives in :mod:`focalpu.model`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

DEFAULT_CLAMP_EPS = 1e-7
DEFAULT_GAMMA = 3.0


@dataclass(frozen=True)
class FocalParams:
    gamma: float = DEFAULT_GAMMA
    clamp_eps: float = DEFAULT_CLAMP_EPS

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError(f"clamp_eps must lie in (0, 0.5), got {self.clamp_eps}")


def sigmoid_loss(z):
    """``1 / (1 + exp(z))``, evaluated without overflow."""
    return expit(-np.asarray(z, dtype=float))


def sigmoid_loss_grad(z):
    z = np.asarray(z, dtype=float)
    return -expit(z) * expit(-z)


def _check_labels(y):
    y = np.asarray(y)
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    return y


def _clamp(p, eps):
    p = np.asarray(p, dtype=float)
    return np.clip(p, eps, 1.0 - eps)


def focal_pointwise(p, y, params: FocalParams = FocalParams()):
    """Composite focal loss.

    ``-(1-p)**gamma * log(p)`` for ``y = +1`` and ``-p**gamma * log(1-p)`` for
    ``y = -1``. Broadcasts over ``p`` and ``y``.
    """
    y = _check_labels(y)
    q = _clamp(p, params.clamp_eps)
    # p_t is the probability assigned to the true class
    pt = np.where(y == 1, q, 1.0 - q)
    out = -((1.0 - pt) ** params.gamma) * np.log(pt)
    return out if out.ndim else float(out)


def focal_grad(p, y, params: FocalParams = FocalParams()):
    """Derivative of :func:`focal_pointwise` with respect to ``p``.

    Zero outside the clamp interval, where the loss is constant.
    """
    y = _check_labels(y)
    p = np.asarray(p, dtype=float)
    eps = params.clamp_eps
    q = _clamp(p, eps)
    g = params.gamma
    pt = np.where(y == 1, q, 1.0 - q)
    # d/dpt of -(1-pt)^g log(pt); the (1-pt)^(g-1) factor is dropped when g == 0
    if g == 0:
        dpt = -1.0 / pt
    else:
        dpt = g * (1.0 - pt) ** (g - 1.0) * np.log(pt) - (1.0 - pt) ** g / pt
    out = np.where(y == 1, dpt, -dpt)
    out = np.where((p < eps) | (p > 1.0 - eps), 0.0, out)
    return out if out.ndim else float(out)


def cross_entropy(p, y, clamp_eps: float = DEFAULT_CLAMP_EPS):
    y = _check_labels(y)
    q = _clamp(p, clamp_eps)
    out = -np.log(np.where(y == 1, q, 1.0 - q))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LossKind:
    """One of ``sigmoid``, ``logistic`` or ``focal``.

    ``logistic`` is cross-entropy on probabilities, i.e. the focal loss with
    ``gamma = 0``; it shares the clamp so that the two agree bit for bit.
    """

    kind: str
    focal: FocalParams = field(default_factory=FocalParams)

    def __post_init__(self):
        if self.kind not in ("sigmoid", "logistic", "focal"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "logistic" and self.focal.gamma != 0:
            object.__setattr__(self, "focal", FocalParams(0.0, self.focal.clamp_eps))

    @classmethod
    def sigmoid(cls) -> "LossKind":
        return cls("sigmoid")

    @classmethod
    def logistic(cls, clamp_eps: float = DEFAULT_CLAMP_EPS) -> "LossKind":
        return cls("logistic", FocalParams(0.0, clamp_eps))

    @classmethod
    def focal_loss(cls, gamma: float = DEFAULT_GAMMA, clamp_eps: float = DEFAULT_CLAMP_EPS) -> "LossKind":
        return cls("focal", FocalParams(gamma, clamp_eps))

    @property
    def uses_margins(self) -> bool:
        return self.kind == "sigmoid"

    @property
    def gamma(self) -> float:
        return 0.0 if self.kind == "sigmoid" else self.focal.gamma

    def describe(self) -> str:
        if self.kind == "focal":
            return f"focal(gamma={self.focal.gamma:g})"
        return self.kind

    # Vectorised helpers used by the risk estimators. ``s`` is a margin for the
    # sigmoid loss and a probability otherwise.

    def as_positive(self, s):
        s = np.asarray(s, dtype=float)
        if self.uses_margins:
            return sigmoid_loss(s)
        return focal_pointwise(s, np.ones_like(s), self.focal)

    def as_negative(self, s):
        s = np.asarray(s, dtype=float)
        if self.uses_margins:
            return sigmoid_loss(-s)
        return focal_pointwise(s, -np.ones_like(s), self.focal)

    def as_positive_grad(self, s):
        s = np.asarray(s, dtype=float)
        if self.uses_margins:
            return sigmoid_loss_grad(s)
        return focal_grad(s, np.ones_like(s), self.focal)

    def as_negative_grad(self, s):
        s = np.asarray(s, dtype=float)
        if self.uses_margins:
            return -sigmoid_loss_grad(-s)
        return focal_grad(s, -np.ones_like(s), self.focal)


def parse_loss(text: str, clamp_eps: float = DEFAULT_CLAMP_EPS) -> LossKind:
    """Parse ``sigmoid``, ``logistic``, ``focal`` or ``focal:<gamma>``."""
    name, _, arg = text.strip().lower().partition(":")
    if name == "focal":
        return LossKind.focal_loss(float(arg) if arg else DEFAULT_GAMMA, clamp_eps)
    if name == "logistic":
        return LossKind.logistic(clamp_eps)
    if name == "sigmoid":
        return LossKind.sigmoid()
    raise ValueError(f"unknown loss {text!r}")
