"""A 5-layer ReLU scorer with a logistic output, trained on PU risks.

Gradients are derived by hand for this fixed architecture; there is no
general autodiff. Training follows the non-negative PU recipe: each
mini-batch pairs a slice of the unlabeled set with a slice of the labeled
positives, and whenever a non-negative estimator is clamped the update
climbs the gradient of ``R_U- - pi * R_P-`` instead of descending the risk.

Snapshot file format (``save_snapshot`` / ``load_snapshot``)::

    FOCALPU-SNAPSHOT 1\\n
    {"layer_dims": [...], "seed": ..., "estimator": ..., "gamma": ..., ...}\\n
    <W0><b0><W1><b1>...   little-endian float64, row-major, W_l of shape (in, out)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .losses import LossKind
from .pudata import ClassPrior, PUView
from .risk import Estimator, RiskBreakdown, check_pairing, evaluate, risk_gradient

DEPTH = 5
SNAPSHOT_MAGIC = b"FOCALPU-SNAPSHOT 1\n"


@dataclass(frozen=True, eq=False)
class ScorerParams:
    weights: tuple
    biases: tuple

    def __post_init__(self):
        W = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        b = tuple(np.array(v, dtype=np.float64).ravel() for v in self.biases)
        if len(W) != len(b) or not W:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, v) in enumerate(zip(W, b)):
            if w.ndim != 2 or v.shape[0] != w.shape[1]:
                raise ValueError(f"layer {i}: weight {w.shape} and bias {v.shape} disagree")
            if i and W[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input width {w.shape[0]} != previous output {W[i - 1].shape[1]}")
        if W[-1].shape[1] != 1:
            raise ValueError("output layer must have width 1")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + v.size for w, v in zip(self.weights, self.biases))

    def arrays(self) -> list:
        out = []
        for w, v in zip(self.weights, self.biases):
            out += [w, v]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflat(self, vec) -> "ScorerParams":
        vec = np.asarray(vec, dtype=np.float64)
        W, b, k = [], [], 0
        for w, v in zip(self.weights, self.biases):
            W.append(vec[k:k + w.size].reshape(w.shape))
            k += w.size
            b.append(vec[k:k + v.size].copy())
            k += v.size
        return ScorerParams(tuple(W), tuple(b))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "ScorerParams") -> bool:
        return self.layer_dims == other.layer_dims and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


def init_scorer(d: int, hidden: int = 64, seed: int = 0, depth: int = DEPTH) -> ScorerParams:
    """Glorot-uniform weights, zero biases; dims ``[d, hidden x (depth-1), 1]``."""
    if d < 1 or hidden < 1:
        raise ValueError("d and hidden must be >= 1")
    dims = [d] + [hidden] * (depth - 1) + [1]
    rng = np.random.default_rng(seed)
    W, b = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        W.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        b.append(np.zeros(fan_out))
    return ScorerParams(tuple(W), tuple(b))


def _check_batch(params: ScorerParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.layer_dims[0]:
        raise ValueError(f"batch has {X.shape[1]} columns, scorer expects {params.layer_dims[0]}")
    return X


def forward_logits(params: ScorerParams, X, keep_cache: bool = False):
    """Pre-squash outputs ``g(x)``; optionally the per-layer activations for backprop."""
    a = _check_batch(params, X)
    cache = [a]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        if i < last:
            a = np.maximum(z, 0.0)
            cache.append(a)
        else:
            a = z
    logits = a[:, 0]
    return (logits, cache) if keep_cache else logits


def forward(params: ScorerParams, X) -> np.ndarray:
    """Probabilities in (0, 1)."""
    return expit(forward_logits(params, X))


def _backprop(params: ScorerParams, cache: list, dlogits: np.ndarray) -> ScorerParams:
    delta = dlogits[:, None]
    gW = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        a_in = cache[i]
        gW[i] = a_in.T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            # cache[i] is relu(z_{i-1}); its support is where the unit was active
            delta = (delta @ params.weights[i].T) * (cache[i] > 0)
    return ScorerParams(tuple(gW), tuple(gb))


def _scores(logits: np.ndarray, loss: LossKind):
    if loss.uses_margins:
        return logits, np.ones_like(logits)
    p = expit(logits)
    return p, p * (1.0 - p)


@dataclass(frozen=True)
class TrainConfig:
    estimator: Estimator = Estimator.IFPU
    loss: Optional[LossKind] = None  # None picks the estimator's default
    prior: float = 0.5
    max_epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if isinstance(self.prior, ClassPrior):
            object.__setattr__(self, "prior", self.prior.pi_p)
        ClassPrior(self.prior)
        if self.loss is None:
            object.__setattr__(self, "loss", default_loss(self.estimator))
        check_pairing(self.estimator, self.loss)
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


def default_loss(estimator: Estimator) -> LossKind:
    """Focal (gamma=3) for iFPU, the sigmoid loss for the uPU / nnPU baselines."""
    return LossKind.focal_loss() if Estimator(estimator) is Estimator.IFPU else LossKind.sigmoid()


@dataclass(frozen=True)
class Backward:
    grads: ScorerParams
    breakdown: RiskBreakdown
    branch: str


def backward(params: ScorerParams, batch_P, batch_U, config: TrainConfig) -> Backward:
    """Parameter gradient of the training objective on one mini-batch.

    Descent branch: gradient of the configured risk. Ascent branch (clamped
    non-negative estimator): gradient of ``R_U- - pi * R_P-`` alone; the
    caller steps against its sign.
    """
    batch_P = _check_batch(params, batch_P)
    batch_U = _check_batch(params, batch_U)
    if batch_P.shape[0] == 0 or batch_U.shape[0] == 0:
        raise ValueError("both mini-batches must be nonempty")
    nP = batch_P.shape[0]
    logits, cache = forward_logits(params, np.vstack([batch_P, batch_U]), keep_cache=True)
    s, ds = _scores(logits, config.loss)
    rg = risk_gradient(config.estimator, s[:nP], s[nP:], config.prior, config.loss, ds[:nP], ds[nP:])
    grads = _backprop(params, cache, np.concatenate([rg.grad_P, rg.grad_U]))
    return Backward(grads, rg.breakdown, rg.branch)


def batch_objective(params: ScorerParams, batch_P, batch_U, config: TrainConfig, branch: Optional[str] = None) -> float:
    """The scalar whose gradient :func:`backward` returns (branch picked as in training unless given)."""
    s_all = forward_logits(params, np.vstack([batch_P, batch_U]))
    s, _ = _scores(s_all, config.loss)
    nP = np.asarray(batch_P).shape[0]
    br = evaluate(config.estimator, s[:nP], s[nP:], config.prior, config.loss)
    if branch is None:
        branch = "ascent" if (config.estimator.non_negative and br.clamped) else "descent"
    return br.negative_part if branch == "ascent" else br.total


# ---------------------------------------------------------------------------
# Optimizer


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ScorerParams) -> "AdamState":
        z = tuple(np.zeros_like(a) for a in params.arrays())
        return cls(z, tuple(np.zeros_like(a) for a in params.arrays()), 0)


def adam_step(params: ScorerParams, grad: ScorerParams, state: AdamState, config: TrainConfig):
    """One bias-corrected adaptive-moment update; returns ``(params, state)``."""
    P, G = params.arrays(), grad.arrays()
    if len(P) != len(G) or any(p.shape != g.shape for p, g in zip(P, G)):
        raise ValueError("gradient shapes do not match parameter shapes")
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.adam_eps
    t = state.t + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(P, G, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    out = ScorerParams(tuple(new_p[0::2]), tuple(new_p[1::2]))
    return out, AdamState(tuple(new_m), tuple(new_v), t)


def _negate(g: ScorerParams) -> ScorerParams:
    return ScorerParams(tuple(-w for w in g.weights), tuple(-b for b in g.biases))


# ---------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    batch: int
    total: float
    branch: str
    clamped: bool


@dataclass(eq=False)
class TrainTrace:
    records: list = field(default_factory=list)
    params: Optional[ScorerParams] = None
    batches_per_epoch: int = 0

    @property
    def clamp_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.clamped for r in self.records) / len(self.records)

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])


def minibatch_plan(n_P: int, n_U: int, batch_size: int, rng: np.random.Generator):
    """One epoch of ``(P indices, U indices)`` pairs.

    ``N = ceil(n_U / batch_size)`` batches; U is shuffled and split evenly. P
    is shuffled independently and split into N proportional slices; when
    ``n_P < N`` the shuffled positives are recycled so every batch gets one.
    """
    if batch_size > n_U:
        raise ValueError(f"batch_size {batch_size} exceeds the {n_U} unlabeled examples")
    N = math.ceil(n_U / batch_size)
    u_chunks = np.array_split(rng.permutation(n_U), N)
    if n_P >= N:
        p_chunks = np.array_split(rng.permutation(n_P), N)
    else:
        reps = math.ceil(N / n_P)
        order = np.concatenate([rng.permutation(n_P) for _ in range(reps)])[:N]
        p_chunks = [order[i:i + 1] for i in range(N)]
    return list(zip(p_chunks, u_chunks))


def train(pu: PUView, config: TrainConfig, init: Optional[ScorerParams] = None):
    """Fixed-epoch mini-batch training; returns ``(params, trace)``."""
    XP = pu.x_labeled
    XU = pu.x_unlabeled
    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    params = init if init is not None else init_scorer(XP.shape[1], config.hidden, init_seed)
    rng = np.random.default_rng(shuffle_seed)
    state = AdamState.zeros_like(params)
    trace = TrainTrace()
    for epoch in range(config.max_epochs):
        plan = minibatch_plan(XP.shape[0], XU.shape[0], config.batch_size, rng)
        trace.batches_per_epoch = len(plan)
        for i, (ip, iu) in enumerate(plan):
            bw = backward(params, XP[ip], XU[iu], config)
            step = bw.grads if bw.branch == "descent" else _negate(bw.grads)
            params, state = adam_step(params, step, state, config)
            trace.records.append(TraceRecord(epoch, i, bw.breakdown.total, bw.branch, bw.breakdown.clamped))
    if not params.is_finite():
        raise FloatingPointError("training diverged to non-finite parameters")
    trace.params = params
    return params, trace


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass(frozen=True)
class GradCheckTrial:
    estimator: str
    loss: str
    branch: str
    n_params: int
    rel_error: float


@dataclass(frozen=True)
class GradCheckReport:
    trials: tuple
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((t.rel_error for t in self.trials), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def branches(self) -> set:
        return {(t.estimator, t.branch) for t in self.trials}


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def blockwise_rel_error(params: ScorerParams, analytic: ScorerParams, numeric_flat: np.ndarray) -> float:
    """Max over parameter blocks of ``max|a - n| / max(max|a|, max|n|)``."""
    num = params.unflat(numeric_flat).arrays()
    worst = 0.0
    for a, n in zip(analytic.arrays(), num):
        scale = max(np.max(np.abs(a)), np.max(np.abs(n)))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.max(np.abs(a - n)) / scale))
    return worst


# hidden pre-activations closer than this to 0 make central differences unreliable
KINK_MARGIN = 1e-4


def _min_preactivation(params: ScorerParams, X) -> float:
    a, out = X, np.inf
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ w + b
        out = min(out, float(np.abs(z).min()))
        a = np.maximum(z, 0.0)
    return out


def _draw_case(rng, dims, config: TrainConfig, target_branch: Optional[str], n_batch: int):
    d = dims[0]
    params = init_scorer(d, dims[1], int(rng.integers(2**63)), depth=len(dims) - 1)
    params = ScorerParams(params.weights, tuple(rng.normal(0.0, 0.1, size=b.shape) for b in params.biases))
    for attempt in range(200):
        # widen the input spread until the requested branch shows up
        pool = rng.normal(scale=1.0 + 0.05 * attempt, size=(4 * n_batch, d))
        if target_branch == "ascent":
            # labeled positives = top-scored points, unlabeled = bottom-scored
            order = np.argsort(forward_logits(params, pool))
            XU, XP = pool[order[:n_batch]], pool[order[-n_batch:]]
        else:
            XP, XU = pool[:n_batch], pool[n_batch:2 * n_batch]
        if _min_preactivation(params, np.vstack([XP, XU])) < KINK_MARGIN:
            continue  # a finite-difference stencil here would straddle a ReLU kink
        s, _ = _scores(forward_logits(params, np.vstack([XP, XU])), config.loss)
        br = evaluate(config.estimator, s[:n_batch], s[n_batch:], config.prior, config.loss)
        branch = "ascent" if (config.estimator.non_negative and br.clamped) else "descent"
        if target_branch is None or branch == target_branch:
            return params, XP, XU, branch
    raise RuntimeError(f"could not produce a {target_branch} configuration")


def grad_check(
    dims=(4, 8, 8, 8, 8, 1),
    configs=None,
    trials: int = 10,
    seed: int = 0,
    h: float = 1e-6,
    tolerance: float = 1e-5,
    n_batch: int = 6,
    target_branch: Optional[str] = None,
) -> GradCheckReport:
    """Compare :func:`backward` with central differences of :func:`batch_objective`.

    ``configs`` is a list of :class:`TrainConfig` or ``(TrainConfig, branch)``
    pairs; each trial picks one in turn. Networks are limited to 500 parameters.
    """
    dims = list(dims)
    n_params = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if n_params > 500:
        raise ValueError(f"{n_params} parameters is too many for finite differences")
    if configs is None:
        configs = [TrainConfig(estimator=Estimator.UPU, loss=LossKind.logistic(), prior=0.3)]
    rng = np.random.default_rng(seed)
    out = []
    for k in range(trials):
        cfg = configs[k % len(configs)]
        want = target_branch
        if isinstance(cfg, tuple):
            cfg, want = cfg
        params, XP, XU, branch = _draw_case(rng, dims, cfg, want, n_batch)
        bw = backward(params, XP, XU, cfg)
        assert bw.branch == branch
        x0 = params.flat()
        f = lambda v: batch_objective(params.unflat(v), XP, XU, cfg, branch)  # noqa: E731
        num = numeric_gradient(f, x0, h)
        err = blockwise_rel_error(params, bw.grads, num)
        out.append(GradCheckTrial(cfg.estimator.value, cfg.loss.describe(), branch, params.n_params, err))
    return GradCheckReport(tuple(out), tolerance)


def standard_gradcheck_cases(gammas=(0.0, 1.0, 3.0, 5.0)):
    """Every estimator/loss pairing, each focal gamma, in both update branches."""
    cases = []
    for est in Estimator:
        losses = [LossKind.focal_loss(g) for g in gammas]
        if est is not Estimator.IFPU:
            losses = [LossKind.sigmoid(), LossKind.logistic()] + losses
        for loss in losses:
            branches = ["descent", "ascent"] if est.non_negative else ["descent"]
            for br in branches:
                # a large prior makes the clamped regime easy to reach
                prior = 0.9 if br == "ascent" else 0.3
                cases.append((TrainConfig(estimator=est, loss=loss, prior=prior), br))
    return cases


# ---------------------------------------------------------------------------
# Snapshots


def save_snapshot(path, params: ScorerParams, **meta) -> None:
    header = {"layer_dims": params.layer_dims, "dtype": "<f8", "layout": "W0,b0,W1,b1,... row-major", **meta}
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_snapshot(path):
    """Returns ``(params, header)``."""
    with open(path, "rb") as fh:
        if fh.readline() != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a model snapshot")
        header = json.loads(fh.readline())
        blob = fh.read()
    dims = header["layer_dims"]
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    expected = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if flat.size != expected:
        raise ValueError(f"snapshot holds {flat.size} values, layer_dims imply {expected}")
    template = ScorerParams(
        tuple(np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])),
        tuple(np.zeros(b) for b in dims[1:]),
    )
    return template.unflat(flat), header


def with_prior(config: TrainConfig, prior: float) -> TrainConfig:
    return replace(config, prior=prior)
