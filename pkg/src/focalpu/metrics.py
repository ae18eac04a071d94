"""Ranking metrics: ROC-AUC, average precision (PR-AUC) and R-precision.

Ties: ROC-AUC gives half credit to tied positive/negative pairs. The
rank-walk metrics (average precision, R-precision) order examples by score
descending and then by original index ascending, so tied scores are
resolved deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True, eq=False)
class ScoredTruth:
    scores: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        t = np.asarray(self.truth).ravel()
        if s.shape != t.shape:
            raise ValueError(f"{s.size} scores for {t.size} labels")
        if not np.all((t == 1) | (t == -1)):
            raise ValueError("truth must contain only +1 / -1")
        if np.any(np.isnan(s)):
            raise ValueError("scores contain NaN")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "truth", t.astype(np.int8))

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.truth == 1))

    @property
    def n_neg(self) -> int:
        return int(np.sum(self.truth == -1))


def _st(st_or_scores, truth=None) -> ScoredTruth:
    if isinstance(st_or_scores, ScoredTruth):
        return st_or_scores
    return ScoredTruth(st_or_scores, truth)


def roc_auc(st, truth=None) -> float:
    """Mann-Whitney statistic: P(random positive outscores random negative), ties count 1/2."""
    st = _st(st, truth)
    n_pos, n_neg = st.n_pos, st.n_neg
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both classes")
    ranks = rankdata(st.scores, method="average")
    rank_sum = ranks[st.truth == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def rank_order(scores) -> np.ndarray:
    """Indices sorted by score descending, then index ascending."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def pr_auc(st, truth=None) -> float:
    """Average precision over the positives in rank order."""
    st = _st(st, truth)
    if st.n_pos == 0:
        raise ValueError("PR-AUC needs at least one positive")
    hits = (st.truth[rank_order(st.scores)] == 1).astype(np.float64)
    precision_at = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision_at * hits) / st.n_pos)


def r_precision(st, truth=None) -> float:
    """Fraction of positives among the top-k, k = number of positives."""
    st = _st(st, truth)
    k = st.n_pos
    if k == 0:
        raise ValueError("R-precision needs at least one positive")
    top = rank_order(st.scores)[:k]
    return float(np.sum(st.truth[top] == 1) / k)


def all_metrics(st, truth=None) -> dict:
    st = _st(st, truth)
    return {"roc_auc": roc_auc(st), "pr_auc": pr_auc(st), "r_precision": r_precision(st)}


def metric_oracle(st, truth=None):
    """Brute-force (roc, pr, rprec) for testing: pair counting and a literal rank walk."""
    st = _st(st, truth)
    if st.scores.size > 1000:
        raise ValueError("oracle is limited to n <= 1000")
    s = st.scores.tolist()
    t = st.truth.tolist()
    pos = [v for v, y in zip(s, t) if y == 1]
    neg = [v for v, y in zip(s, t) if y == -1]
    if not pos:
        raise ValueError("oracle needs at least one positive")

    roc = None
    if neg:
        credit = 0.0
        for a in pos:
            for b in neg:
                if a > b:
                    credit += 1.0
                elif a == b:
                    credit += 0.5
        roc = credit / (len(pos) * len(neg))

    walk = sorted(range(len(s)), key=lambda i: (-s[i], i))
    seen_pos = 0
    ap = 0.0
    for rank, i in enumerate(walk, start=1):
        if t[i] == 1:
            seen_pos += 1
            ap += seen_pos / rank
    ap /= len(pos)

    k = len(pos)
    rprec = sum(1 for i in walk[:k] if t[i] == 1) / k
    return roc, ap, rprec
