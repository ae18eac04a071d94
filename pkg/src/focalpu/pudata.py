"""Datasets, splits and simulation of PU labeling mechanisms.

A :class:`LabeledDataset` holds fully labeled PN data (the simulation ground
truth). :func:`scar_label` and :func:`sar_label` hide part of its positives
and return a :class:`PUView`, whose true labels are kept for evaluation only.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Base class for dataset ingestion and validation problems."""


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class NonNumericCellError(DatasetError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class SingleClassError(DatasetError):
    pass


class InvalidLabelError(DatasetError):
    pass


class SplitError(DatasetError):
    pass


class LabelingError(DatasetError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ClassPrior:
    pi_p: float

    def __post_init__(self):
        if not 0.0 < self.pi_p < 1.0:
            raise ValueError(f"class prior must lie in (0, 1), got {self.pi_p}")

    @property
    def pi_n(self) -> float:
        return 1.0 - self.pi_p


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels).ravel()
        if X.ndim != 2:
            raise DimensionMismatchError(f"features must be a 2-d matrix, got shape {X.shape}")
        n, d = X.shape
        if n < 2 or d < 1:
            raise DimensionMismatchError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
        if y.shape[0] != n:
            raise DimensionMismatchError(f"{y.shape[0]} labels for {n} rows")
        if not np.all(np.isfinite(X)):
            raise NonNumericCellError("features contain non-finite values")
        if not np.all((y == 1) | (y == -1)):
            raise InvalidLabelError("invalid label value: labels must be +1 or -1")
        y = y.astype(np.int8)
        if np.all(y == 1) or np.all(y == -1):
            raise SingleClassError(f"dataset {self.name!r} contains a single class")
        if self.feature_names is not None and len(self.feature_names) != d:
            raise DimensionMismatchError("feature_names length differs from d")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_pos(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def positive_ratio(self) -> float:
        return self.n_pos / self.n

    @property
    def prior(self) -> ClassPrior:
        return ClassPrior(self.positive_ratio)

    def subset(self, idx, name: Optional[str] = None) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(name or self.name, self.features[idx], self.labels[idx], self.feature_names)

    def with_features(self, X) -> "LabeledDataset":
        return LabeledDataset(self.name, X, self.labels, self.feature_names)


@dataclass(frozen=True, eq=False)
class PUView:
    """Labeled positives ``L`` and unlabeled examples ``U`` over one feature matrix.

    Trainers should only touch :attr:`x_labeled` and :attr:`x_unlabeled`;
    ``hidden_truth`` exists for evaluation and simulation bookkeeping.
    """

    name: str
    features: np.ndarray
    labeled_pos: np.ndarray
    unlabeled: np.ndarray
    hidden_truth: np.ndarray

    def __post_init__(self):
        L = np.sort(np.asarray(self.labeled_pos, dtype=np.int64))
        U = np.sort(np.asarray(self.unlabeled, dtype=np.int64))
        n = self.features.shape[0]
        if L.size < 1 or U.size < 1:
            raise LabelingError("a PU view needs at least one labeled positive and one unlabeled example")
        if np.intersect1d(L, U).size:
            raise LabelingError("labeled and unlabeled index sets overlap")
        if L.size + U.size != n or not np.array_equal(np.union1d(L, U), np.arange(n)):
            raise LabelingError("labeled and unlabeled index sets must cover every row")
        truth = np.array(self.hidden_truth, dtype=np.int8)
        if np.any(truth[L] != 1):
            raise LabelingError("every labeled example must be a true positive")
        for arr in (L, U, truth):
            arr.setflags(write=False)
        object.__setattr__(self, "labeled_pos", L)
        object.__setattr__(self, "unlabeled", U)
        object.__setattr__(self, "hidden_truth", truth)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_labeled(self) -> int:
        return self.labeled_pos.size

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled.size

    @property
    def x_labeled(self) -> np.ndarray:
        return self.features[self.labeled_pos]

    @property
    def x_unlabeled(self) -> np.ndarray:
        return self.features[self.unlabeled]

    def label_status(self) -> np.ndarray:
        """1 for labeled positives, 0 for unlabeled rows."""
        s = np.zeros(self.n, dtype=np.int8)
        s[self.labeled_pos] = 1
        return s


class Mechanism(str, Enum):
    SCAR = "SCAR"
    SAR = "SAR"

    @classmethod
    def parse(cls, text: str) -> "Mechanism":
        return cls(text.strip().upper())


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    labeled_ratio: float = 0.50
    mechanism: Mechanism = Mechanism.SCAR
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 < self.labeled_ratio <= 1.0:
            raise ValueError("labeled_ratio must lie in (0, 1]")


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class CsvSchema:
    """Which column holds the label and which tokens mean positive/negative.

    With ``negative_label=None`` every token other than ``positive_label`` is
    read as negative.
    """

    label_column: str
    positive_label: str = "1"
    negative_label: Optional[str] = "-1"
    name: Optional[str] = None


def load_csv(path, schema: CsvSchema) -> LabeledDataset:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DimensionMismatchError(f"{path} is empty") from None
        if schema.label_column not in header:
            raise DimensionMismatchError(f"label column {schema.label_column!r} not in header")
        li = header.index(schema.label_column)
        names = tuple(h for i, h in enumerate(header) if i != li)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DimensionMismatchError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            token = row[li].strip()
            if token == schema.positive_label:
                labels.append(1)
            elif schema.negative_label is None or token == schema.negative_label:
                labels.append(-1)
            else:
                raise InvalidLabelError(f"{path}:{lineno}: invalid label value {token!r}")
            vals = []
            for i, cell in enumerate(row):
                if i == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCellError(f"{path}:{lineno}: non-numeric cell {cell!r}") from None
                if not math.isfinite(v):
                    raise NonNumericCellError(f"{path}:{lineno}: non-finite cell {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not names:
        raise DimensionMismatchError(f"{path} has no feature columns")
    if len(rows) < 2:
        raise DimensionMismatchError(f"{path} has fewer than 2 data rows")
    labels = np.array(labels)
    if np.all(labels == 1) or np.all(labels == -1):
        raise SingleClassError(f"{path} contains a single class")
    name = schema.name or os.path.splitext(os.path.basename(path))[0]
    return LabeledDataset(name, np.array(rows, dtype=np.float64), labels, names)


def write_csv(ds: LabeledDataset, path, label_column: str = "label") -> None:
    names = ds.feature_names or tuple(f"x{i}" for i in range(ds.d))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, label_column])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([*(repr(float(v)) for v in x), int(y)])


# ---------------------------------------------------------------------------
# Dataset catalog


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    n: int
    d: int
    positive_ratio: float  # fraction, not percent


def _norm_name(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


def load_catalog() -> dict:
    """The 14 benchmark datasets' metadata, keyed by normalized name."""
    text = resources.files("focalpu").joinpath("data/catalog.csv").read_text()
    out = {}
    for row in csv.DictReader(text.splitlines()):
        e = CatalogEntry(row["name"], int(row["n"]), int(row["d"]), float(row["positive_pct"]) / 100.0)
        out[_norm_name(e.name)] = e
    return out


@dataclass(frozen=True)
class CheckResult:
    field: str
    expected: float
    actual: float
    ok: bool


@dataclass(frozen=True)
class CatalogReport:
    name: str
    in_catalog: bool
    checks: tuple = ()

    @property
    def ok(self) -> bool:
        return self.in_catalog and all(c.ok for c in self.checks)

    def lines(self) -> list:
        if not self.in_catalog:
            return [f"{self.name}: not in catalog"]
        return [
            f"{self.name}: {c.field} expected={c.expected:g} actual={c.actual:g} {'ok' if c.ok else 'MISMATCH'}"
            for c in self.checks
        ]


def validate_against_catalog(ds: LabeledDataset, catalog: Optional[dict] = None, ratio_tol_pp: float = 0.5) -> CatalogReport:
    """Compare n, d and positive ratio with the catalog; mismatches are reported, never raised."""
    catalog = load_catalog() if catalog is None else catalog
    entry = catalog.get(_norm_name(ds.name))
    if entry is None:
        log.warning("dataset %r is not in the catalog", ds.name)
        return CatalogReport(ds.name, False)
    ratio_pp = 100.0 * ds.positive_ratio
    checks = (
        CheckResult("n", entry.n, ds.n, entry.n == ds.n),
        CheckResult("d", entry.d, ds.d, entry.d == ds.d),
        CheckResult(
            "positive_pct",
            100.0 * entry.positive_ratio,
            ratio_pp,
            abs(ratio_pp - 100.0 * entry.positive_ratio) <= ratio_tol_pp,
        ),
    )
    report = CatalogReport(ds.name, True, checks)
    if not report.ok:
        log.warning("catalog mismatch for %s: %s", ds.name, "; ".join(report.lines()))
    return report


# ---------------------------------------------------------------------------
# Preprocessing


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray  # population std; zero marks a constant feature

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        const = self.std == 0
        scale = np.where(const, 1.0, self.std)
        Z = (X - self.mean) / scale
        Z[:, const] = 0.0
        return Z


def fit_standardization(X) -> StandardizationStats:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # float noise on constant columns must not leak into a tiny nonzero std
    std = np.where(np.all(X == X[0], axis=0), 0.0, std)
    return StandardizationStats(mean, std)


def standardize(train: LabeledDataset, test: LabeledDataset):
    """Z-score features using train statistics only; constant features map to 0."""
    if train.d != test.d:
        raise DimensionMismatchError(f"train has d={train.d}, test has d={test.d}")
    stats = fit_standardization(train.features)
    return train.with_features(stats.apply(train.features)), test.with_features(stats.apply(test.features)), stats


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(int)
    short = total - int(base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:short]] += 1
    return base


def stratified_counts(class_sizes: Sequence[int], train_fraction: float) -> np.ndarray:
    """Per-class training counts: largest-remainder rounding, then at least one per side."""
    sizes = np.asarray(class_sizes, dtype=int)
    if np.any(sizes < 2):
        raise SplitError("every class needs at least 2 examples to appear on both sides of the split")
    total = round_half_up(train_fraction * sizes.sum())
    counts = _largest_remainder(train_fraction * sizes, total)
    return np.clip(counts, 1, sizes - 1)


def train_test_split(ds: LabeledDataset, spec: SplitSpec):
    """Stratified random split; each side keeps at least one example of each class."""
    rng = np.random.default_rng(spec.seed)
    pos = np.flatnonzero(ds.labels == 1)
    neg = np.flatnonzero(ds.labels == -1)
    counts = stratified_counts([pos.size, neg.size], spec.train_fraction)
    train_idx, test_idx = [], []
    for idx, k in zip((pos, neg), counts):
        perm = rng.permutation(idx)
        train_idx.append(perm[:k])
        test_idx.append(perm[k:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


# ---------------------------------------------------------------------------
# Labeling mechanisms


def weighted_sample_without_replacement(weights, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` distinct indices by successive weighted draws.

    Each draw picks among the remaining items with probability proportional
    to weight (weights renormalized after every draw). Uses exponential
    keys, which yields the same distribution in one pass. Zero-weight items
    are only drawn once the positive-weight items are exhausted, uniformly.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if not 0 <= k <= w.size:
        raise ValueError(f"cannot draw {k} of {w.size} items")
    u = rng.random(w.size)
    with np.errstate(divide="ignore"):
        keys = np.where(w > 0, np.log(u) / np.where(w > 0, w, 1.0), -np.inf)
    tiebreak = rng.random(w.size)
    order = np.lexsort((-tiebreak, -keys))
    return np.sort(order[:k])


def _labeled_count(n_pos: int, ratio: float) -> int:
    if not 0.0 < ratio <= 1.0:
        raise ValueError("labeled ratio must lie in (0, 1]")
    k = round_half_up(ratio * n_pos)
    if k == 0:
        raise LabelingError("no labeled positives: round(ratio * n_P) == 0")
    return k


def _make_view(ds: LabeledDataset, pos: np.ndarray, chosen: np.ndarray) -> PUView:
    L = pos[chosen]
    U = np.setdiff1d(np.arange(ds.n), L)
    return PUView(ds.name, ds.features, L, U, ds.labels)


def scar_label(ds: LabeledDataset, ratio: float, seed: int) -> PUView:
    """Label exactly ``round(ratio * n_P)`` positives chosen uniformly at random."""
    pos = np.flatnonzero(ds.labels == 1)
    k = _labeled_count(pos.size, ratio)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.permutation(pos.size)[:k])
    return _make_view(ds, pos, chosen)


def distance_to_negatives(ds: LabeledDataset, space: str = "standardized") -> np.ndarray:
    """Mean Euclidean distance from each positive to all negatives."""
    if space not in ("raw", "standardized"):
        raise ValueError(f"unknown distance space {space!r}")
    X = ds.features
    if space == "standardized":
        X = fit_standardization(X).apply(X)
    P = X[ds.labels == 1]
    N = X[ds.labels == -1]
    diff = P[:, None, :] - N[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).mean(axis=1)


def sar_label(
    ds: LabeledDataset,
    ratio: float,
    seed: int,
    exponent: float = 1.0,
    distance_space: str = "standardized",
) -> PUView:
    """Label positives with probability increasing in their distance to the negatives.

    Selection weight is ``d_i ** exponent`` where ``d_i`` is the mean distance
    from positive ``i`` to all negatives, so positives that resemble negatives
    tend to stay unlabeled.
    """
    pos = np.flatnonzero(ds.labels == 1)
    k = _labeled_count(pos.size, ratio)
    dist = distance_to_negatives(ds, distance_space)
    rng = np.random.default_rng(seed)
    if not np.any(dist > 0):
        log.warning("all positives coincide with the negatives; SAR falls back to SCAR")
        chosen = np.sort(rng.permutation(pos.size)[:k])
    else:
        chosen = weighted_sample_without_replacement(dist**exponent, k, rng)
    return _make_view(ds, pos, chosen)


def label(ds: LabeledDataset, mechanism: Mechanism, ratio: float, seed: int, **sar_opts) -> PUView:
    if Mechanism(mechanism) is Mechanism.SCAR:
        return scar_label(ds, ratio, seed)
    return sar_label(ds, ratio, seed, **sar_opts)


def write_pu_csv(view: PUView, path, feature_names=None) -> None:
    """Features plus ``label_status`` (labeled/unlabeled) and ``true_label`` columns."""
    d = view.features.shape[1]
    names = feature_names or tuple(f"x{i}" for i in range(d))
    status = view.label_status()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "label_status", "true_label"])
        for x, s, y in zip(view.features, status, view.hidden_truth):
            w.writerow([*(repr(float(v)) for v in x), "labeled" if s else "unlabeled", int(y)])


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Isotropic Gaussian classes along the diagonal direction ``1/sqrt(d)``.

    Negatives are centred at the origin and positives at ``separation`` along
    the diagonal. A fraction ``overlap_fraction`` of the positives is instead
    drawn around ``overlap_separation``, close to the negatives, so that they
    are hard to tell apart and unlikely to be labeled under SAR.
    """

    n: int = 2000
    d: int = 10
    positive_ratio: float = 0.02
    separation: float = 3.0
    pos_std: float = 1.0
    neg_std: float = 1.0
    overlap_fraction: float = 0.0
    overlap_separation: float = 1.0
    overlap_std: float = 1.0
    name: str = "synthetic"

    def counts(self):
        n_pos = round_half_up(self.positive_ratio * self.n)
        if n_pos < 1:
            raise DatasetError("positive ratio yields zero positives")
        if n_pos >= self.n:
            raise DatasetError("positive ratio yields zero negatives")
        n_overlap = round_half_up(self.overlap_fraction * n_pos)
        return n_pos, n_overlap

    @property
    def direction(self) -> np.ndarray:
        return np.ones(self.d) / np.sqrt(self.d)


def synth_gaussian(spec: GaussianMixtureSpec, seed: int) -> LabeledDataset:
    n_pos, n_overlap = spec.counts()
    n_neg = spec.n - n_pos
    rng = np.random.default_rng(seed)
    u = spec.direction
    neg = rng.normal(0.0, spec.neg_std, size=(n_neg, spec.d))
    main = spec.separation * u + rng.normal(0.0, spec.pos_std, size=(n_pos - n_overlap, spec.d))
    hard = spec.overlap_separation * u + rng.normal(0.0, spec.overlap_std, size=(n_overlap, spec.d))
    X = np.vstack([neg, main, hard])
    y = np.concatenate([-np.ones(n_neg), np.ones(n_pos)])
    perm = rng.permutation(spec.n)
    return LabeledDataset(spec.name, X[perm], y[perm])


# Presets addressable by name from the CLI and config files.
SYNTHETIC_PRESETS = {
    "overlap": GaussianMixtureSpec(
        n=2000, d=10, positive_ratio=0.02, separation=2.5, overlap_fraction=0.5,
        overlap_separation=1.0, name="overlap",
    ),
    "separable": GaussianMixtureSpec(
        n=1000, d=10, positive_ratio=0.2, separation=12.0, pos_std=0.5, neg_std=0.5, name="separable",
    ),
}
