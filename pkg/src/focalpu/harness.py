"""Experiment grid, prior-sensitivity sweep, aggregation and reports.

Every run is a pure function of its coordinates and the base seed, so runs
can execute in any order or in parallel and still produce identical records.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import logging
import math
import shlex
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from .losses import DEFAULT_CLAMP_EPS, LossKind, parse_loss
from .metrics import all_metrics
from .model import TrainConfig, forward, train
from .pudata import (
    SYNTHETIC_PRESETS,
    CsvSchema,
    GaussianMixtureSpec,
    LabeledDataset,
    Mechanism,
    SplitSpec,
    label,
    load_csv,
    standardize,
    synth_gaussian,
    train_test_split,
)
from .risk import Estimator

log = logging.getLogger(__name__)

METRICS = ("roc_auc", "pr_auc", "r_precision")
DEFAULT_RATIOS = (0.25, 0.50, 0.75)
SENSITIVITY_MULTIPLIERS = (0.25, 0.5, 1.0, 1.5, 2.0, 4.0)
PRIOR_CLIP = 1e-6


# ---------------------------------------------------------------------------
# Dataset sources


@dataclass(frozen=True)
class DatasetSource:
    """A CSV file or a synthetic Gaussian mixture."""

    name: str
    path: Optional[str] = None
    schema: Optional[CsvSchema] = None
    synthetic: Optional[GaussianMixtureSpec] = None

    def __post_init__(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("a dataset source is either a CSV path or a synthetic spec")

    @classmethod
    def parse(cls, text: str) -> "DatasetSource":
        """``synthetic:<preset> [key=value ...]`` or ``csv:<path> label=<col> [pos=..] [neg=..] [name=..]``.

        Tokens are shell-split, so paths or names with spaces can be quoted.
        """
        head, *opts = shlex.split(text)
        if any("=" not in o for o in opts):
            raise ValueError(f"dataset options must be key=value: {text!r}")
        kind, _, target = head.partition(":")
        kv = dict(o.split("=", 1) for o in opts)
        if kind == "synthetic":
            if target not in SYNTHETIC_PRESETS:
                raise ValueError(f"unknown synthetic preset {target!r}; have {sorted(SYNTHETIC_PRESETS)}")
            spec = SYNTHETIC_PRESETS[target]
            name = kv.pop("name", target)
            overrides = {}
            for k, v in kv.items():
                ftype = {f.name: f.type for f in fields(GaussianMixtureSpec)}.get(k)
                if ftype is None:
                    raise ValueError(f"unknown synthetic option {k!r}")
                overrides[k] = int(v) if ftype in ("int", int) else float(v)
            return cls(name, synthetic=replace(spec, name=name, **overrides))
        if kind == "csv":
            if "label" not in kv:
                raise ValueError("csv sources need label=<column>")
            neg = kv.get("neg", "-1")
            schema = CsvSchema(kv["label"], kv.get("pos", "1"), None if neg == "*" else neg, kv.get("name"))
            name = kv.get("name") or target.rsplit("/", 1)[-1].rsplit(".", 1)[0]
            return cls(name, path=target, schema=schema)
        raise ValueError(f"dataset source must start with 'synthetic:' or 'csv:', got {text!r}")

    def load(self, base_seed: int) -> LabeledDataset:
        return _load_source(self, base_seed)


@functools.lru_cache(maxsize=32)
def _load_source(src: DatasetSource, base_seed: int) -> LabeledDataset:
    if src.synthetic is not None:
        return synth_gaussian(src.synthetic, derive_seed(base_seed, "dataset", src.name))
    return load_csv(src.path, replace(src.schema, name=src.schema.name or src.name))


def derive_seed(base_seed: int, *coords) -> int:
    """Stable 63-bit seed from the base seed and any coordinates."""
    key = "|".join([str(int(base_seed))] + [_coord_str(c) for c in coords])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


def _coord_str(c) -> str:
    if isinstance(c, float):
        return repr(c)
    if hasattr(c, "value"):
        return str(c.value)
    return str(c)


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple
    mechanisms: tuple = (Mechanism.SCAR, Mechanism.SAR)
    labeled_ratios: tuple = DEFAULT_RATIOS
    repetitions: int = 10
    estimators: tuple = (Estimator.IFPU,)
    prior_multipliers: tuple = (1.0,)
    base_seed: int = 0
    train_fraction: float = 0.70
    max_epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    hidden: int = 64
    gamma: float = 3.0
    baseline_loss: str = "sigmoid"
    clamp_eps: float = DEFAULT_CLAMP_EPS
    sar_exponent: float = 1.0
    sar_distance_space: str = "standardized"
    workers: int = 1

    def __post_init__(self):
        conv = {
            "datasets": lambda d: d if isinstance(d, DatasetSource) else DatasetSource.parse(d),
            "mechanisms": Mechanism,
            "estimators": Estimator,
            "labeled_ratios": float,
            "prior_multipliers": float,
        }
        for name, fn in conv.items():
            object.__setattr__(self, name, tuple(fn(v) for v in getattr(self, name)))
        if not self.datasets:
            raise ValueError("at least one dataset is required")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(m <= 0 for m in self.prior_multipliers):
            raise ValueError("prior multipliers must be > 0")
        if any(not 0 < r <= 1 for r in self.labeled_ratios):
            raise ValueError("labeled ratios must lie in (0, 1]")
        if not (self.mechanisms and self.labeled_ratios and self.estimators and self.prior_multipliers):
            raise ValueError("every grid axis needs at least one value")

    @property
    def run_count(self) -> int:
        return (
            len(self.datasets) * len(self.mechanisms) * len(self.labeled_ratios)
            * len(self.estimators) * len(self.prior_multipliers) * self.repetitions
        )

    def loss_for(self, estimator: Estimator) -> LossKind:
        if estimator is Estimator.IFPU:
            return LossKind.focal_loss(self.gamma, self.clamp_eps)
        return parse_loss(self.baseline_loss, self.clamp_eps)


@dataclass(frozen=True)
class RunTask:
    dataset: DatasetSource
    mechanism: Mechanism
    labeled_ratio: float
    estimator: Estimator
    prior_multiplier: float
    repetition: int

    def sort_key(self):
        return (
            self.dataset.name, self.mechanism.value, self.labeled_ratio,
            self.estimator.value, self.prior_multiplier, self.repetition,
        )


@dataclass(frozen=True)
class RunRecord:
    dataset: str
    mechanism: str
    labeled_ratio: float
    estimator: str
    prior_multiplier: float
    repetition: int
    seed: int
    true_prior: float = math.nan
    prior_used: float = math.nan
    n_labeled: int = 0
    n_unlabeled: int = 0
    roc_auc: float = math.nan
    pr_auc: float = math.nan
    r_precision: float = math.nan
    clamp_rate: float = math.nan
    wall_time: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def coords(self):
        return (self.dataset, self.mechanism, self.labeled_ratio, self.estimator, self.prior_multiplier, self.repetition)

    def result_tuple(self):
        """Everything except wall time, for determinism comparisons."""
        d = asdict(self)
        d.pop("wall_time")
        return tuple(d.values())


def plan_grid(config: ExperimentConfig) -> list:
    """All run coordinates in canonical order, without loading or training anything."""
    tasks = [
        RunTask(ds, mech, ratio, est, mult, rep)
        for ds in config.datasets
        for mech in config.mechanisms
        for ratio in config.labeled_ratios
        for est in config.estimators
        for mult in config.prior_multipliers
        for rep in range(config.repetitions)
    ]
    return sorted(tasks, key=RunTask.sort_key)


def data_seed(config: ExperimentConfig, task: RunTask) -> int:
    # shared by every estimator and prior multiplier of a cell, so they are compared on identical data
    return derive_seed(config.base_seed, task.dataset.name, task.mechanism, task.labeled_ratio, task.repetition)


@dataclass(frozen=True)
class PreparedRun:
    pu: object
    test: LabeledDataset
    train_config: TrainConfig
    true_prior: float


def _child_seeds(seed: int, k: int):
    return [int(s.generate_state(1, np.uint64)[0] >> np.uint64(1)) for s in np.random.SeedSequence(seed).spawn(k)]


def prepare_run(config: ExperimentConfig, task: RunTask, seed: Optional[int] = None) -> PreparedRun:
    """Split, standardize, label and build the training config for one run."""
    seed = data_seed(config, task) if seed is None else seed
    split_seed, label_seed, train_seed = _child_seeds(seed, 3)
    ds = task.dataset.load(config.base_seed)
    train_ds, test_ds = train_test_split(
        ds, SplitSpec(config.train_fraction, task.labeled_ratio, task.mechanism, split_seed)
    )
    train_ds, test_ds, _ = standardize(train_ds, test_ds)
    sar_opts = {}
    if task.mechanism is Mechanism.SAR:
        sar_opts = dict(exponent=config.sar_exponent, distance_space=config.sar_distance_space)
    pu = label(train_ds, task.mechanism, task.labeled_ratio, label_seed, **sar_opts)
    true_prior = train_ds.positive_ratio
    prior = min(max(task.prior_multiplier * true_prior, PRIOR_CLIP), 1.0 - PRIOR_CLIP)
    tc = TrainConfig(
        estimator=task.estimator,
        loss=config.loss_for(task.estimator),
        prior=prior,
        max_epochs=config.max_epochs,
        batch_size=min(config.batch_size, pu.n_unlabeled),
        learning_rate=config.learning_rate,
        hidden=config.hidden,
        seed=train_seed,
    )
    return PreparedRun(pu, test_ds, tc, true_prior)


def run_one(config: ExperimentConfig, task: RunTask, keep_params: bool = False):
    """One RunRecord; with ``keep_params`` also the trained parameters (None on failure)."""
    seed = data_seed(config, task)
    base = dict(
        dataset=task.dataset.name, mechanism=task.mechanism.value, labeled_ratio=task.labeled_ratio,
        estimator=task.estimator.value, prior_multiplier=task.prior_multiplier, repetition=task.repetition, seed=seed,
    )
    t0 = time.perf_counter()
    params = None
    try:
        prep = prepare_run(config, task, seed)
        params, trace = train(prep.pu, prep.train_config)
        # the held-out labels are touched only here
        metrics = all_metrics(forward(params, prep.test.features), prep.test.labels)
        rec = RunRecord(
            **base, true_prior=prep.true_prior, prior_used=prep.train_config.prior,
            n_labeled=prep.pu.n_labeled, n_unlabeled=prep.pu.n_unlabeled,
            clamp_rate=trace.clamp_rate, wall_time=time.perf_counter() - t0, **metrics,
        )
    except Exception as exc:  # a failing run is recorded, never fatal to the grid
        log.warning("run %s failed: %s", base, exc)
        rec = RunRecord(**base, wall_time=time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
    return (rec, params) if keep_params else rec


def _run_star(args):
    return run_one(*args)


def run_grid(config: ExperimentConfig, workers: Optional[int] = None, progress=None) -> list:
    """Execute every run; records come back sorted by coordinates."""
    tasks = plan_grid(config)
    workers = config.workers if workers is None else workers
    if workers <= 1:
        records = []
        for i, t in enumerate(tasks):
            records.append(run_one(config, t))
            if progress:
                progress(i + 1, len(tasks), records[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_star, [(config, t) for t in tasks], chunksize=1))
    return sorted(records, key=RunRecord.coords)


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    mechanism: str
    labeled_ratio: float
    prior_multiplier: float
    metric: str
    mean: float
    std: float
    n_datasets: int

    def key(self):
        return (self.estimator, self.mechanism, self.labeled_ratio, self.prior_multiplier, self.metric)


SUMMARY_COLUMNS = [f.name for f in fields(SummaryRow)]


def aggregate(records) -> list:
    """Per-dataset means over repetitions, then the unweighted mean and population std across datasets."""
    groups = {}
    for r in records:
        if not r.ok:
            continue
        cell = (r.estimator, r.mechanism, r.labeled_ratio, r.prior_multiplier)
        groups.setdefault(cell, {}).setdefault(r.dataset, []).append(r)
    rows = []
    for cell in sorted(groups):
        per_ds = groups[cell]
        for metric in METRICS:
            means = [float(np.mean([getattr(r, metric) for r in per_ds[name]])) for name in sorted(per_ds)]
            rows.append(SummaryRow(*cell, metric, float(np.mean(means)), float(np.std(means)), len(means)))
    return rows


def summary_lookup(rows) -> dict:
    return {r.key(): r for r in rows}


def sensitivity_sweep(config: ExperimentConfig, multipliers=SENSITIVITY_MULTIPLIERS, workers=None):
    """Run the grid across prior multipliers; returns ``(records, {multiplier: summary rows})``."""
    if Estimator.IFPU not in config.estimators:
        raise ValueError("the sensitivity sweep needs iFPU among the estimators")
    config = replace(config, prior_multipliers=tuple(multipliers))
    records = run_grid(config, workers)
    summary = aggregate(records)
    ordered = sorted(config.prior_multipliers, key=_multiplier_order)
    return records, {m: [r for r in summary if r.prior_multiplier == m] for m in ordered}


def _multiplier_order(m: float):
    canon = list(SENSITIVITY_MULTIPLIERS)
    return (canon.index(m), m) if m in canon else (len(canon), m)


# ---------------------------------------------------------------------------
# Reports


def summary_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in SUMMARY_COLUMNS)])
    return buf.getvalue()


def read_summary_csv(text_or_path) -> list:
    """Parse a summary CSV given as a path or as the CSV text itself."""
    if isinstance(text_or_path, str) and "\n" in text_or_path:
        text = text_or_path
    else:
        with open(text_or_path) as fh:
            text = fh.read()
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(SummaryRow(
            row["estimator"], row["mechanism"], float(row["labeled_ratio"]), float(row["prior_multiplier"]),
            row["metric"], float(row["mean"]), float(row["std"]), int(row["n_datasets"]),
        ))
    return out


def summary_to_json(rows) -> str:
    tree = {}
    for r in rows:
        node = tree.setdefault(r.estimator, {}).setdefault(r.mechanism, {})
        node = node.setdefault(repr(r.labeled_ratio), {}).setdefault(repr(r.prior_multiplier), {})
        node[r.metric] = {"mean": r.mean, "std": r.std, "n_datasets": r.n_datasets}
    return json.dumps(tree, indent=2, sort_keys=True) + "\n"


_METRIC_TITLES = {"roc_auc": "ROC-AUC", "pr_auc": "PR-AUC", "r_precision": "R-precision"}


def summary_to_markdown(rows) -> str:
    """One table per (mechanism, prior multiplier): estimators as rows, metric x labeled-ratio columns."""
    if not rows:
        return ""
    look = summary_lookup(rows)
    ratios = sorted({r.labeled_ratio for r in rows})
    metrics = [m for m in METRICS if any(r.metric == m for r in rows)]
    estimators = [e.value for e in Estimator if any(r.estimator == e.value for r in rows)]
    estimators += sorted({r.estimator for r in rows} - set(estimators))
    out = []
    for mech in sorted({r.mechanism for r in rows}):
        for mult in sorted({r.prior_multiplier for r in rows if r.mechanism == mech}, key=_multiplier_order):
            out.append(f"### {mech}, prior x{mult:g}\n")
            head = ["Estimator"] + [f"{_METRIC_TITLES[m]} {ratio:.0%}" for m in metrics for ratio in ratios]
            out.append("| " + " | ".join(head) + " |")
            out.append("|" + "---|" * len(head))
            for est in estimators:
                cells = [est]
                for m in metrics:
                    for ratio in ratios:
                        r = look.get((est, mech, ratio, mult, m))
                        cells.append("" if r is None else f"{r.mean:.2f}±{r.std:.2f}")
                out.append("| " + " | ".join(cells) + " |")
            out.append("")
    return "\n".join(out)


def emit_report(rows, fmt: str, path) -> None:
    fmt = fmt.lower()
    render = {"csv": summary_to_csv, "json": summary_to_json, "markdown": summary_to_markdown, "md": summary_to_markdown}
    if fmt not in render:
        raise ValueError(f"unknown report format {fmt!r}")
    text = render[fmt](rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)


RECORD_COLUMNS = [f.name for f in fields(RunRecord)]


def write_records(records, path) -> None:
    """Raw per-run results, one row per run (for external significance testing)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, c) for c in RECORD_COLUMNS)])


# ---------------------------------------------------------------------------
# Config files


_LIST_KEYS = {"mechanisms", "labeled_ratios", "estimators", "prior_multipliers"}
_SCALAR_KEYS = {f.name: f.type for f in fields(ExperimentConfig)} | {}


def parse_config_text(text: str) -> dict:
    """Parse the ``key = value`` experiment file format.

    Blank lines and ``#`` comments are ignored. ``dataset`` may repeat, one
    source per line. List-valued keys take comma-separated values.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in ("dataset", "datasets"):
            out.setdefault("datasets", []).append(value)
        elif key in _LIST_KEYS:
            out[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key in _SCALAR_KEYS:
            out[key] = value
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return out


_INT_KEYS = {"repetitions", "base_seed", "max_epochs", "batch_size", "hidden", "workers"}
_FLOAT_KEYS = {"train_fraction", "learning_rate", "gamma", "clamp_eps", "sar_exponent"}


def build_config(values: dict) -> ExperimentConfig:
    """ExperimentConfig from string-or-typed values (config file merged with CLI flags)."""
    kw = {}
    for key, v in values.items():
        if v is None:
            continue
        if key in _INT_KEYS:
            kw[key] = int(v)
        elif key in _FLOAT_KEYS:
            kw[key] = float(v)
        elif key in _LIST_KEYS or key == "datasets":
            kw[key] = tuple(v)
        else:
            kw[key] = v
    return ExperimentConfig(**kw)
