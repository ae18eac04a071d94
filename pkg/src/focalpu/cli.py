"""Command-line entry point: ``focalpu {bench,sensitivity,train,gradcheck,simulate}``.

Experiment options can come from a ``key = value`` file given with
``--config``; any flag given on the command line overrides the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .model import grad_check, save_snapshot, standard_gradcheck_cases
from .pudata import Mechanism, label, write_pu_csv
from .risk import Estimator

log = logging.getLogger("focalpu")


def _csv_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_experiment_flags(p: argparse.ArgumentParser, *, grid: bool = True) -> None:
    # every default is None so that only explicitly given flags override the config file
    _add_verbose(p)
    p.add_argument("--config", type=Path, help="key = value experiment file")
    p.add_argument("--dataset", dest="datasets", action="append",
                   help="'synthetic:<preset> [k=v ...]' or 'csv:<path> label=<col> [pos=..] [neg=..] [name=..]'; repeatable")
    if grid:
        p.add_argument("--mechanisms", type=_csv_list, help="comma list of SCAR,SAR")
        p.add_argument("--labeled-ratios", dest="labeled_ratios", type=_csv_list)
        p.add_argument("--estimators", type=_csv_list, help="comma list of uPU,nnPU,iFPU")
        p.add_argument("--prior-multipliers", dest="prior_multipliers", type=_csv_list)
        p.add_argument("--repetitions", type=int)
        p.add_argument("--workers", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--baseline-loss", dest="baseline_loss", help="sigmoid, logistic or focal[:gamma]")
    p.add_argument("--clamp-eps", dest="clamp_eps", type=float)
    p.add_argument("--sar-exponent", dest="sar_exponent", type=float)
    p.add_argument("--sar-distance-space", dest="sar_distance_space", choices=["standardized", "raw"])


def _add_verbose(p):
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="summary report path (default: print Markdown)")
    p.add_argument("--format", choices=["csv", "json", "markdown"], help="default: from --out suffix")
    p.add_argument("--records", type=Path, help="also write one CSV row per run")


_CONFIG_KEYS = {f for f in harness.ExperimentConfig.__dataclass_fields__}


def resolve_config(args, **fixed) -> harness.ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(harness.parse_config_text(args.config.read_text()))
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values.update(fixed)
    return harness.build_config(values)


def _report_format(args) -> str:
    if args.format:
        return args.format
    suffix = args.out.suffix.lower() if args.out else ""
    return {".csv": "csv", ".json": "json"}.get(suffix, "markdown")


def _emit(args, records, summary) -> None:
    if args.records:
        harness.write_records(records, args.records)
    if args.out:
        harness.emit_report(summary, _report_format(args), args.out)
        log.info("wrote %s", args.out)
    else:
        print(harness.summary_to_markdown(summary))


def _progress(i, total, rec):
    status = "ok" if rec.ok else f"FAILED ({rec.error})"
    log.info("[%d/%d] %s %s r=%g %s x%g rep %d: %s", i, total, rec.dataset, rec.mechanism,
             rec.labeled_ratio, rec.estimator, rec.prior_multiplier, rec.repetition, status)


def _finish(records) -> int:
    failed = [r for r in records if not r.ok]
    for r in failed:
        log.error("run failed: %s", r.coords())
    log.info("%d runs, %d failed", len(records), len(failed))
    return 1 if failed else 0


def cmd_bench(args) -> int:
    config = resolve_config(args)
    if args.dry_run:
        tasks = harness.plan_grid(config)
        print(f"{len(tasks)} runs")
        if args.verbose:
            for t in tasks:
                print(*(harness._coord_str(c) for c in (t.dataset.name, t.mechanism, t.labeled_ratio,
                                                        t.estimator, t.prior_multiplier, t.repetition)), sep="\t")
        return 0
    records = harness.run_grid(config, progress=_progress if args.verbose else None)
    _emit(args, records, harness.aggregate(records))
    return _finish(records)


def cmd_sensitivity(args) -> int:
    config = resolve_config(args)
    mults = config.prior_multipliers if args.prior_multipliers else harness.SENSITIVITY_MULTIPLIERS
    records, by_mult = harness.sensitivity_sweep(config, mults)
    summary = [row for m in by_mult for row in by_mult[m]]
    _emit(args, records, summary)
    return _finish(records)


def cmd_train(args) -> int:
    config = resolve_config(args, repetitions=1)
    task = harness.RunTask(config.datasets[0], Mechanism.parse(args.mechanism), args.labeled_ratio,
                           Estimator.parse(args.estimator), args.prior_multiplier, args.repetition)
    rec, params = harness.run_one(config, task, keep_params=True)
    print(json.dumps({k: getattr(rec, k) for k in harness.RECORD_COLUMNS}, indent=2))
    if not rec.ok:
        return 1
    if args.snapshot:
        loss = config.loss_for(task.estimator)
        save_snapshot(args.snapshot, params, dataset=rec.dataset, mechanism=rec.mechanism,
                      labeled_ratio=rec.labeled_ratio, estimator=rec.estimator, loss=loss.describe(),
                      gamma=loss.gamma, prior=rec.prior_used, seed=rec.seed)
        log.info("snapshot written to %s", args.snapshot)
    return 0


def cmd_gradcheck(args) -> int:
    cases = standard_gradcheck_cases()
    report = grad_check(configs=cases, trials=args.trials, seed=args.seed, h=args.step, tolerance=args.tolerance)
    worst = {}
    for t in report.trials:
        key = (t.estimator, t.loss, t.branch)
        worst[key] = max(worst.get(key, 0.0), t.rel_error)
    for (est, loss, br), err in sorted(worst.items()):
        print(f"{est:5s} {loss:14s} {br:8s} max rel error {err:.3e}")
    print(f"{len(report.trials)} trials, max rel error {report.max_rel_error:.3e}, "
          f"tolerance {report.tolerance:g}: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_simulate(args) -> int:
    config = resolve_config(args)
    ds = config.datasets[0].load(config.base_seed)
    mech = Mechanism.parse(args.mechanism)
    opts = {}
    if mech is Mechanism.SAR:
        opts = dict(exponent=config.sar_exponent, distance_space=config.sar_distance_space)
    view = label(ds, mech, args.labeled_ratio, args.seed, **opts)
    write_pu_csv(view, args.out, ds.feature_names)
    log.info("%s: %d labeled, %d unlabeled -> %s", ds.name, view.n_labeled, view.n_unlabeled, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focalpu", description="PU learning benchmark toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", default=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run the experiment grid and write a summary report")
    _add_experiment_flags(p)
    _add_report_flags(p)
    p.add_argument("--dry-run", action="store_true", help="only count (with -v: list) the planned runs")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sensitivity", help="sweep multiples of the true class prior")
    _add_experiment_flags(p)
    _add_report_flags(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("train", help="train one model and optionally save a snapshot")
    _add_experiment_flags(p, grid=False)
    p.add_argument("--mechanism", default="SCAR")
    p.add_argument("--labeled-ratio", type=float, default=0.5)
    p.add_argument("--estimator", default="iFPU")
    p.add_argument("--prior-multiplier", type=float, default=1.0)
    p.add_argument("--repetition", type=int, default=0)
    p.add_argument("--snapshot", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    _add_verbose(p)
    p.add_argument("--trials", type=int, default=208)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("simulate", help="label a dataset with SCAR/SAR and write it as CSV")
    _add_experiment_flags(p, grid=False)
    p.add_argument("--mechanism", default="SCAR")
    p.add_argument("--labeled-ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
