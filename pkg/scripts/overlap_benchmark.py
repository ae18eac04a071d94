"""Full estimator comparison on the overlap mixture; writes CSV, JSON and Markdown summaries.

    python3 scripts/overlap_benchmark.py [--out-dir results] [--repetitions 10] [--workers 1]
"""

import argparse
import sys
from pathlib import Path

from focalpu import harness


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--base-seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = harness.ExperimentConfig(
        datasets=("synthetic:overlap",),
        estimators=("uPU", "nnPU", "iFPU"),
        repetitions=args.repetitions,
        base_seed=args.base_seed,
        workers=args.workers,
    )
    print(f"{cfg.run_count} runs")
    records = harness.run_grid(cfg)
    summary = harness.aggregate(records)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_records(records, args.out_dir / "overlap_runs.csv")
    for fmt, suffix in (("csv", "csv"), ("json", "json"), ("markdown", "md")):
        harness.emit_report(summary, fmt, args.out_dir / f"overlap_summary.{suffix}")
    print(harness.summary_to_markdown(summary))
    return int(any(not r.ok for r in records))


if __name__ == "__main__":
    sys.exit(main())
