"""Run (or just count) the experiment grid described by a config file.

    python3 scripts/benchmark_grid.py configs/benchmark14.cfg --dry-run
    python3 scripts/benchmark_grid.py configs/overlap.cfg --out results/grid.md
"""

import sys

from focalpu.cli import main

if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    sys.exit(main(["bench", "--config", sys.argv[1], *sys.argv[2:]]))
