"""Run the full sweep suite in both validation modes and write metric tables.

Each named experiment sweeps one parameter (block size, read-write keys,
document complexity, arrival rate, conflict percentage) over a seeded
workload and emits one CSV per metric into the output directory.

Usage:
    python3 scripts/run_experiments.py --out results --scale 0.2 --seed 42
"""

import argparse
import sys
from time import perf_counter

from crdtsim.bench import emit_tables, named_experiments, run_experiment


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results", help="directory for the metric tables")
    parser.add_argument("--scale", type=float, default=1.0,
                        help="multiply per-point transaction counts (1.0 = 1000 txs)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--modes", nargs="+", default=["crdt", "fabric"],
                        choices=["crdt", "fabric"])
    parser.add_argument("--only", nargs="+", default=None,
                        help="subset of experiment names to run")
    args = parser.parse_args(argv)

    written = []
    for mode in args.modes:
        experiments = named_experiments(scale=args.scale, seed=args.seed, mode=mode)
        names = args.only if args.only else sorted(experiments)
        for name in names:
            if name not in experiments:
                parser.error(f"unknown experiment {name!r}; choose from {sorted(experiments)}")
            started = perf_counter()
            report = run_experiment(experiments[name])
            paths = emit_tables(report, args.out)
            written.extend(paths)
            rows = report.rows
            oks = sum(1 for row in rows if not row.error)
            print(f"{mode}/{name}: {oks}/{len(rows)} points in {perf_counter() - started:.1f}s")
    print(f"{len(written)} tables written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
