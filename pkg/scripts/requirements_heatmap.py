"""Degradation over the (RTT, bandwidth) grid for each built-in profile, and
the loosest configurations that keep the overhead within a budget."""

import argparse
import csv
import sys
from pathlib import Path

from apiremote.profiles import PROFILES
from apiremote.solver import Budget, Grid, derive_requirements, sweep
from apiremote.trace import apply_sr


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--out-dir", type=Path, help="write one CSV per profile here (default: print)")
    args = ap.parse_args()
    grid = Grid.default()
    for name in sorted(PROFILES):
        prof = PROFILES[name]()
        trace = apply_sr(prof.trace(), True)
        start = prof.start_overhead(trace)
        matrix = sweep(trace, grid, prof.baseline_us, start)
        frontier = derive_requirements(trace, Budget(args.epsilon, prof.baseline_us), grid, start)
        out = sys.stdout
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            out = open(args.out_dir / f"{name}_degradation.csv", "w", newline="")
        else:
            print(f"# {name}: start overhead {start:.3f} us, baseline {prof.baseline_us:g} us")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["rtt_us\\gbps"] + [f"{g:g}" for g in grid.gbps])
        for rtt, row in zip(grid.rtts, matrix):
            w.writerow([f"{rtt:g}"] + [f"{x:+.4f}" for x in row])
        if out is not sys.stdout:
            out.close()
        front = ", ".join(f"({p.rtt:g} us, {p.gbps:g} Gbps)" for p in frontier.pareto) or frontier.diagnostic
        print(f"# {name}: loosest configurations within {args.epsilon:.0%}: {front}")


if __name__ == "__main__":
    main()
