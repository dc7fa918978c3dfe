"""Agreement between the analytic remoting cost and the event replay on
randomized traces, broken down by network configuration."""

import argparse

import numpy as np

from apiremote.cost_model import NetworkConfig
from apiremote.replay import ReplayOptions, compare_model
from apiremote.synth import random_trace


def parse_config(text):
    rtt, gbps = text.split("@")
    return float(rtt), float(gbps)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--start", type=float, default=1.0)
    ap.add_argument("--tolerance", type=float, default=0.05)
    ap.add_argument("--large-copy-prob", type=float, default=0.25)
    ap.add_argument(
        "--configs",
        default="1@200,5@100,10@40,20@10,50@1",
        help="comma-separated RTT_US@GBPS pairs",
    )
    args = ap.parse_args()
    configs = [parse_config(c) for c in args.configs.split(",")]
    print(f"{'rtt us':>7} {'Gbps':>6} {'within':>7} {'mean gap':>9} {'p5':>8} {'p95':>8}")
    all_gaps = []
    for rtt, gbps in configs:
        gaps = np.array(
            [
                compare_model(
                    random_trace(seed, large_copy_prob=args.large_copy_prob),
                    ReplayOptions(NetworkConfig.from_gbps(rtt, gbps, args.start), seed=seed),
                ).gap
                for seed in range(args.seeds)
            ]
        )
        all_gaps.append(gaps)
        p5, p95 = np.percentile(gaps, [5, 95])
        within = np.mean(np.abs(gaps) <= args.tolerance)
        print(f"{rtt:7g} {gbps:6g} {within:7.2f} {gaps.mean():+9.4f} {p5:+8.4f} {p95:+8.4f}")
    flat = np.concatenate(all_gaps)
    print(f"overall: {np.mean(np.abs(flat) <= args.tolerance):.1%} within {args.tolerance:.0%} "
          "(gap = replay minus model degradation; negative = model pessimistic)")


if __name__ == "__main__":
    main()
