"""End-to-end time of outstanding-request dispatch against batching on
training-shaped traces."""

import argparse

from apiremote.cost_model import NetworkConfig
from apiremote.profiles import V100_GBPS, V100_RTT_US, resnet_v100
from apiremote.replay import ReplayOptions, replay_local, replay_remote
from apiremote.synth import training_trace


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--rtt", type=float, default=V100_RTT_US)
    ap.add_argument("--gbps", type=float, default=V100_GBPS)
    ap.add_argument("--start", type=float, help="start overhead, us (default: calibrated V100 value)")
    ap.add_argument("--batches", default="8,16,32,64")
    args = ap.parse_args()
    start = args.start if args.start is not None else resnet_v100().start_overhead()
    net = NetworkConfig.from_gbps(args.rtt, args.gbps, start)
    sizes = [int(n) for n in args.batches.split(",")]
    print(f"rtt {args.rtt:g} us, {args.gbps:g} Gbps, start {start:.3f} us")
    print(f"{'seed':>4} {'local':>8} {'OR':>8} " + " ".join(f"{'b' + str(n):>8}" for n in sizes) + "  OR vs best  OR vs worst")
    for seed in range(args.seeds):
        trace = training_trace(seed)
        local = replay_local(trace).end_to_end_us
        orr = replay_remote(trace, ReplayOptions(net)).end_to_end_us
        batch = [replay_remote(trace, ReplayOptions(net, batch_size=n)).end_to_end_us for n in sizes]
        best, worst = min(batch), max(batch)
        print(
            f"{seed:>4} {local:8.0f} {orr:8.0f} " + " ".join(f"{b:8.0f}" for b in batch)
            + f"  {(orr - best) / best:+9.1%}  {(orr - worst) / worst:+10.1%}"
        )


if __name__ == "__main__":
    main()
