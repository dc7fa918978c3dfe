"""Per-class call counts and API time of the built-in inference profiles,
with and without shadow resources."""

import argparse

from apiremote.profiles import PROFILES
from apiremote.trace import ApiClass, apply_sr, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'profile':8} {'sr':5} " + " ".join(f"{k.value:>18}" for k in ApiClass) + f" {'total ms':>10}")
    for name in sorted(PROFILES):
        trace = PROFILES[name]().trace(seed=args.seed)
        for sr in (False, True):
            s = summarize(apply_sr(trace, sr))
            cells = " ".join(f"{s.per_class[k].count:>8} {s.api_time_us(k) / 1000:7.2f}ms" for k in ApiClass)
            print(f"{name:8} {str(sr):5} {cells} {s.total_api_time_us() / 1000:10.2f}")


if __name__ == "__main__":
    main()
