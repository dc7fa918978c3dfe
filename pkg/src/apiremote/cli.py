"""Command-line front end.

    apiremote analyze TRACE [--sr]
    apiremote solve TRACE --epsilon 0.05 --baseline-us 185500 [--grid RTTS:GBPS] [--start US]
    apiremote sweep TRACE --baseline-us 4300 [--grid RTTS:GBPS] [--start US]
    apiremote replay TRACE --rtt 5.2 --bw 200 [--dispatch or|batch:N] [--compare-model]
    apiremote synth PROFILE [--seed N] [-o OUT]

PROFILE is a key/value profile file or the name of a built-in profile
(``resnet``, ``gpt2``). Exit codes: 0 success, 1 usage, 2 input error,
3 internal assertion.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .cost_model import NetworkConfig
from .protocol import ProtocolFault
from .replay import InvariantViolation, ReplayOptions, compare_model, prepare, replay_local, replay_remote
from .solver import DEFAULT_BANDWIDTHS_GBPS, DEFAULT_RTTS_US, Budget, Grid, derive_requirements, sweep
from .synth import SynthError, dumps_profile, load_profile, synth_trace
from .trace import TraceError, apply_sr, dumps_trace, load_trace, summarize

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    inputs: list[str]
    config_digest: str
    seed: int | None
    tool_version: str = __version__
    outputs: list[str] = field(default_factory=list)
    notes: dict = field(default_factory=dict)
    created: str = ""  # the only field that varies between identical runs

    @classmethod
    def for_args(cls, args: argparse.Namespace, inputs: list[str]) -> "RunManifest":
        config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}
        digest = hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()
        return cls(
            command=args.command,
            inputs=inputs,
            config_digest=digest,
            seed=getattr(args, "seed", None),
            created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )

    def as_dict(self) -> dict:
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers ----------------------------------------------------------------


def _floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _grid(text: str | None) -> Grid:
    if text is None:
        return Grid.default()
    if ":" not in text:
        raise UsageError("--grid expects RTTS:GBPS, e.g. 1,5,10:1,40,200")
    rtts, gbps = text.split(":", 1)
    try:
        return Grid.from_gbps(_floats(rtts, "--grid rtts"), _floats(gbps, "--grid bandwidths"))
    except ValueError as err:
        raise UsageError(f"--grid: {err}") from None


def _overrides(items: list[str] | None) -> dict[str, float]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--start-override expects NAME=US, got {item!r}")
        out[name.strip()] = float(value)
    return out


def _dispatch(text: str) -> int | None:
    if text == "or":
        return None
    kind, sep, n = text.partition(":")
    if kind != "batch" or not sep or not n.isdigit() or int(n) < 1:
        raise UsageError(f"--dispatch expects 'or' or 'batch:N' with N >= 1, got {text!r}")
    return int(n)


def _emit_json(obj: dict, args, manifest: RunManifest) -> None:
    if args.output:
        manifest.outputs.append(str(args.output))
    obj = {"manifest": manifest.as_dict(), **obj}
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_text(text: str, args, manifest: RunManifest) -> None:
    """Non-JSON artifacts carry their manifest in a sidecar (or on stderr)."""
    if args.output:
        out = Path(args.output)
        sidecar = out.with_name(out.name + ".manifest.json")
        manifest.outputs += [str(out), str(sidecar)]
        out.write_text(text, encoding="utf-8")
        sidecar.write_text(json.dumps(manifest.as_dict(), indent=2) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text)
        sys.stderr.write(json.dumps(manifest.as_dict()) + "\n")


# -- commands -----------------------------------------------------------------


def cmd_analyze(args) -> int:
    trace = apply_sr(load_trace(args.trace), args.sr, locality=args.sr)
    summary = summarize(trace)
    manifest = RunManifest.for_args(args, [args.trace])
    _emit_json({"sr": args.sr, "summary": summary.as_dict()}, args, manifest)
    return EXIT_OK


def _cost_trace(args):
    return apply_sr(load_trace(args.trace), not args.no_sr, locality=not args.no_sr)


def cmd_solve(args) -> int:
    trace = _cost_trace(args)
    budget = Budget(args.epsilon, args.baseline_us)
    frontier = derive_requirements(trace, budget, _grid(args.grid), args.start, _overrides(args.start_override))
    manifest = RunManifest.for_args(args, [args.trace])
    _emit_json(
        {
            "budget": {"epsilon": budget.epsilon_fraction, "baseline_us": budget.baseline_us, "epsilon_us": budget.epsilon_us},
            "frontier": [p.as_dict() for p in frontier.pareto],
            "points": [p.as_dict() for p in frontier.points],
            "diagnostic": frontier.diagnostic,
        },
        args,
        manifest,
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    trace = _cost_trace(args)
    grid = _grid(args.grid)
    if not args.baseline_us > 0:
        raise UsageError("--baseline-us must be positive")
    matrix = sweep(trace, grid, args.baseline_us, args.start, _overrides(args.start_override))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rtt_us\\gbps"] + [f"{g:g}" for g in grid.gbps])
    for rtt, row in zip(grid.rtts, matrix):
        w.writerow([f"{rtt:g}"] + [repr(float(x)) for x in row])
    _emit_text(buf.getvalue(), args, RunManifest.for_args(args, [args.trace]))
    return EXIT_OK


def cmd_replay(args) -> int:
    trace = load_trace(args.trace)
    sr = not args.no_sr
    net = NetworkConfig.from_gbps(args.rtt, args.bw, args.start, _overrides(args.start_override))
    opts = ReplayOptions(
        network=net,
        sr=sr,
        locality=sr and not args.no_locality,
        batch_size=_dispatch(args.dispatch),
        ideal=args.ideal,
        seed=args.seed,
    )
    baseline = args.baseline_us
    if baseline is None:
        baseline = replay_local(prepare(trace, opts)).end_to_end_us
    result = replay_remote(trace, opts)
    report = {
        "options": opts.as_dict(),
        "local_baseline_us": baseline,
        "result": result.as_dict(),
        "degradation": (result.end_to_end_us - baseline) / baseline if baseline > 0 else None,
    }
    if args.compare_model:
        if opts.batch_size is not None:
            raise UsageError("--compare-model needs --dispatch or")
        report["model_comparison"] = compare_model(trace, opts, baseline if baseline > 0 else None).as_dict()
    _emit_json(report, args, RunManifest.for_args(args, [args.trace]))
    return EXIT_OK


def _builtin_profiles():
    from .profiles import PROFILES

    return PROFILES


def cmd_synth(args) -> int:
    builtins = _builtin_profiles()
    notes = {}
    if args.profile in builtins and not Path(args.profile).exists():
        ref = builtins[args.profile]()
        trace = ref.trace(seed=args.seed)
        notes = {
            "baseline_us": ref.baseline_us,
            "calibrated_start_us": ref.start_overhead(trace),
            "profile": dumps_profile(ref.synth),
        }
    else:
        trace = synth_trace(load_profile(args.profile, seed=args.seed))
    manifest = RunManifest.for_args(args, [args.profile])
    manifest.notes = notes
    _emit_text(dumps_trace(trace), args, manifest)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_cost_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", help="RTTS:GBPS, comma-separated axes (default %s:%s)" % (
        ",".join(f"{r:g}" for r in DEFAULT_RTTS_US), ",".join(f"{g:g}" for g in DEFAULT_BANDWIDTHS_GBPS)))
    p.add_argument("--start", type=float, default=0.0, help="per-request start overhead, us")
    p.add_argument("--start-override", action="append", metavar="NAME=US")
    p.add_argument("--no-sr", action="store_true", help="cost the trace without shadow resources")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="apiremote", description="GPU API remoting cost model and replay harness")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="per-class call counts and times")
    p.add_argument("trace")
    p.add_argument("--sr", action="store_true", help="apply shadow-resource reclassification")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("solve", help="network requirement frontier for an overhead budget")
    p.add_argument("trace")
    p.add_argument("--epsilon", type=float, required=True, help="budget as a fraction of the baseline")
    p.add_argument("--baseline-us", type=float, required=True)
    _add_cost_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="degradation matrix over the grid (CSV)")
    p.add_argument("trace")
    p.add_argument("--baseline-us", type=float, required=True)
    _add_cost_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="discrete-event replay through the remoting stack")
    p.add_argument("trace")
    p.add_argument("--rtt", type=float, required=True, help="round-trip time, us")
    p.add_argument("--bw", type=float, required=True, help="bandwidth, Gbps")
    p.add_argument("--start", type=float, default=0.0, help="per-request start overhead, us")
    p.add_argument("--start-override", action="append", metavar="NAME=US")
    p.add_argument("--dispatch", default="or", help="'or' or 'batch:N'")
    p.add_argument("--no-sr", action="store_true")
    p.add_argument("--no-locality", action="store_true")
    p.add_argument("--ideal", action="store_true", help="zero-latency shared-memory transport")
    p.add_argument("--compare-model", action="store_true")
    p.add_argument("--baseline-us", type=float, help="local time (default: local replay)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("synth", help="synthesize a trace from an aggregate profile")
    p.add_argument("profile", help="profile file, or a built-in name: resnet, gpt2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"apiremote {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceError, SynthError, OSError, ValueError) as err:
        print(f"apiremote {args.command}: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantViolation, ProtocolFault, AssertionError) as err:
        print(f"apiremote {args.command}: internal assertion: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
