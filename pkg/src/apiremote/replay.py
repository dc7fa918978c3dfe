"""Discrete-event replay of a trace, locally and through the remoting stack.

Local mode is the no-remoting baseline: the application drives the device
through the local driver and every call occupies the caller until its
execution completes. CPU gaps are replayed verbatim in both modes. A trailing
zero-cost synchronization is appended when the trace does not already end
in a sync call, so results are read back before the clock stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cost_model import NetworkConfig, total_cost
from .device import DeviceTimeline, ExecRecord
from .protocol import Session
from .trace import ApiCall, ApiClass, Trace, apply_sr

BARRIER_NAME = "StreamSynchronize"


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ReplayOptions:
    network: NetworkConfig
    sr: bool = True
    locality: bool = True
    batch_size: int | None = None  # None: outstanding requests
    ideal: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.locality and not self.sr:
            raise ValueError("locality needs shadow resources (sr=True)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    @property
    def dispatch(self) -> str:
        return "or" if self.batch_size is None else f"batch:{self.batch_size}"

    def as_dict(self) -> dict:
        return {
            "sr": self.sr,
            "locality": self.locality,
            "dispatch": self.dispatch,
            "transport": "ideal" if self.ideal else "emulated",
            "network": self.network.as_dict(),
            "seed": self.seed,
        }


@dataclass
class ReplayResult:
    end_to_end_us: float
    device_busy_us: float
    arrival_delays: dict[int, float] = field(default_factory=dict)
    message_count: int = 0
    transport_sends: int = 0
    max_outstanding: int = 0
    device_log: tuple[ExecRecord, ...] = ()
    checks: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(self.checks.values())

    def as_dict(self) -> dict:
        delays = np.array(list(self.arrival_delays.values())) if self.arrival_delays else np.zeros(0)
        return {
            "end_to_end_us": self.end_to_end_us,
            "device_busy_us": self.device_busy_us,
            "message_count": self.message_count,
            "transport_sends": self.transport_sends,
            "max_outstanding": self.max_outstanding,
            "arrival_delay_us": {
                "sum": float(delays.sum()),
                "max": float(delays.max()) if delays.size else 0.0,
                "mean": float(delays.mean()) if delays.size else 0.0,
            },
            "checks": dict(self.checks),
        }


def with_barrier(trace: Trace) -> Trace:
    if trace.calls and trace.calls[-1].cls is ApiClass.SYNC:
        return trace
    barrier = ApiCall(len(trace), BARRIER_NAME, ApiClass.SYNC, effective=ApiClass.SYNC)
    return Trace(trace.calls + (barrier,), trace.meta)


def prepare(trace: Trace, opts: ReplayOptions) -> Trace:
    """The exact trace a remote replay runs: SR resolved, barrier appended."""
    return with_barrier(apply_sr(trace, opts.sr, locality=opts.locality))


def replay_local(trace: Trace) -> ReplayResult:
    trace = with_barrier(trace)
    device = DeviceTimeline()
    t = 0.0
    for call in trace.calls:
        t += call.cpu_gap_before
        t = device.submit(call, t)
    log = device.snapshot()
    return ReplayResult(
        end_to_end_us=t,
        device_busy_us=math.fsum(r.finish - r.start for r in log),
        device_log=log,
    )


def _check(result_checks: dict[str, int], name: str, violations: int) -> None:
    result_checks[name] = result_checks.get(name, 0) + int(violations)


def replay_remote(trace: Trace, opts: ReplayOptions, strict: bool = True) -> ReplayResult:
    run = prepare(trace, opts)
    session = Session(opts.network, ideal=opts.ideal, batch_size=opts.batch_size, seed=opts.seed)
    t = 0.0
    issue_order = []
    for call in run.calls:
        t += call.cpu_gap_before
        out = session.client_call(call, t)
        if out.dispatched:
            issue_order.append(call.seq)
        if call.cls is ApiClass.ASYNC and opts.batch_size is None and out.return_time != t + opts.network.start_for(call.name):
            session.checks.async_waited += 1
        t = out.return_time
    session.close(t)
    end = t

    log = session.device.snapshot()
    local = replay_local(run)
    local_submit = {r.seq: r.submit for r in local.device_log}
    delays = {r.seq: r.submit - local_submit[r.seq] for r in log}

    checks: dict[str, int] = {}
    executed = [r.seq for r in log]
    _check(checks, "fifo_device_order", executed != issue_order)
    _check(checks, "device_serial", sum(1 for a, b in zip(log, log[1:]) if b.start < a.finish))
    _check(checks, "transport_fifo", (not session.uplink.fifo_ok()) + (not session.downlink.fifo_ok()))
    _check(checks, "transport_conservation", session.uplink.sent_count != session.uplink.delivered_count)
    n_local = sum(1 for c in run.calls if c.cls is ApiClass.LOCAL)
    _check(checks, "locality_silence", session.message_count != len(run) - n_local)
    _check(checks, "shadow_soundness", len(session.proxy.idmap) != len(session.shadows))
    _check(checks, "response_seq", session.checks.response_seq_mismatch)
    _check(checks, "sync_before_drain", session.checks.sync_before_drain)
    _check(checks, "or_liveness", session.checks.async_waited)

    result = ReplayResult(
        end_to_end_us=end,
        device_busy_us=math.fsum(r.finish - r.start for r in log),
        arrival_delays=delays,
        message_count=session.message_count,
        transport_sends=session.transport_sends,
        max_outstanding=session.outstanding.max_depth,
        device_log=log,
        checks=checks,
    )
    if strict and not result.ok:
        bad = {k: v for k, v in checks.items() if v}
        raise InvariantViolation(f"replay invariants violated: {bad}")
    return result


@dataclass(frozen=True)
class ModelComparison:
    baseline_us: float
    replay_end_to_end_us: float
    replay_degradation: float
    model_cost_us: float
    model_degradation: float

    @property
    def gap(self) -> float:
        """replay minus model degradation; positive when the model is optimistic."""
        return self.replay_degradation - self.model_degradation

    @property
    def abs_gap(self) -> float:
        return abs(self.gap)

    def as_dict(self) -> dict:
        return {
            "baseline_us": self.baseline_us,
            "replay_end_to_end_us": self.replay_end_to_end_us,
            "replay_degradation": self.replay_degradation,
            "model_cost_us": self.model_cost_us,
            "model_degradation": self.model_degradation,
            "gap": self.gap,
        }


def compare_model(trace: Trace, opts: ReplayOptions, baseline_us: float | None = None) -> ModelComparison:
    """Replay and analytic model on identical inputs (SR resolved, barrier included)."""
    if opts.batch_size is not None:
        raise ValueError("the analytic model describes outstanding-request dispatch; use batch_size=None")
    run = prepare(trace, opts)
    if baseline_us is None:
        baseline_us = replay_local(run).end_to_end_us
    if not baseline_us > 0:
        raise ValueError("baseline must be positive")
    remote = replay_remote(trace, opts)
    net = opts.network
    if opts.ideal:
        net = NetworkConfig(0.0, math.inf, net.start_overhead, dict(net.start_overrides))
    cost = total_cost(run, net).total_cost
    return ModelComparison(
        baseline_us=baseline_us,
        replay_end_to_end_us=remote.end_to_end_us,
        replay_degradation=(remote.end_to_end_us - baseline_us) / baseline_us,
        model_cost_us=cost,
        model_degradation=cost / baseline_us,
    )
