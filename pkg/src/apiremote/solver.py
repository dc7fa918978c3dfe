"""Network requirement search over an (RTT, bandwidth) grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cost_model import GBPS_TO_BYTES_PER_US, NetworkConfig, total_cost
from .trace import ApiClass, Trace

DEFAULT_RTTS_US = (1.0, 5.0, 10.0, 20.0, 50.0, 100.0)
DEFAULT_BANDWIDTHS_GBPS = (1.0, 10.0, 40.0, 100.0, 200.0)


@dataclass(frozen=True)
class Budget:
    epsilon_fraction: float
    baseline_us: float

    def __post_init__(self):
        if not (0 < self.epsilon_fraction <= 1):
            raise ValueError(f"epsilon_fraction must be in (0, 1], got {self.epsilon_fraction}")
        if not (self.baseline_us > 0 and math.isfinite(self.baseline_us)):
            raise ValueError(f"baseline_us must be positive, got {self.baseline_us}")

    @property
    def epsilon_us(self) -> float:
        return self.epsilon_fraction * self.baseline_us


@dataclass(frozen=True)
class Grid:
    rtts: tuple[float, ...]
    bandwidths: tuple[float, ...]  # bytes/µs

    def __post_init__(self):
        object.__setattr__(self, "rtts", tuple(float(r) for r in self.rtts))
        object.__setattr__(self, "bandwidths", tuple(float(b) for b in self.bandwidths))
        for label, axis in (("rtt", self.rtts), ("bandwidth", self.bandwidths)):
            if not axis:
                raise ValueError(f"{label} axis is empty")
            if any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValueError(f"{label} axis must be strictly increasing: {axis}")
        if self.rtts[0] < 0 or self.bandwidths[0] <= 0:
            raise ValueError("rtt must be >= 0 and bandwidth > 0")

    @classmethod
    def from_gbps(cls, rtts_us: Sequence[float], gbps: Sequence[float]) -> "Grid":
        return cls(tuple(rtts_us), tuple(g * GBPS_TO_BYTES_PER_US for g in gbps))

    @classmethod
    def default(cls) -> "Grid":
        return cls.from_gbps(DEFAULT_RTTS_US, DEFAULT_BANDWIDTHS_GBPS)

    @property
    def gbps(self) -> tuple[float, ...]:
        return tuple(b / GBPS_TO_BYTES_PER_US for b in self.bandwidths)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rtts), len(self.bandwidths)


@dataclass(frozen=True)
class GridPoint:
    rtt: float
    bandwidth: float
    total_cost: float
    satisfied: bool

    @property
    def gbps(self) -> float:
        return self.bandwidth / GBPS_TO_BYTES_PER_US

    def as_dict(self) -> dict:
        return {
            "rtt_us": self.rtt,
            "bandwidth_gbps": self.gbps,
            "total_cost_us": self.total_cost,
            "satisfied": self.satisfied,
        }


@dataclass(frozen=True)
class RequirementFrontier:
    budget: Budget
    grid: Grid
    points: tuple[GridPoint, ...]  # row-major: rtt outer, bandwidth inner
    pareto: tuple[GridPoint, ...]
    diagnostic: str | None = None

    def point(self, rtt: float, bandwidth: float) -> GridPoint:
        for p in self.points:
            if p.rtt == rtt and p.bandwidth == bandwidth:
                return p
        raise KeyError((rtt, bandwidth))

    def satisfies(self, rtt_us: float, gbps: float) -> bool:
        return self.point(rtt_us, gbps * GBPS_TO_BYTES_PER_US).satisfied

    @property
    def satisfaction(self) -> np.ndarray:
        return np.array([p.satisfied for p in self.points], dtype=bool).reshape(self.grid.shape)

    @property
    def costs(self) -> np.ndarray:
        return np.array([p.total_cost for p in self.points]).reshape(self.grid.shape)


def _net(rtt: float, bw: float, start_overhead: float, overrides: Mapping[str, float] | None) -> NetworkConfig:
    return NetworkConfig(rtt, bw, start_overhead, dict(overrides or {}))


def pareto_points(points: Sequence[GridPoint]) -> list[GridPoint]:
    """Satisfying points not dominated by a looser satisfying one
    (larger-or-equal RTT and smaller-or-equal bandwidth)."""
    ok = [p for p in points if p.satisfied]
    front = []
    for p in ok:
        dominated = any(
            q is not p and q.rtt >= p.rtt and q.bandwidth <= p.bandwidth and (q.rtt, q.bandwidth) != (p.rtt, p.bandwidth)
            for q in ok
        )
        if not dominated:
            front.append(p)
    return sorted(front, key=lambda p: (p.rtt, p.bandwidth))


def derive_requirements(
    trace: Trace,
    budget: Budget,
    grid: Grid,
    start_overhead: float = 0.0,
    start_overrides: Mapping[str, float] | None = None,
) -> RequirementFrontier:
    points = []
    for rtt in grid.rtts:
        for bw in grid.bandwidths:
            cost = total_cost(trace, _net(rtt, bw, start_overhead, start_overrides)).total_cost
            points.append(GridPoint(rtt, bw, cost, cost <= budget.epsilon_us))
    front = pareto_points(points)
    diagnostic = None
    if not front:
        best = min(points, key=lambda p: p.total_cost)
        diagnostic = (
            f"no grid point meets the budget of {budget.epsilon_us:.3f} us; "
            f"lowest cost {best.total_cost:.3f} us at rtt={best.rtt:g} us, {best.gbps:g} Gbps"
        )
    return RequirementFrontier(budget, grid, tuple(points), tuple(front), diagnostic)


def rtt_slope(trace: Trace, bandwidth: float | None = None) -> float:
    """d(total_cost)/d(rtt): each async call carries half an RTT, each sync call a full one.

    Bandwidth does not enter the slope; the argument is accepted for symmetry
    with the sweep API.
    """
    counts = trace.counts()
    return counts[ApiClass.ASYNC] / 2 + counts[ApiClass.SYNC]


def degradation_slope(trace: Trace, baseline_us: float) -> float:
    """Degradation (fraction) added per µs of RTT."""
    return rtt_slope(trace) / baseline_us


def sweep(
    trace: Trace,
    grid: Grid,
    baseline_us: float,
    start_overhead: float = 0.0,
    start_overrides: Mapping[str, float] | None = None,
) -> np.ndarray:
    """Degradation matrix, rows follow ``grid.rtts`` and columns ``grid.bandwidths``."""
    if not baseline_us > 0:
        raise ValueError("baseline must be positive")
    out = np.empty(grid.shape)
    for i, rtt in enumerate(grid.rtts):
        for j, bw in enumerate(grid.bandwidths):
            out[i, j] = total_cost(trace, _net(rtt, bw, start_overhead, start_overrides)).total_cost / baseline_us
    return out


def calibrate_start(trace: Trace, net: NetworkConfig, target_cost_us: float) -> float:
    """Uniform start overhead that makes ``total_cost`` hit ``target_cost_us`` at ``net``.

    Cost is affine in a uniform start overhead with slope n_async + n_sync.
    Per-API overrides are dropped.
    """
    counts = trace.counts()
    n = counts[ApiClass.ASYNC] + counts[ApiClass.SYNC]
    if n == 0:
        raise ValueError("trace has no dispatched calls; start overhead is unidentifiable")
    zero = total_cost(trace, NetworkConfig(net.rtt, net.bandwidth, 0.0)).total_cost
    start = (target_cost_us - zero) / n
    if start < 0:
        raise ValueError(f"target cost {target_cost_us} needs a negative start overhead ({start:.4f} us)")
    return start
