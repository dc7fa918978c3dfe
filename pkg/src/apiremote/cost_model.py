"""Analytic remoting cost.

Per-call costs (all in microseconds)::

    async:  Start + RTT/2 + req/bandwidth                  - exec
    sync:   Start + RTT   + (req + resp)/bandwidth
    local:                                                 - (exec - shadow exec)

The application cost is the sum over calls in issue order. It is the added
delay relative to local execution and may be negative: async dispatch takes
the call's execution off the caller's critical path, and local answering
replaces the real execution with the (cheaper) shadow one.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .trace import ApiCall, ApiClass, Trace

GBPS_TO_BYTES_PER_US = 125.0


class WrongClassError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    """rtt in µs, bandwidth in bytes/µs (``math.inf`` for an ideal link),
    start_overhead in µs with optional per-API-name overrides."""

    rtt: float
    bandwidth: float
    start_overhead: float = 0.0
    start_overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if math.isnan(self.rtt) or math.isinf(self.rtt) or self.rtt < 0:
            raise ValueError(f"rtt must be finite and >= 0, got {self.rtt}")
        if math.isnan(self.bandwidth) or self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        for name, v in {"start_overhead": self.start_overhead, **self.start_overrides}.items():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"start overhead for {name} must be finite and >= 0, got {v}")

    @classmethod
    def from_gbps(cls, rtt_us: float, gbps: float, start_us: float = 0.0, overrides=None) -> "NetworkConfig":
        return cls(rtt_us, gbps * GBPS_TO_BYTES_PER_US, start_us, dict(overrides or {}))

    @property
    def gbps(self) -> float:
        return self.bandwidth / GBPS_TO_BYTES_PER_US

    def start_for(self, name: str) -> float:
        return self.start_overrides.get(name, self.start_overhead)

    def transfer(self, nbytes: float) -> float:
        return nbytes / self.bandwidth if nbytes else 0.0

    def with_(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "rtt_us": self.rtt,
            "bandwidth_gbps": self.gbps,
            "start_us": self.start_overhead,
            "start_overrides": dict(self.start_overrides),
        }


def parse_network_config(text: str) -> NetworkConfig:
    """Parse ``key = value`` lines (``rtt_us``, ``bandwidth_gbps``, ``start_us``)
    with an optional ``[start_us]`` section of per-API overrides."""
    cp = configparser.ConfigParser(default_section="__none__", interpolation=None)
    cp.optionxform = str
    cp.read_string("[__top__]\n" + text)
    top = cp["__top__"]
    unknown = set(top) - {"rtt_us", "bandwidth_gbps", "start_us"}
    if unknown:
        raise ValueError(f"unknown network key(s) {sorted(unknown)}")
    for key in ("rtt_us", "bandwidth_gbps"):
        if key not in top:
            raise ValueError(f"missing network key {key!r}")
    overrides = {}
    for section in cp.sections():
        if section == "__top__":
            continue
        if section != "start_us":
            raise ValueError(f"unknown section [{section}]")
        overrides = {k: float(v) for k, v in cp[section].items()}
    return NetworkConfig.from_gbps(
        float(top["rtt_us"]), float(top["bandwidth_gbps"]), float(top.get("start_us", "0")), overrides
    )


def load_network_config(path: str | Path) -> NetworkConfig:
    return parse_network_config(Path(path).read_text(encoding="utf-8"))


# -- per-call terms -----------------------------------------------------------


def _require(api: ApiCall, cls: ApiClass) -> None:
    if api.cls is not cls:
        raise WrongClassError(f"{api.name} (seq {api.seq}) is {api.cls.value}, expected {cls.value}")


def cost_async(api: ApiCall, net: NetworkConfig) -> float:
    _require(api, ApiClass.ASYNC)
    return net.start_for(api.name) + net.rtt / 2 + net.transfer(api.payload_req)


def cost_sync(api: ApiCall, net: NetworkConfig) -> float:
    _require(api, ApiClass.SYNC)
    return net.start_for(api.name) + net.rtt + net.transfer(api.payload_req + api.payload_resp)


def accel_async(api: ApiCall) -> float:
    _require(api, ApiClass.ASYNC)
    return api.gpu_exec_time


def accel_local(api: ApiCall) -> float:
    _require(api, ApiClass.LOCAL)
    return api.gpu_exec_time - api.local_exec_time


# -- whole-trace cost -------------------------------------------------------


@dataclass(frozen=True)
class CostBreakdown:
    sum_c_async: float
    sum_c_sync: float
    sum_e_async: float
    sum_e_local: float
    total_cost: float
    counts: Mapping[ApiClass, int]

    @property
    def contributions(self) -> dict[ApiClass, float]:
        """Net signed contribution of each class to ``total_cost``."""
        return {
            ApiClass.ASYNC: self.sum_c_async - self.sum_e_async,
            ApiClass.SYNC: self.sum_c_sync,
            ApiClass.LOCAL: -self.sum_e_local,
        }

    def as_dict(self) -> dict:
        return {
            "sum_c_async_us": self.sum_c_async,
            "sum_c_sync_us": self.sum_c_sync,
            "sum_e_async_us": self.sum_e_async,
            "sum_e_local_us": self.sum_e_local,
            "total_cost_us": self.total_cost,
            "counts": {k.value: v for k, v in self.counts.items()},
        }


def _starts(trace: Trace, net: NetworkConfig) -> np.ndarray:
    if not net.start_overrides:
        return np.full(len(trace), float(net.start_overhead))
    return np.array([net.start_for(n) for n in trace.names()], dtype=float)


def total_cost(trace: Trace, net: NetworkConfig) -> CostBreakdown:
    cols = trace.columns
    cls = cols["cls"]
    is_async, is_sync, is_local = cls == 0, cls == 1, cls == 2
    start = _starts(trace, net)
    if math.isinf(net.bandwidth):
        xfer_req = np.zeros(len(trace))
        xfer_both = xfer_req
    else:
        xfer_req = cols["payload_req"] / net.bandwidth
        xfer_both = (cols["payload_req"] + cols["payload_resp"]) / net.bandwidth
    c_async = math.fsum((start + net.rtt / 2 + xfer_req)[is_async])
    c_sync = math.fsum((start + net.rtt + xfer_both)[is_sync])
    e_async = math.fsum(cols["gpu"][is_async])
    e_local = math.fsum((cols["gpu"] - cols["local"])[is_local])
    return CostBreakdown(
        sum_c_async=c_async,
        sum_c_sync=c_sync,
        sum_e_async=e_async,
        sum_e_local=e_local,
        total_cost=c_async - e_async + c_sync - e_local,
        counts={
            ApiClass.ASYNC: int(is_async.sum()),
            ApiClass.SYNC: int(is_sync.sum()),
            ApiClass.LOCAL: int(is_local.sum()),
        },
    )


def degradation(trace: Trace, net: NetworkConfig, baseline_us: float) -> float:
    """Remoting cost as a signed fraction of the local baseline (negative = speedup)."""
    if not baseline_us > 0:
        raise ValueError(f"baseline must be positive, got {baseline_us}")
    return total_cost(trace, net).total_cost / baseline_us
