"""Synthetic trace generation.

Two families:

* ``synth_trace`` expands an aggregate profile (per-class counts, cumulative
  times and payloads) into a per-call trace whose summary reproduces the
  aggregates.
* ``random_trace`` and ``training_trace`` produce randomized and
  training-shaped traces for the property suites and experiments.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .trace import SR_TABLE, ApiCall, ApiClass, Trace, make_trace

MiB = 1 << 20


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthGroup:
    """Calls sharing one (base class, SR conversion) pair."""

    base_class: ApiClass
    sr_class: ApiClass | None = None
    count: int = 0
    total_gpu_us: float = 0.0
    total_local_us: float = 0.0
    total_payload_req: int = 0
    total_payload_resp: int = 0
    names: tuple[str, ...] = ()

    @property
    def key(self) -> str:
        if self.sr_class is None:
            return self.base_class.value
        return f"{self.base_class.value}->{self.sr_class.value}"

    def default_names(self) -> tuple[str, ...]:
        if self.names:
            return self.names
        match = [n for n, (b, s) in SR_TABLE.items() if b is self.base_class and s is self.sr_class]
        return tuple(match) or (f"{self.key}-call",)


@dataclass(frozen=True)
class SynthProfile:
    groups: tuple[SynthGroup, ...]
    cpu_gap_mean_us: float = 0.0
    seed: int = 0
    app: str = "synthetic"
    # Dirichlet concentration for splitting a cumulative target over calls;
    # large values approach an even split
    spread: float = 4.0
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        for g in self.groups:
            where = f"group {g.key}"
            if g.count < 0:
                raise SynthError(f"{where}: negative count")
            for name in ("total_gpu_us", "total_local_us", "total_payload_req", "total_payload_resp"):
                v = getattr(g, name)
                if not math.isfinite(v) or v < 0:
                    raise SynthError(f"{where}: {name} must be finite and non-negative")
                if g.count == 0 and v > 0:
                    raise SynthError(f"{where}: zero count with nonzero {name}")
            if g.base_class is ApiClass.LOCAL and g.sr_class is not None:
                raise SynthError(f"{where}: local calls cannot convert")
            if g.sr_class is ApiClass.SYNC:
                raise SynthError(f"{where}: conversion target must be async or local")
            if g.total_local_us > 0 and ApiClass.LOCAL not in (g.base_class, g.sr_class):
                raise SynthError(f"{where}: local time given for calls that never run locally")
        if not math.isfinite(self.cpu_gap_mean_us) or self.cpu_gap_mean_us < 0:
            raise SynthError("cpu_gap_mean_us must be finite and non-negative")


def _split_float(rng: np.random.Generator, total: float, n: int, spread: float) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    if total == 0:
        return np.zeros(n)
    w = rng.dirichlet(np.full(n, spread)) if n > 1 else np.ones(1)
    return total * w


def _split_int(rng: np.random.Generator, total: int, n: int, spread: float) -> np.ndarray:
    """Integer partition of ``total`` into ``n`` parts (largest remainder)."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    raw = _split_float(rng, float(total), n, spread)
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    if short:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def synth_trace(profile: SynthProfile, end_with_read: bool = False) -> Trace:
    """Expand ``profile`` into a per-call trace.

    Per-class counts match exactly; cumulative times and payloads match the
    targets up to float rounding. The same profile and seed give an identical
    trace. With ``end_with_read`` the last call that stays sync (the output
    read-back) is moved to the end of the trace.
    """
    profile.validate()
    rng = np.random.default_rng(profile.seed)
    rows = []  # (group, name, gpu, local, req, resp) per call
    for g in profile.groups:
        gpu = _split_float(rng, g.total_gpu_us, g.count, profile.spread)
        loc = _split_float(rng, g.total_local_us, g.count, profile.spread)
        req = _split_int(rng, g.total_payload_req, g.count, profile.spread)
        resp = _split_int(rng, g.total_payload_resp, g.count, profile.spread)
        names = g.default_names()
        picks = rng.integers(0, len(names), size=g.count)
        rows.extend(
            zip(
                [g] * g.count,
                [names[k] for k in picks],
                gpu.tolist(),
                loc.tolist(),
                req.tolist(),
                resp.tolist(),
            )
        )
    order = rng.permutation(len(rows)).tolist()
    gaps = _split_float(rng, profile.cpu_gap_mean_us * len(rows), len(rows), 1.0).tolist()
    if end_with_read:
        blocking = [i for i, j in enumerate(order) if rows[j][0].base_class is ApiClass.SYNC and rows[j][0].sr_class is None]
        if not blocking:
            raise SynthError("end_with_read needs at least one call that stays sync")
        order.append(order.pop(blocking[-1]))
    calls = []
    for i, j in enumerate(order):
        g, name, gpu, loc, req, resp = rows[j]
        calls.append(
            ApiCall(
                seq=i,
                name=name,
                base_class=g.base_class,
                sr_class=g.sr_class,
                payload_req=int(req),
                payload_resp=int(resp),
                gpu_exec_time=float(gpu),
                local_exec_time=float(loc),
                cpu_gap_before=float(gaps[i]),
            )
        )
    return Trace(tuple(calls), {"app": profile.app, "source": f"synth(seed={profile.seed})", **profile.meta})


# -- profile files ----------------------------------------------------------

_GROUP_KEYS = {
    "count": int,
    "total_gpu_us": float,
    "total_local_us": float,
    "total_payload_req": int,
    "total_payload_resp": int,
}


def _parse_group_key(section: str) -> tuple[ApiClass, ApiClass | None]:
    parts = [p.strip() for p in section.split("->")]
    try:
        if len(parts) == 1:
            return ApiClass(parts[0]), None
        if len(parts) == 2:
            return ApiClass(parts[0]), ApiClass(parts[1])
    except ValueError:
        pass
    raise SynthError(f"bad profile section [{section}]; expected e.g. [sync] or [sync->local]")


def parse_profile(text: str, seed: int = 0) -> SynthProfile:
    """Parse a key/value profile.

    Top-level keys: ``cpu_gap_mean_us``, optional ``app``. One section per
    call group, named by class (``[async]``) or by conversion
    (``[sync->local]``), with keys ``count``, ``total_gpu_us``,
    ``total_payload_req``, ``total_payload_resp``, ``total_local_us`` and an
    optional comma-separated ``names``.
    """
    cp = configparser.ConfigParser(default_section="__none__", interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as err:
        raise SynthError(f"cannot parse profile: {err}") from None
    top = cp["__top__"]
    unknown = set(top) - {"cpu_gap_mean_us", "app"}
    if unknown:
        raise SynthError(f"unknown top-level key(s) {sorted(unknown)}")
    groups = []
    for section in cp.sections():
        if section == "__top__":
            continue
        base, sr = _parse_group_key(section)
        body = cp[section]
        kw = {}
        for key, value in body.items():
            if key == "names":
                kw["names"] = tuple(n.strip() for n in value.split(",") if n.strip())
            elif key in _GROUP_KEYS:
                try:
                    kw[key] = _GROUP_KEYS[key](value)
                except ValueError:
                    raise SynthError(f"[{section}] {key}: not a number: {value!r}") from None
            else:
                raise SynthError(f"[{section}] unknown key {key!r}")
        groups.append(SynthGroup(base_class=base, sr_class=sr, **kw))
    try:
        gap = float(top.get("cpu_gap_mean_us", "0"))
    except ValueError:
        raise SynthError("cpu_gap_mean_us: not a number") from None
    profile = SynthProfile(tuple(groups), cpu_gap_mean_us=gap, seed=seed, app=top.get("app", "synthetic"))
    profile.validate()
    return profile


def load_profile(path: str | Path, seed: int = 0) -> SynthProfile:
    return parse_profile(Path(path).read_text(encoding="utf-8"), seed=seed)


def dumps_profile(profile: SynthProfile) -> str:
    lines = [f"app = {profile.app}", f"cpu_gap_mean_us = {profile.cpu_gap_mean_us!r}", ""]
    for g in profile.groups:
        lines.append(f"[{g.key}]")
        lines.append(f"count = {g.count}")
        lines.append(f"total_gpu_us = {g.total_gpu_us!r}")
        lines.append(f"total_local_us = {g.total_local_us!r}")
        lines.append(f"total_payload_req = {g.total_payload_req}")
        lines.append(f"total_payload_resp = {g.total_payload_resp}")
        if g.names:
            lines.append("names = " + ", ".join(g.names))
        lines.append("")
    return "\n".join(lines)


# -- randomized traces --------------------------------------------------------

# (name, base class, SR conversion, relative frequency)
_RANDOM_KINDS = (
    ("LaunchKernel", ApiClass.ASYNC, None, 0.40),
    ("MemcpyH2D", ApiClass.ASYNC, None, 0.08),
    ("CreateTensorDescriptor", ApiClass.SYNC, ApiClass.ASYNC, 0.12),
    ("Malloc", ApiClass.SYNC, ApiClass.ASYNC, 0.05),
    ("GetDevice", ApiClass.SYNC, ApiClass.LOCAL, 0.20),
    ("MemcpyD2H", ApiClass.SYNC, None, 0.07),
    ("StreamSynchronize", ApiClass.SYNC, None, 0.08),
)


def _loguniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def random_trace(
    seed: int,
    n_calls: int | None = None,
    max_payload: int = 16 * MiB,
    max_gap_us: float = 1000.0,
    max_exec_us: float = 500.0,
    large_copy_prob: float = 0.25,
) -> Trace:
    """Mixed-class trace with SR flags, payloads up to ``max_payload`` bytes
    and CPU gaps up to ``max_gap_us``."""
    rng = np.random.default_rng(seed)
    if n_calls is None:
        n_calls = int(rng.integers(20, 200))
    weights = np.array([k[3] for k in _RANDOM_KINDS])
    kinds = rng.choice(len(_RANDOM_KINDS), size=n_calls, p=weights / weights.sum())
    calls = []
    for kind in kinds:
        name, base, sr, _ = _RANDOM_KINDS[kind]
        gpu = _loguniform(rng, 1.0, max_exec_us)
        req = int(rng.integers(16, 4096))
        resp = 0
        if name == "MemcpyH2D" and rng.random() < large_copy_prob:
            req = int(_loguniform(rng, 4096, max_payload))
        elif name == "MemcpyD2H":
            resp = int(_loguniform(rng, 4, max_payload)) if rng.random() < large_copy_prob else int(rng.integers(4, 4096))
        elif base is ApiClass.SYNC:
            resp = int(rng.integers(4, 64))
        local = gpu * float(rng.uniform(0.0, 0.2)) if sr is ApiClass.LOCAL else 0.0
        calls.append(
            ApiCall(
                seq=0,
                name=name,
                base_class=base,
                sr_class=sr,
                payload_req=req,
                payload_resp=resp,
                gpu_exec_time=gpu,
                local_exec_time=local,
                cpu_gap_before=float(rng.uniform(0.0, max_gap_us)),
            )
        )
    return make_trace(calls, app="random", source=f"random_trace(seed={seed})")


def training_trace(
    seed: int = 0,
    iterations: int = 4,
    phases: tuple[tuple[str, int], ...] = (("forward", 48), ("backward", 96), ("update", 32)),
    kernel_us: float = 6.0,
    gap_us: float = 3.0,
    input_bytes: int = 602_112,
    jitter: float = 0.25,
) -> Trace:
    """Training-shaped trace: per iteration an input copy, then forward,
    backward and update kernel phases, with a blocking read (loss) after the
    forward pass and a stream synchronization closing the iteration."""
    rng = np.random.default_rng(seed)

    def vary(x: float) -> float:
        return float(x * rng.uniform(1.0 - jitter, 1.0 + jitter))

    calls = []
    for _ in range(iterations):
        calls.append(ApiCall(0, "MemcpyH2D", ApiClass.ASYNC, payload_req=input_bytes,
                             gpu_exec_time=vary(kernel_us), cpu_gap_before=vary(gap_us)))
        for phase, n in phases:
            for _ in range(n):
                calls.append(ApiCall(0, "LaunchKernel", ApiClass.ASYNC, payload_req=int(rng.integers(64, 512)),
                                     gpu_exec_time=vary(kernel_us), cpu_gap_before=vary(gap_us)))
            if phase == "forward":
                calls.append(ApiCall(0, "MemcpyD2H", ApiClass.SYNC, payload_req=32, payload_resp=4,
                                     gpu_exec_time=1.0, cpu_gap_before=vary(gap_us)))
        calls.append(ApiCall(0, "StreamSynchronize", ApiClass.SYNC, payload_req=16, payload_resp=4,
                             gpu_exec_time=0.5, cpu_gap_before=vary(gap_us)))
    return make_trace(calls, app="training", source=f"training_trace(seed={seed})")
