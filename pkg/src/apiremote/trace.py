"""API traces: ingestion, validation, SR reclassification and summaries.

A trace is the ordered list of GPU API calls an application issues during one
forward pass (inference) or one iteration (training). Times are microseconds,
sizes are raw bytes.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np


class TraceError(ValueError):
    """Malformed trace input or violated trace invariant."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ApiClass(str, enum.Enum):
    ASYNC = "async"
    SYNC = "sync"
    LOCAL = "local"


# CUDA API names seen in the PyTorch workloads of interest, mapped to
# (class without shadow resources, class with shadow resources).
SR_TABLE: dict[str, tuple[ApiClass, ApiClass | None]] = {
    "LaunchKernel": (ApiClass.ASYNC, None),
    "MemcpyH2D": (ApiClass.ASYNC, None),
    "Malloc": (ApiClass.SYNC, ApiClass.ASYNC),
    "CreateTensorDescriptor": (ApiClass.SYNC, ApiClass.ASYNC),
    "GetDevice": (ApiClass.SYNC, ApiClass.LOCAL),
    "MemcpyD2H": (ApiClass.SYNC, None),
    "StreamSynchronize": (ApiClass.SYNC, None),
}

# Calls that create a GPU resource; with SR on they mint a shadow id client-side.
RESOURCE_CREATORS = frozenset({"Malloc", "CreateTensorDescriptor"})

_NUMBER_TYPES = (int, float)
_NUMERIC_FIELDS = ("payload_req", "payload_resp", "gpu_exec_time", "local_exec_time", "cpu_gap_before")


@dataclass(frozen=True)
class ApiCall:
    seq: int
    name: str
    base_class: ApiClass
    sr_class: ApiClass | None = None
    payload_req: int = 0
    payload_resp: int = 0
    gpu_exec_time: float = 0.0
    local_exec_time: float = 0.0
    cpu_gap_before: float = 0.0
    # resolved by apply_sr; None means "not resolved yet, use base_class"
    effective: ApiClass | None = None

    def __post_init__(self):
        values = (self.payload_req, self.payload_resp, self.gpu_exec_time, self.local_exec_time, self.cpu_gap_before)
        if not all(type(v) in _NUMBER_TYPES and 0 <= v < math.inf for v in values):
            self._reject_numbers()
        if self.base_class is ApiClass.LOCAL and self.sr_class is not None:
            raise TraceError("local calls cannot carry an SR conversion", field="sr_class")
        if self.sr_class is ApiClass.SYNC:
            raise TraceError("SR conversion target must be async or local", field="sr_class")

    def _reject_numbers(self):
        for name in _NUMERIC_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TraceError(f"{name} must be a number, got {value!r}", field=name)
            if not math.isfinite(value) or value < 0:
                raise TraceError(f"{name} must be finite and non-negative, got {value!r}", field=name)

    @property
    def cls(self) -> ApiClass:
        return self.effective if self.effective is not None else self.base_class

    @property
    def creates_resource(self) -> bool:
        return self.name in RESOURCE_CREATORS or (
            self.base_class is ApiClass.SYNC and self.sr_class is ApiClass.ASYNC
        )


@dataclass(frozen=True)
class Trace:
    calls: tuple[ApiCall, ...]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "calls", tuple(self.calls))
        for i, call in enumerate(self.calls):
            if call.seq != i:
                raise TraceError(f"seq must be dense 0..n-1, call {i} has seq {call.seq}", field="seq")

    def __len__(self) -> int:
        return len(self.calls)

    def __iter__(self):
        return iter(self.calls)

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Column view used by the vectorised cost model."""
        cls_code = {ApiClass.ASYNC: 0, ApiClass.SYNC: 1, ApiClass.LOCAL: 2}
        return {
            "cls": np.fromiter((cls_code[c.cls] for c in self.calls), dtype=np.int8, count=len(self)),
            "payload_req": np.fromiter((c.payload_req for c in self.calls), dtype=float, count=len(self)),
            "payload_resp": np.fromiter((c.payload_resp for c in self.calls), dtype=float, count=len(self)),
            "gpu": np.fromiter((c.gpu_exec_time for c in self.calls), dtype=float, count=len(self)),
            "local": np.fromiter((c.local_exec_time for c in self.calls), dtype=float, count=len(self)),
            "gap": np.fromiter((c.cpu_gap_before for c in self.calls), dtype=float, count=len(self)),
        }

    def names(self) -> list[str]:
        return [c.name for c in self.calls]

    def counts(self) -> dict[ApiClass, int]:
        out = {k: 0 for k in ApiClass}
        for c in self.calls:
            out[c.cls] += 1
        return out


def make_trace(calls: Iterable[ApiCall], **meta) -> Trace:
    """Build a trace, renumbering seq to input order."""
    return Trace(tuple(c if c.seq == i else replace(c, seq=i) for i, c in enumerate(calls)), meta)


# -- file format -----------------------------------------------------------

_REQUIRED = ("seq", "name", "class", "payload_req", "payload_resp", "gpu_exec_us")
_OPTIONAL = ("sr_class", "local_exec_us", "cpu_gap_us")


def _parse_record(rec: dict, lineno: int) -> ApiCall:
    unknown = set(rec) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise TraceError(f"unknown field(s) {sorted(unknown)}", lineno, sorted(unknown)[0])
    for key in _REQUIRED:
        if key not in rec:
            raise TraceError(f"missing field {key!r}", lineno, key)
    try:
        base = ApiClass(rec["class"])
    except ValueError:
        raise TraceError(f"class must be async/sync/local, got {rec['class']!r}", lineno, "class") from None
    sr = rec.get("sr_class")
    if sr is not None:
        if sr not in ("async", "local"):
            raise TraceError(f"sr_class must be async or local, got {sr!r}", lineno, "sr_class")
        sr = ApiClass(sr)
    if not isinstance(rec["name"], str) or not rec["name"]:
        raise TraceError("name must be a non-empty string", lineno, "name")
    for key in ("payload_req", "payload_resp"):
        v = rec[key]
        if isinstance(v, float) and v.is_integer():
            rec[key] = int(v)
        elif not isinstance(v, int) or isinstance(v, bool):
            raise TraceError(f"{key} must be an integer byte count, got {v!r}", lineno, key)
    try:
        return ApiCall(
            seq=rec["seq"],
            name=rec["name"],
            base_class=base,
            sr_class=sr,
            payload_req=rec["payload_req"],
            payload_resp=rec["payload_resp"],
            gpu_exec_time=rec["gpu_exec_us"],
            local_exec_time=rec.get("local_exec_us", 0.0),
            cpu_gap_before=rec.get("cpu_gap_us", 0.0),
        )
    except TraceError as err:
        raise TraceError(str(err), lineno, err.field) from None


def read_trace(fh: IO[str], source: str = "<stream>") -> Trace:
    calls = []
    last_seq = None
    for lineno, line in enumerate(fh, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as err:
            raise TraceError(f"invalid JSON: {err.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise TraceError("record must be a JSON object", lineno)
        seq = rec.get("seq")
        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
            raise TraceError(f"seq must be a non-negative integer, got {seq!r}", lineno, "seq")
        if last_seq is not None and seq <= last_seq:
            raise TraceError(f"seq must be strictly increasing ({seq} after {last_seq})", lineno, "seq")
        last_seq = seq
        calls.append(_parse_record(rec, lineno))
    return make_trace(calls, source=source)


def load_trace(path: str | Path) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return read_trace(fh, source=str(path))


def call_record(call: ApiCall) -> dict:
    rec = {
        "seq": call.seq,
        "name": call.name,
        "class": call.base_class.value,
    }
    if call.sr_class is not None:
        rec["sr_class"] = call.sr_class.value
    rec.update(
        payload_req=call.payload_req,
        payload_resp=call.payload_resp,
        gpu_exec_us=call.gpu_exec_time,
        local_exec_us=call.local_exec_time,
        cpu_gap_us=call.cpu_gap_before,
    )
    return rec


def dumps_trace(trace: Trace, header: str | None = None) -> str:
    lines = []
    if header:
        lines.append("# " + header)
    lines.extend(json.dumps(call_record(c), separators=(",", ":")) for c in trace.calls)
    return "".join(line + "\n" for line in lines)


def save_trace(trace: Trace, path: str | Path, header: str | None = None) -> None:
    Path(path).write_text(dumps_trace(trace, header), encoding="utf-8")


# -- SR reclassification ---------------------------------------------------


def apply_sr(trace: Trace, enabled: bool, locality: bool = True) -> Trace:
    """Resolve every call's effective class.

    With ``enabled`` the SR conversion of each flagged call is taken; without
    ``locality`` conversions to Local are skipped (the call stays in its base
    class) since answering queries locally needs the shadow state SR keeps.
    """
    out = []
    for c in trace.calls:
        eff = c.base_class
        if enabled and c.sr_class is not None and (locality or c.sr_class is not ApiClass.LOCAL):
            eff = c.sr_class
        out.append(c if c.effective is eff else _with_effective(c, eff))
    return Trace(tuple(out), trace.meta)


def _with_effective(call: ApiCall, eff: ApiClass) -> ApiCall:
    # fields are already validated; skip __post_init__ on this hot path
    out = object.__new__(ApiCall)
    out.__dict__.update(call.__dict__, effective=eff)
    return out


def annotate_sr(trace: Trace, table: Mapping[str, tuple[ApiClass, ApiClass | None]] = SR_TABLE) -> Trace:
    """Fill missing SR conversions from a name lookup table.

    Calls that already carry a conversion, calls whose name is not in the
    table and calls whose base class disagrees with the table are left alone.
    """
    out = []
    for c in trace.calls:
        entry = table.get(c.name)
        if c.sr_class is None and entry is not None and entry[0] is c.base_class and entry[1] is not None:
            c = replace(c, sr_class=entry[1])
        out.append(c)
    return Trace(tuple(out), trace.meta)


# -- summaries --------------------------------------------------------------


@dataclass(frozen=True)
class ClassStats:
    count: int = 0
    payload_req: int = 0
    payload_resp: int = 0
    gpu_exec_us: float = 0.0
    local_exec_us: float = 0.0

    def __add__(self, other: "ClassStats") -> "ClassStats":
        return ClassStats(
            self.count + other.count,
            self.payload_req + other.payload_req,
            self.payload_resp + other.payload_resp,
            self.gpu_exec_us + other.gpu_exec_us,
            self.local_exec_us + other.local_exec_us,
        )


@dataclass(frozen=True)
class TraceSummary:
    per_class: Mapping[ApiClass, ClassStats]

    @property
    def total(self) -> ClassStats:
        acc = ClassStats()
        for stats in self.per_class.values():
            acc = acc + stats
        return acc

    @property
    def total_count(self) -> int:
        return self.total.count

    def api_time_us(self, cls: ApiClass) -> float:
        """Cumulative caller-visible API time; local calls run against the shadow."""
        s = self.per_class[cls]
        return s.local_exec_us if cls is ApiClass.LOCAL else s.gpu_exec_us

    def total_api_time_us(self) -> float:
        return sum(self.api_time_us(k) for k in ApiClass)

    def as_dict(self) -> dict:
        rows = {}
        for k in ApiClass:
            s = self.per_class[k]
            rows[k.value] = {
                "count": s.count,
                "payload_req": s.payload_req,
                "payload_resp": s.payload_resp,
                "gpu_exec_us": s.gpu_exec_us,
                "local_exec_us": s.local_exec_us,
                "api_time_us": self.api_time_us(k),
            }
        t = self.total
        rows["total"] = {
            "count": t.count,
            "payload_req": t.payload_req,
            "payload_resp": t.payload_resp,
            "gpu_exec_us": t.gpu_exec_us,
            "local_exec_us": t.local_exec_us,
            "api_time_us": self.total_api_time_us(),
        }
        return rows


def summarize(trace: Trace) -> TraceSummary:
    cols = trace.columns
    per_class = {}
    for code, k in enumerate((ApiClass.ASYNC, ApiClass.SYNC, ApiClass.LOCAL)):
        mask = cols["cls"] == code
        per_class[k] = ClassStats(
            count=int(mask.sum()),
            payload_req=int(cols["payload_req"][mask].sum()),
            payload_resp=int(cols["payload_resp"][mask].sum()),
            gpu_exec_us=float(math.fsum(cols["gpu"][mask])),
            local_exec_us=float(math.fsum(cols["local"][mask])),
        )
    return TraceSummary(per_class)
