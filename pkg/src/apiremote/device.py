"""Mock GPU: one serial execution stream."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

from .trace import ApiCall


class DeviceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExecRecord:
    seq: int
    name: str
    submit: float
    start: float
    finish: float


@dataclass
class DeviceTimeline:
    busy_until: float = 0.0
    log: list[ExecRecord] = field(default_factory=list)
    resources: dict[int, str] = field(default_factory=dict)
    _last_submit: float = float("-inf")

    def submit(self, api: ApiCall, submit_time: float) -> float:
        if submit_time < self._last_submit:
            raise DeviceError(
                f"out-of-order submission: {api.name} (seq {api.seq}) at {submit_time} after {self._last_submit}"
            )
        self._last_submit = submit_time
        start = max(submit_time, self.busy_until)
        finish = start + api.gpu_exec_time
        self.busy_until = finish
        self.log.append(ExecRecord(api.seq, api.name, submit_time, start, finish))
        return finish

    def create_resource(self, kind: str, real_id: int) -> None:
        if real_id in self.resources:
            raise DeviceError(f"resource {real_id} already exists")
        self.resources[real_id] = kind

    def destroy_resource(self, real_id: int) -> None:
        if real_id not in self.resources:
            raise DeviceError(f"no resource {real_id}")
        del self.resources[real_id]

    @property
    def busy_time(self) -> float:
        return sum(r.finish - r.start for r in self.log)

    def snapshot(self) -> tuple[ExecRecord, ...]:
        return tuple(self.log)


def write_exec_log(log: Sequence[ExecRecord], fh: IO[str], local_submits: Mapping[int, float] | None = None) -> None:
    """CSV columns: name, submit, start, finish, delay_vs_local (blank when unknown)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["name", "submit", "start", "finish", "delay_vs_local"])
    for r in log:
        delay = ""
        if local_submits is not None and r.seq in local_submits:
            delay = repr(r.submit - local_submits[r.seq])
        w.writerow([r.name, repr(r.submit), repr(r.start), repr(r.finish), delay])
