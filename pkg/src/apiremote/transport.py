"""One-direction FIFO message channels.

``IdealChannel`` delivers instantly (shared-memory stand-in).
``EmulatedChannel`` assigns every message an expected arrival time:
the message waits for the link to finish serializing earlier traffic, is
serialized at the configured bandwidth, then propagates for half an RTT.
Arrivals are kept in a priority queue keyed by (arrival time, send order).
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import IO, Any, Protocol


class Sized(Protocol):
    seq: int
    payload_len: int


@dataclass(frozen=True)
class TransportEvent:
    seq: int
    send_time: float
    serialize_start: float
    arrival_time: float


@dataclass
class IdealChannel:
    events: list[TransportEvent] = field(default_factory=list, kw_only=True)
    _queue: list[tuple[float, int, Any]] = field(default_factory=list, kw_only=True, repr=False)
    _sent: int = field(default=0, kw_only=True)
    _delivered: int = field(default=0, kw_only=True)
    _last_send: float = field(default=float("-inf"), kw_only=True, repr=False)

    def _arrival(self, payload_len: int, now: float) -> tuple[float, float]:
        return now, now

    def send(self, msg: Sized, now: float) -> float:
        if now < self._last_send:
            raise ValueError(f"send at {now} precedes previous send at {self._last_send}")
        self._last_send = now
        ser_start, arrival = self._arrival(msg.payload_len, now)
        heapq.heappush(self._queue, (arrival, self._sent, msg))
        self.events.append(TransportEvent(msg.seq, now, ser_start, arrival))
        self._sent += 1
        return arrival

    def deliver(self, until: float) -> list[tuple[Any, float]]:
        """Pop every message with arrival <= ``until``; ties keep send order."""
        out = []
        while self._queue and self._queue[0][0] <= until:
            arrival, _, msg = heapq.heappop(self._queue)
            out.append((msg, arrival))
        self._delivered += len(out)
        return out

    def pending(self) -> int:
        return len(self._queue)

    @property
    def sent_count(self) -> int:
        return self._sent

    @property
    def delivered_count(self) -> int:
        return self._delivered

    def fifo_ok(self) -> bool:
        arrivals = [e.arrival_time for e in self.events]
        return all(b >= a for a, b in zip(arrivals, arrivals[1:]))


@dataclass
class EmulatedChannel(IdealChannel):
    rtt: float = 0.0
    bandwidth: float = math.inf  # bytes/µs
    link_busy_until: float = 0.0

    def _arrival(self, payload_len: int, now: float) -> tuple[float, float]:
        ser_start = max(now, self.link_busy_until)
        if payload_len > 0:
            self.link_busy_until = ser_start + (payload_len / self.bandwidth if math.isfinite(self.bandwidth) else 0.0)
            done = self.link_busy_until
        else:
            done = ser_start
        return ser_start, done + self.rtt / 2


def make_channel(net=None, ideal: bool = False) -> IdealChannel:
    if ideal or net is None:
        return IdealChannel()
    return EmulatedChannel(rtt=net.rtt, bandwidth=net.bandwidth)


def write_transport_log(events, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["seq", "send_time", "serialize_start", "arrival_time"])
    for e in events:
        w.writerow([e.seq, repr(e.send_time), repr(e.serialize_start), repr(e.arrival_time)])
