"""Client stub and proxy for remoting GPU API calls.

Async calls are sent as outstanding requests the moment they are issued;
the per-connection FIFO channel is what keeps them ordered. Resource-creating
calls mint a shadow id on the client, ship it in the creating request, and
the proxy binds it to the real id before anything that references it runs.
Read-only queries against shadow state never leave the client.
"""

from __future__ import annotations

import enum
import io
import random
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterator, Sequence

from .cost_model import NetworkConfig
from .device import DeviceTimeline
from .trace import ApiCall, ApiClass
from .transport import IdealChannel, make_channel


class ProtocolFault(RuntimeError):
    """Unresolvable shadow reference or another broken protocol law."""


class SessionClosed(RuntimeError):
    pass


class MessageKind(enum.IntEnum):
    REQUEST = 0
    RESPONSE = 1


_CLASS_CODE = {ApiClass.ASYNC: 0, ApiClass.SYNC: 1, ApiClass.LOCAL: 2}
_CODE_CLASS = {v: k for k, v in _CLASS_CODE.items()}


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    seq: int
    api_name: str
    api_class: ApiClass
    shadow_refs: tuple[int, ...] = ()
    new_shadow_id: int | None = None
    payload_len: int = 0
    issue_timestamp: float = 0.0
    # simulation-only: the call the proxy executes; not on the wire
    call: ApiCall | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Batch:
    """Several requests carried by one transport message."""

    seq: int
    messages: tuple[Message, ...]

    @property
    def payload_len(self) -> int:
        return sum(m.payload_len for m in self.messages)


# -- wire format ------------------------------------------------------------
# header: kind u8 | seq u64 | name_len u16 | n_refs u16 | payload_len u64 | timestamp f64
# then name (utf-8), 8 bytes per shadow ref, then payload_len opaque bytes.
# kind byte: bit0 response, bits1-2 class, bit3 first ref is the new shadow
# id, bit4 payload bytes elided (logs only).

HEADER = struct.Struct("<BQHHQd")
_REF = struct.Struct("<Q")
_F_RESPONSE = 0x01
_F_NEW_SHADOW = 0x08
_F_ELIDED = 0x10


def encode(msg: Message, payload: bytes | None = None, elide_payload: bool = False) -> bytes:
    refs = msg.shadow_refs
    flags = int(msg.kind) & _F_RESPONSE
    flags |= _CLASS_CODE[msg.api_class] << 1
    if msg.new_shadow_id is not None:
        refs = (msg.new_shadow_id,) + refs
        flags |= _F_NEW_SHADOW
    if elide_payload:
        flags |= _F_ELIDED
        body = b""
    else:
        body = payload if payload is not None else bytes(msg.payload_len)
        if len(body) != msg.payload_len:
            raise ValueError(f"payload has {len(body)} bytes, header says {msg.payload_len}")
    name = msg.api_name.encode("utf-8")
    return b"".join(
        [
            HEADER.pack(flags, msg.seq, len(name), len(refs), msg.payload_len, msg.issue_timestamp),
            name,
            b"".join(_REF.pack(r) for r in refs),
            body,
        ]
    )


def decode_from(buf: IO[bytes]) -> tuple[Message, bytes] | None:
    head = buf.read(HEADER.size)
    if not head:
        return None
    if len(head) != HEADER.size:
        raise ProtocolFault("truncated message header")
    flags, seq, name_len, n_refs, payload_len, ts = HEADER.unpack(head)
    name = buf.read(name_len).decode("utf-8")
    refs = tuple(_REF.unpack(buf.read(_REF.size))[0] for _ in range(n_refs))
    new_id = None
    if flags & _F_NEW_SHADOW:
        new_id, refs = refs[0], refs[1:]
    payload = b"" if flags & _F_ELIDED else buf.read(payload_len)
    if not flags & _F_ELIDED and len(payload) != payload_len:
        raise ProtocolFault("truncated payload")
    msg = Message(
        kind=MessageKind(flags & _F_RESPONSE),
        seq=seq,
        api_name=name,
        api_class=_CODE_CLASS[(flags >> 1) & 0x3],
        shadow_refs=refs,
        new_shadow_id=new_id,
        payload_len=payload_len,
        issue_timestamp=ts,
    )
    return msg, payload


def decode(data: bytes) -> Message:
    out = decode_from(io.BytesIO(data))
    if out is None:
        raise ProtocolFault("empty buffer")
    return out[0]


def wire_size(msg: Message) -> int:
    n_refs = len(msg.shadow_refs) + (msg.new_shadow_id is not None)
    return HEADER.size + len(msg.api_name.encode("utf-8")) + _REF.size * n_refs + msg.payload_len


def write_message_log(messages: Sequence[Message], fh: IO[bytes]) -> None:
    for m in messages:
        fh.write(encode(m, elide_payload=True))


def read_message_log(fh: IO[bytes]) -> Iterator[Message]:
    while True:
        out = decode_from(fh)
        if out is None:
            return
        yield out[0]


# -- client and proxy state -------------------------------------------------


class ShadowTable:
    """Client-side replicas of GPU resources and cached read-only state."""

    def __init__(self, device_ordinal: int = 0):
        self._next = 1
        self.entries: dict[int, tuple[str, dict]] = {}
        self.current_device = device_ordinal

    def allocate(self, kind: str, **params) -> int:
        sid = self._next
        self._next += 1
        self.entries[sid] = (kind, params)
        return sid

    def __contains__(self, sid: int) -> bool:
        return sid in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[int]:
        return list(self.entries)

    def answer(self, name: str):
        if name == "GetDevice":
            return self.current_device
        return None


class IdMap:
    def __init__(self):
        self._map: dict[int, int] = {}

    def bind(self, shadow_id: int, real_id: int) -> None:
        if shadow_id in self._map:
            raise ProtocolFault(f"shadow id {shadow_id} bound twice")
        self._map[shadow_id] = real_id

    def resolve(self, shadow_id: int) -> int:
        try:
            return self._map[shadow_id]
        except KeyError:
            raise ProtocolFault(f"unresolvable shadow reference {shadow_id}") from None

    def __len__(self) -> int:
        return len(self._map)


class OutstandingQueue:
    """Sent-but-undelivered async requests, in send order."""

    def __init__(self):
        self._q: deque[tuple[int, float, float]] = deque()
        self.max_depth = 0

    def push(self, seq: int, send_time: float, arrival: float) -> None:
        self._q.append((seq, send_time, arrival))
        self.max_depth = max(self.max_depth, len(self._q))

    def drain(self, now: float) -> None:
        while self._q and self._q[0][2] <= now:
            self._q.popleft()

    def __len__(self) -> int:
        return len(self._q)

    def latest_arrival(self) -> float:
        return self._q[-1][2] if self._q else float("-inf")


class Proxy:
    """Receives requests in arrival order, remaps shadow ids, drives the device."""

    def __init__(self, device: DeviceTimeline, downlink: IdealChannel, calls: dict[int, ApiCall] | None = None):
        self.device = device
        self.downlink = downlink
        self.idmap = IdMap()
        self.calls = calls or {}
        self._next_real = 0x1000
        self.executed: list[int] = []
        self.responses: list[Message] = []

    def _call_for(self, msg: Message) -> ApiCall:
        if msg.call is not None:
            return msg.call
        try:
            return self.calls[msg.seq]
        except KeyError:
            raise ProtocolFault(f"no call body for request seq {msg.seq}") from None

    def handle(self, msg: Message | Batch, arrival: float) -> list[Message]:
        items = msg.messages if isinstance(msg, Batch) else (msg,)
        out = []
        for m in items:
            resp = self._handle_one(m, arrival)
            if resp is not None:
                out.append(resp)
        return out

    def _handle_one(self, msg: Message, arrival: float) -> Message | None:
        if msg.kind is not MessageKind.REQUEST:
            raise ProtocolFault(f"proxy got a {msg.kind.name} message")
        call = self._call_for(msg)
        for ref in msg.shadow_refs:
            self.idmap.resolve(ref)
        if msg.new_shadow_id is not None:
            real = self._next_real
            self._next_real += 1
            self.device.create_resource(msg.api_name, real)
            self.idmap.bind(msg.new_shadow_id, real)
        finish = self.device.submit(call, arrival)
        self.executed.append(msg.seq)
        if msg.api_class is not ApiClass.SYNC:
            return None
        resp = Message(
            kind=MessageKind.RESPONSE,
            seq=msg.seq,
            api_name=msg.api_name,
            api_class=msg.api_class,
            payload_len=call.payload_resp,
            issue_timestamp=finish,
        )
        self.downlink.send(resp, finish)
        self.responses.append(resp)
        return resp


@dataclass(frozen=True)
class CallOutcome:
    return_time: float
    dispatched: bool


@dataclass
class SessionChecks:
    response_seq_mismatch: int = 0
    sync_before_drain: int = 0
    async_waited: int = 0


class Session:
    """One client connection to one proxy.

    ``batch_size=None`` dispatches with outstanding requests; an integer
    buffers async calls and sends them together once ``batch_size`` are
    pending or a sync call forces a flush (the sync call rides in the same
    message).
    """

    def __init__(
        self,
        net: NetworkConfig,
        ideal: bool = False,
        batch_size: int | None = None,
        seed: int = 0,
        max_refs: int = 2,
    ):
        if batch_size is not None and batch_size < 1:
            raise ValueError("batch size must be >= 1")
        self.net = net
        self.batch_size = batch_size
        self.uplink = make_channel(net, ideal)
        self.downlink = make_channel(net, ideal)
        self.device = DeviceTimeline()
        self.proxy = Proxy(self.device, self.downlink)
        self.shadows = ShadowTable()
        self.outstanding = OutstandingQueue()
        self.checks = SessionChecks()
        self.sent_requests: list[Message] = []
        self.local_answers = 0
        self.closed = False
        self._rng = random.Random(seed)
        self._max_refs = max_refs
        self._pending: list[Message] = []

    # -- client side ----------------------------------------------------------

    def _refs(self, call: ApiCall) -> tuple[int, ...]:
        ids = self.shadows.ids()
        if not ids or self._max_refs == 0:
            return ()
        k = self._rng.randint(0, min(self._max_refs, len(ids)))
        return tuple(sorted(self._rng.sample(ids, k)))

    def _request(self, call: ApiCall, now: float) -> Message:
        new_id = None
        refs = self._refs(call)
        if call.creates_resource:
            new_id = self.shadows.allocate(call.name)
        return Message(
            kind=MessageKind.REQUEST,
            seq=call.seq,
            api_name=call.name,
            api_class=call.cls,
            shadow_refs=refs,
            new_shadow_id=new_id,
            payload_len=call.payload_req,
            issue_timestamp=now,
            call=call,
        )

    def _send(self, payload: Message | Batch, send_time: float) -> float:
        self.outstanding.drain(send_time)
        arrival = self.uplink.send(payload, send_time)
        msgs = payload.messages if isinstance(payload, Batch) else (payload,)
        for m in msgs:
            self.sent_requests.append(m)
            if m.api_class is ApiClass.ASYNC:
                self.outstanding.push(m.seq, send_time, arrival)
        return arrival

    def _pump(self, until: float) -> None:
        for msg, arrival in self.uplink.deliver(until):
            self.proxy.handle(msg, arrival)

    def _await_response(self, seq: int, arrival: float) -> float:
        self._pump(arrival)
        if self.outstanding.latest_arrival() > arrival:
            self.checks.sync_before_drain += 1
        self.outstanding.drain(arrival)
        got = self.downlink.deliver(float("inf"))
        if len(got) != 1 or got[0][0].seq != seq:
            self.checks.response_seq_mismatch += 1
            if not got:
                raise ProtocolFault(f"no response for sync request {seq}")
        return got[-1][1]

    def client_call(self, call: ApiCall, now: float) -> CallOutcome:
        if self.closed:
            raise SessionClosed("session is closed")
        cls = call.cls
        if cls is ApiClass.LOCAL:
            self.shadows.answer(call.name)
            self.local_answers += 1
            return CallOutcome(now + call.local_exec_time, False)

        msg = self._request(call, now)
        if self.batch_size is None:
            send_time = now + self.net.start_for(call.name)
            arrival = self._send(msg, send_time)
            if cls is ApiClass.ASYNC:
                return CallOutcome(send_time, True)
            return CallOutcome(self._await_response(msg.seq, arrival), True)

        self._pending.append(msg)
        if cls is ApiClass.ASYNC and len(self._pending) < self.batch_size:
            return CallOutcome(now, True)
        send_time, arrival = self._flush(now)
        if cls is ApiClass.ASYNC:
            return CallOutcome(send_time, True)
        return CallOutcome(self._await_response(msg.seq, arrival), True)

    def _flush(self, now: float) -> tuple[float, float]:
        batch = tuple(self._pending)
        self._pending.clear()
        send_time = now + max(self.net.start_for(m.api_name) for m in batch)
        payload = batch[0] if len(batch) == 1 else Batch(batch[0].seq, batch)
        return send_time, self._send(payload, send_time)

    def close(self, now: float) -> float:
        """Flush buffered calls, let the proxy drain, and close. Returns the
        time the last message was handed to the transport."""
        t = now
        if self._pending:
            t, _ = self._flush(now)
        self._pump(float("inf"))
        self.closed = True
        return t

    # -- accounting -------------------------------------------------------------

    @property
    def message_count(self) -> int:
        """Requests dispatched (a batch of k counts k)."""
        return len(self.sent_requests)

    @property
    def transport_sends(self) -> int:
        return self.uplink.sent_count
