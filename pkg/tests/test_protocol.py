import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apiremote.cost_model import NetworkConfig
from apiremote.device import DeviceTimeline
from apiremote.protocol import (
    Message,
    MessageKind,
    ProtocolFault,
    Proxy,
    Session,
    SessionClosed,
    decode,
    encode,
    read_message_log,
    wire_size,
    write_message_log,
)
from apiremote.trace import ApiCall, ApiClass, apply_sr, make_trace
from apiremote.transport import IdealChannel

A, S, L = ApiClass.ASYNC, ApiClass.SYNC, ApiClass.LOCAL

messages = st.builds(
    Message,
    kind=st.sampled_from(MessageKind),
    seq=st.integers(0, 2**63),
    api_name=st.text(max_size=30),
    api_class=st.sampled_from(ApiClass),
    shadow_refs=st.lists(st.integers(0, 2**64 - 1), max_size=4).map(tuple),
    new_shadow_id=st.none() | st.integers(0, 2**64 - 1),
    payload_len=st.integers(0, 2048),
    issue_timestamp=st.floats(allow_nan=False),
)


class TestWire:
    @given(messages)
    def test_roundtrip(self, msg):
        data = encode(msg)
        assert len(data) == wire_size(msg)
        assert decode(data) == msg

    @given(st.lists(messages, max_size=10))
    def test_log_roundtrip_elides_payload(self, msgs):
        buf = io.BytesIO()
        write_message_log(msgs, buf)
        buf.seek(0)
        assert list(read_message_log(buf)) == msgs

    def test_truncated(self):
        data = encode(Message(MessageKind.REQUEST, 1, "Malloc", S, payload_len=10))
        with pytest.raises(ProtocolFault):
            decode(data[:-3])
        with pytest.raises(ProtocolFault):
            decode(data[:5])

    def test_payload_length_checked(self):
        with pytest.raises(ValueError):
            encode(Message(MessageKind.REQUEST, 1, "x", A, payload_len=3), payload=b"ab")


def resolved(*calls):
    return apply_sr(make_trace(calls), True).calls


class TestProxy:
    def test_unmapped_ref_faults(self):
        proxy = Proxy(DeviceTimeline(), IdealChannel())
        (c,) = resolved(ApiCall(0, "LaunchKernel", A))
        msg = Message(MessageKind.REQUEST, 0, c.name, A, shadow_refs=(42,), call=c)
        with pytest.raises(ProtocolFault, match="42"):
            proxy.handle(msg, 0.0)

    def test_binds_new_shadow_before_use(self):
        proxy = Proxy(DeviceTimeline(), IdealChannel())
        m, k = resolved(ApiCall(0, "Malloc", S, A), ApiCall(0, "LaunchKernel", A))
        proxy.handle(Message(MessageKind.REQUEST, 0, m.name, A, new_shadow_id=1, call=m), 0.0)
        proxy.handle(Message(MessageKind.REQUEST, 1, k.name, A, shadow_refs=(1,), call=k), 0.0)
        assert len(proxy.idmap) == 1 and len(proxy.device.resources) == 1

    def test_rejects_response(self):
        proxy = Proxy(DeviceTimeline(), IdealChannel())
        with pytest.raises(ProtocolFault):
            proxy.handle(Message(MessageKind.RESPONSE, 0, "x", S), 0.0)

    def test_sync_gets_response(self):
        down = IdealChannel()
        proxy = Proxy(DeviceTimeline(), down)
        (c,) = resolved(ApiCall(0, "MemcpyD2H", S, payload_resp=8, gpu_exec_time=2.0))
        out = proxy.handle(Message(MessageKind.REQUEST, 0, c.name, S, call=c), 1.0)
        assert out[0].seq == 0 and out[0].payload_len == 8 and out[0].issue_timestamp == 3.0


class TestSession:
    net = NetworkConfig(rtt=10.0, bandwidth=math.inf, start_overhead=1.0)

    def test_async_returns_after_start(self):
        s = Session(self.net)
        (c,) = resolved(ApiCall(0, "LaunchKernel", A, gpu_exec_time=3.0))
        out = s.client_call(c, 5.0)
        assert out.return_time == 6.0 and out.dispatched

    def test_sync_round_trip(self):
        s = Session(self.net)
        (c,) = resolved(ApiCall(0, "MemcpyD2H", S, gpu_exec_time=3.0))
        assert s.client_call(c, 0.0).return_time == 1.0 + 5.0 + 3.0 + 5.0

    def test_local_sends_nothing(self):
        s = Session(self.net)
        (c,) = resolved(ApiCall(0, "GetDevice", S, L, gpu_exec_time=3.0, local_exec_time=0.25))
        out = s.client_call(c, 0.0)
        assert out.return_time == 0.25 and not out.dispatched and s.message_count == 0

    def test_batch_buffers_until_full(self):
        s = Session(self.net, batch_size=2)
        a, b, c = resolved(*(ApiCall(0, "LaunchKernel", A, gpu_exec_time=1.0) for _ in range(3)))
        assert s.client_call(a, 0.0).return_time == 0.0
        assert s.client_call(b, 0.0).return_time == 1.0
        assert s.transport_sends == 1 and s.message_count == 2
        s.client_call(c, 2.0)
        s.close(2.0)
        assert s.transport_sends == 2 and s.device.log[-1].seq == 2

    def test_sync_flushes_batch(self):
        s = Session(self.net, batch_size=8)
        a, b = resolved(ApiCall(0, "LaunchKernel", A, gpu_exec_time=1.0), ApiCall(0, "MemcpyD2H", S))
        s.client_call(a, 0.0)
        s.client_call(b, 0.0)
        assert s.transport_sends == 1 and [r.seq for r in s.device.log] == [0, 1]

    def test_closed(self):
        s = Session(self.net)
        s.close(0.0)
        (c,) = resolved(ApiCall(0, "LaunchKernel", A))
        with pytest.raises(SessionClosed):
            s.client_call(c, 0.0)

    def test_shadow_ids_minted_for_creators(self):
        s = Session(self.net, seed=3)
        calls = resolved(ApiCall(0, "Malloc", S, A), ApiCall(0, "CreateTensorDescriptor", S, A), ApiCall(0, "LaunchKernel", A))
        t = 0.0
        for c in calls:
            t = s.client_call(c, t).return_time
        s.close(t)
        assert len(s.shadows) == 2 and len(s.proxy.idmap) == 2
        assert s.sent_requests[0].new_shadow_id == 1

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            Session(self.net, batch_size=0)
