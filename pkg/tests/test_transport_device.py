import io
import math
from dataclasses import dataclass

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apiremote.device import DeviceError, DeviceTimeline, write_exec_log
from apiremote.trace import ApiCall, ApiClass
from apiremote.transport import EmulatedChannel, IdealChannel, write_transport_log


@dataclass(frozen=True)
class Msg:
    seq: int
    payload_len: int


sends = st.lists(
    st.tuples(st.floats(0.0, 100.0), st.integers(0, 10**6)),
    max_size=30,
)


def push_all(chan, items):
    t = 0.0
    arrivals = []
    for i, (dt, size) in enumerate(items):
        t += dt
        arrivals.append(chan.send(Msg(i, size), t))
    return arrivals


class TestEmulated:
    def test_example(self):
        ch = EmulatedChannel(rtt=10.0, bandwidth=100.0)
        assert ch.send(Msg(0, 1000), 0.0) == 15.0  # 10 us serialize + 5 us propagate
        assert ch.send(Msg(1, 100), 2.0) == 16.0  # waits for the link until 10

    def test_zero_payload_does_not_occupy_link(self):
        ch = EmulatedChannel(rtt=4.0, bandwidth=1.0)
        ch.send(Msg(0, 0), 0.0)
        assert ch.link_busy_until == 0.0

    def test_send_must_not_go_back_in_time(self):
        ch = EmulatedChannel(rtt=1.0, bandwidth=1.0)
        ch.send(Msg(0, 1), 5.0)
        with pytest.raises(ValueError):
            ch.send(Msg(1, 1), 4.0)

    @given(sends, st.floats(0.0, 50.0), st.floats(0.1, 1e4))
    def test_fifo_and_conservation(self, items, rtt, bw):
        ch = EmulatedChannel(rtt=rtt, bandwidth=bw)
        arrivals = push_all(ch, items)
        assert all(b >= a for a, b in zip(arrivals, arrivals[1:]))
        got = ch.deliver(math.inf)
        assert [m.seq for m, _ in got] == list(range(len(items)))
        assert ch.sent_count == ch.delivered_count == len(items) and ch.pending() == 0

    @given(sends, st.floats(0.0, 50.0), st.floats(0.1, 1e4), st.floats(0.0, 50.0))
    def test_more_rtt_never_earlier(self, items, rtt, bw, extra):
        a = push_all(EmulatedChannel(rtt=rtt, bandwidth=bw), items)
        b = push_all(EmulatedChannel(rtt=rtt + extra, bandwidth=bw), items)
        assert all(y >= x for x, y in zip(a, b))

    @given(sends)
    def test_ideal_equals_zero_rtt_infinite_bandwidth(self, items):
        assert push_all(IdealChannel(), items) == push_all(EmulatedChannel(0.0, math.inf), items)

    def test_deliver_until(self):
        ch = EmulatedChannel(rtt=2.0, bandwidth=math.inf)
        ch.send(Msg(0, 5), 0.0)
        ch.send(Msg(1, 5), 3.0)
        assert [m.seq for m, _ in ch.deliver(1.5)] == [0]
        assert ch.pending() == 1

    def test_log(self):
        ch = EmulatedChannel(rtt=2.0, bandwidth=1.0)
        ch.send(Msg(7, 3), 0.0)
        buf = io.StringIO()
        write_transport_log(ch.events, buf)
        assert buf.getvalue().splitlines() == ["seq,send_time,serialize_start,arrival_time", "7,0.0,0.0,4.0"]


def call(seq, exec_us):
    return ApiCall(seq, "LaunchKernel", ApiClass.ASYNC, gpu_exec_time=exec_us)


class TestDevice:
    def test_serial(self):
        d = DeviceTimeline()
        assert d.submit(call(0, 5.0), 0.0) == 5.0
        assert d.submit(call(1, 5.0), 1.0) == 10.0
        assert d.submit(call(2, 1.0), 20.0) == 21.0
        assert d.busy_time == 11.0

    def test_out_of_order_rejected(self):
        d = DeviceTimeline()
        d.submit(call(0, 1.0), 5.0)
        with pytest.raises(DeviceError):
            d.submit(call(1, 1.0), 4.0)

    def test_resources(self):
        d = DeviceTimeline()
        d.create_resource("Malloc", 1)
        with pytest.raises(DeviceError):
            d.create_resource("Malloc", 1)
        d.destroy_resource(1)
        with pytest.raises(DeviceError):
            d.destroy_resource(1)

    @given(st.lists(st.tuples(st.floats(0.0, 100.0), st.floats(0.0, 100.0)), max_size=40))
    def test_no_overlap_and_busy_conservation(self, items):
        d = DeviceTimeline()
        t = 0.0
        for i, (dt, ex) in enumerate(items):
            t += dt
            d.submit(call(i, ex), t)
        log = d.log
        assert all(b.start >= a.finish for a, b in zip(log, log[1:]))
        assert all(r.start >= r.submit for r in log)
        assert d.busy_time == pytest.approx(sum(ex for _, ex in items))

    def test_exec_log(self):
        d = DeviceTimeline()
        d.submit(call(0, 2.0), 1.0)
        buf = io.StringIO()
        write_exec_log(d.log, buf, {0: 0.5})
        assert buf.getvalue().splitlines()[1] == "LaunchKernel,1.0,1.0,3.0,0.5"
