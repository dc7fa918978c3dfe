"""Worked numeric examples for each module."""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from apiremote.cost_model import NetworkConfig, accel_async, accel_local, cost_async, cost_sync, degradation, total_cost
from apiremote.device import DeviceTimeline
from apiremote.profiles import V100_GBPS, V100_RTT_US, gpt2_v100, resnet_v100
from apiremote.protocol import Session
from apiremote.replay import ReplayOptions, replay_remote
from apiremote.solver import Budget, Grid, derive_requirements, rtt_slope, sweep
from apiremote.synth import SynthGroup, SynthProfile, synth_trace, training_trace
from apiremote.transport import EmulatedChannel, IdealChannel
from apiremote.trace import ApiCall, ApiClass, apply_sr, dumps_trace, make_trace, summarize

A, S, L = ApiClass.ASYNC, ApiClass.SYNC, ApiClass.LOCAL


@pytest.fixture(scope="module")
def resnet():
    prof = resnet_v100()
    trace = prof.trace()
    return prof, trace, prof.start_overhead(trace)


# -- per-call costs -------------------------------------------------------------


def test_async_cost_examples():
    n = NetworkConfig(10.0, 1000.0, 1.0)
    assert cost_async(ApiCall(0, "LaunchKernel", A), n) == 6.0
    assert cost_async(ApiCall(0, "MemcpyH2D", A, payload_req=10_000), n) == 16.0
    assert cost_async(ApiCall(0, "MemcpyH2D", A, payload_req=10_000), NetworkConfig(0.0, math.inf, 0.0)) == 0.0


def test_sync_cost_examples():
    n = NetworkConfig(10.0, 1000.0, 1.0)
    assert cost_sync(ApiCall(0, "StreamSynchronize", S), n) == 11.0
    big = ApiCall(0, "MemcpyD2H", S, payload_req=500_000, payload_resp=500_000)
    assert cost_sync(big, n) == 1011.0
    assert cost_sync(big, n.with_(bandwidth=2000.0)) < 1011.0


def test_acceleration_examples():
    assert accel_async(ApiCall(0, "LaunchKernel", A)) == 0.0
    assert accel_async(ApiCall(0, "LaunchKernel", A, gpu_exec_time=250.0)) == 250.0
    same, faster = apply_sr(
        make_trace(
            [
                ApiCall(0, "GetDevice", S, L, gpu_exec_time=5.0, local_exec_time=5.0),
                ApiCall(0, "GetDevice", S, L, gpu_exec_time=5.0, local_exec_time=1.0),
            ]
        ),
        True,
    ).calls
    assert accel_local(same) == 0.0 and accel_local(faster) == 4.0


@pytest.mark.parametrize("make", [resnet_v100, gpt2_v100])
def test_locality_cuts_getdevice_time_by_at_least_95_percent(make):
    s = summarize(apply_sr(make().trace(), True)).per_class[L]
    assert 1 - s.local_exec_us / s.gpu_exec_us >= 0.95


def test_resnet_sr_async_time(resnet):
    _, trace, _ = resnet
    assert summarize(apply_sr(trace, True)).api_time_us(A) / 1000 == pytest.approx(0.58, rel=0.01)


def test_total_cost_examples():
    n = NetworkConfig(10.0, 1000.0, 1.0)
    assert total_cost(make_trace([]), n).total_cost == 0.0
    assert total_cost(make_trace([ApiCall(0, "StreamSynchronize", S)]), n).total_cost == 11.0


def test_degradation_examples():
    one = make_trace([ApiCall(0, "StreamSynchronize", S)])
    assert degradation(one, NetworkConfig(0.0, math.inf, 215.0), 4300.0) == pytest.approx(0.05)
    assert degradation(make_trace([ApiCall(0, "LaunchKernel", A, gpu_exec_time=50.0)]), NetworkConfig(0, math.inf), 100.0) < 0
    assert (3700.0 - 4300.0) / 4300.0 == pytest.approx(-0.14, abs=0.005)


# -- solver -----------------------------------------------------------------------


def test_resnet_requirement_is_5us_200gbps(resnet):
    prof, trace, start = resnet
    resolved = apply_sr(trace, True)
    f = derive_requirements(resolved, Budget(0.05, prof.baseline_us), Grid.default(), start)
    assert f.satisfies(5.0, 200.0)
    assert not f.satisfies(10.0, 200.0)


def test_generous_budget_nonempty():
    t = make_trace([ApiCall(0, "MemcpyD2H", S, payload_resp=10, gpu_exec_time=5.0)])
    f = derive_requirements(t, Budget(1.0, 100.0), Grid.from_gbps([0.0, 50.0], [1.0, 400.0]))
    assert f.pareto


def test_slope_examples():
    calls = [ApiCall(0, "LaunchKernel", A)] * 4 + [ApiCall(0, "MemcpyD2H", S)] * 2
    assert rtt_slope(make_trace(calls)) == 4.0
    assert rtt_slope(make_trace([])) == 0.0


def test_resnet_rtt_5_to_100(resnet):
    """Reference growth of the ResNET overhead from 5 to 100 us RTT: 353%."""
    prof, trace, start = resnet
    resolved = apply_sr(trace, True)
    d5, d100 = (degradation(resolved, NetworkConfig.from_gbps(r, 200.0, start), prof.baseline_us) for r in (5.0, 100.0))
    assert (d100 - d5) == pytest.approx(3.53, rel=0.25)


def test_sweep_single_cell():
    t = make_trace([ApiCall(0, "MemcpyD2H", S, payload_resp=1000, gpu_exec_time=1.0)])
    g = Grid.from_gbps([7.0], [3.0])
    m = sweep(t, g, 50.0, 1.0)
    assert m.shape == (1, 1)
    assert m[0, 0] == degradation(t, NetworkConfig.from_gbps(7.0, 3.0, 1.0), 50.0)


def test_gpt2_cell_within_budget():
    prof = gpt2_v100()
    trace = apply_sr(prof.trace(), True)
    m = sweep(trace, Grid.from_gbps([10.0], [1.0]), prof.baseline_us, prof.start_overhead(trace))
    assert m[0, 0] <= 0.05


# -- trace and synth ----------------------------------------------------------------


def test_resnet_file_total(tmp_path, resnet):
    from apiremote.trace import load_trace

    _, trace, _ = resnet
    p = tmp_path / "resnet.jsonl"
    p.write_text(dumps_trace(trace))
    assert summarize(load_trace(p)).total_count == 1475


def test_sr_without_flags_is_noop():
    t = make_trace([ApiCall(0, "LaunchKernel", A), ApiCall(0, "MemcpyD2H", S)])
    assert [c.cls for c in apply_sr(t, True).calls] == [c.cls for c in apply_sr(t, False).calls]


def test_zero_count_profile_is_empty():
    p = SynthProfile((SynthGroup(A, None, 0, 0.0, 0.0, 0, 0), SynthGroup(S, None, 0, 0.0, 0.0, 0, 0)))
    assert len(synth_trace(p)) == 0


def test_profile_serialization_is_byte_identical(resnet):
    prof, trace, _ = resnet
    assert dumps_trace(prof.trace()) == dumps_trace(trace)


# -- protocol ---------------------------------------------------------------------------

NET = NetworkConfig(10.0, 1000.0, 1.0)


def _one(call):
    return apply_sr(make_trace([call]), True).calls[0]


def test_getdevice_local():
    s = Session(NET)
    out = s.client_call(_one(ApiCall(0, "GetDevice", S, L, gpu_exec_time=4.0, local_exec_time=0.2)), 3.0)
    assert out.return_time == 3.2 and s.message_count == 0 and s.transport_sends == 0


def test_create_descriptor_async_with_shadow():
    s = Session(NET)
    out = s.client_call(_one(ApiCall(0, "CreateTensorDescriptor", S, A, gpu_exec_time=4.0)), 0.0)
    assert out.return_time == 1.0
    assert s.sent_requests[0].new_shadow_id in s.shadows


def test_d2h_blocks_for_round_trip_and_payload():
    s = Session(NET)
    out = s.client_call(_one(ApiCall(0, "MemcpyD2H", S, payload_resp=2000, gpu_exec_time=3.0)), 0.0)
    assert out.return_time == 1.0 + 5.0 + 3.0 + 2.0 + 5.0


def test_reference_to_inflight_creation_resolves():
    desc, conv = apply_sr(
        make_trace([ApiCall(0, "CreateTensorDescriptor", S, A, gpu_exec_time=2.0), ApiCall(0, "LaunchKernel", A, gpu_exec_time=2.0)]),
        True,
    ).calls
    for seed in range(100):  # first seed whose kernel draws a reference
        s = Session(NET, max_refs=1, seed=seed)
        t = s.client_call(desc, 0.0).return_time
        s.client_call(conv, t)
        if s.sent_requests[1].shadow_refs:
            break
    # the kernel is sent while the creation is still in flight
    assert s.uplink.events[1].send_time < s.uplink.events[0].arrival_time
    s.close(t)
    assert s.sent_requests[1].shadow_refs == (s.sent_requests[0].new_shadow_id,)
    assert s.proxy.executed == [0, 1]


def test_response_echoes_request_seq():
    s = Session(NET)
    s.client_call(_one(ApiCall(0, "MemcpyD2H", S)), 0.0)
    assert s.proxy.responses[0].seq == s.sent_requests[0].seq == 0


def test_sync_flushes_three_buffered():
    s = Session(NET, batch_size=8)
    calls = apply_sr(make_trace([ApiCall(0, "LaunchKernel", A)] * 3 + [ApiCall(0, "MemcpyD2H", S)]), True).calls
    t = 0.0
    for c in calls:
        t = s.client_call(c, t).return_time
    assert s.transport_sends == 1 and len(s.uplink.events) == 1
    assert t == 1.0 + 5.0 + 5.0


def test_batch64_delays_first_kernel(resnet):
    _, _, start = resnet
    net = NetworkConfig.from_gbps(V100_RTT_US, V100_GBPS, start)
    trace = training_trace(0)
    first = {}
    for n in (None, 64):
        log = replay_remote(trace, ReplayOptions(net, batch_size=n)).device_log
        first[n] = next(r.submit for r in log if r.name == "LaunchKernel")
    assert first[64] > first[None]


def test_or_within_reference_band(resnet):
    _, _, start = resnet
    net = NetworkConfig.from_gbps(V100_RTT_US, V100_GBPS, start)
    trace = training_trace(0)
    orr = replay_remote(trace, ReplayOptions(net)).end_to_end_us
    b = {n: replay_remote(trace, ReplayOptions(net, batch_size=n)).end_to_end_us for n in (8, 64)}
    best, worst = min(b.values()), max(b.values())
    assert best <= orr <= worst
    assert (orr - best) / best <= 0.19
    assert (worst - orr) / worst <= 0.15


# -- device and transport ---------------------------------------------------------------


def _k(seq, ex):
    return ApiCall(seq, "LaunchKernel", A, gpu_exec_time=ex)


def test_device_examples():
    d = DeviceTimeline()
    assert d.submit(_k(0, 5.0), 10.0) == 15.0
    d = DeviceTimeline(busy_until=20.0)
    assert d.submit(_k(0, 5.0), 10.0) == 25.0
    d = DeviceTimeline()
    assert d.submit(_k(0, 0.0), 3.0) == 3.0 and d.submit(_k(1, 0.0), 3.0) == 3.0
    assert [r.seq for r in d.log] == [0, 1]


@dataclass(frozen=True)
class _Msg:
    seq: int
    payload_len: int


def test_transport_examples():
    ch = EmulatedChannel(rtt=10.0, bandwidth=1000.0)
    assert ch.send(_Msg(0, 0), 7.0) == 12.0
    ch = EmulatedChannel(rtt=0.0, bandwidth=1000.0)
    a = ch.send(_Msg(0, 1_000_000), 0.0)
    b = ch.send(_Msg(1, 1_000_000), 0.0)
    assert b - a == 1000.0
    assert IdealChannel().send(_Msg(0, 123), 4.5) == 4.5


def test_deliver_examples():
    ch = IdealChannel()
    assert ch.deliver(100.0) == []
    for i, t in enumerate((5.0, 5.0, 7.0)):
        ch.send(_Msg(i, 0), t)
    assert [m.seq for m, _ in ch.deliver(5.0)] == [0, 1]
    assert [m.seq for m, _ in ch.deliver(np.inf)] == [2]
