"""Reference inference workload profiles (V100), as synthesizable aggregates.

Each profile is split into call groups by (class without SR, class with SR)
so that one trace reproduces both the plain and the SR characterization:

* ``async``        calls that are async either way (kernel launches, H2D copies)
* ``sync->async``  resource creators made async by shadow descriptors
* ``sync->local``  read-only queries answered from shadow state
* ``sync``         calls that stay sync (D2H copies, stream synchronization)

Per-class API times are caller-visible times: local-class time is the shadow
execution time, every other class uses the execution time. Payload totals are
the host/device traffic volume of one forward pass.

The start overhead of each profile is not measured directly; it is solved
from the reference analytic-model inference time at the measured RDMA
configuration (``calibrate_start``).
"""

from __future__ import annotations

from dataclasses import dataclass

from .cost_model import NetworkConfig
from .solver import calibrate_start
from .synth import SynthGroup, SynthProfile, synth_trace
from .trace import ApiClass, Trace, apply_sr

A, S, L = ApiClass.ASYNC, ApiClass.SYNC, ApiClass.LOCAL

# measured V100 RDMA link: 2.6 us one-way latency, 200 Gbps
V100_RTT_US = 5.2
V100_GBPS = 200.0


@dataclass(frozen=True)
class ReferenceProfile:
    name: str
    synth: SynthProfile
    baseline_us: float  # local forward time
    model_time_us: float  # analytic-model forward time at the V100 RDMA link

    def trace(self, seed: int | None = None) -> Trace:
        """A forward pass; it ends with a blocking call that reads the output back."""
        p = self.synth if seed is None else SynthProfile(**{**self.synth.__dict__, "seed": seed})
        return synth_trace(p, end_with_read=True)

    def start_overhead(self, trace: Trace | None = None) -> float:
        trace = apply_sr(trace or self.trace(), True)
        net = NetworkConfig.from_gbps(V100_RTT_US, V100_GBPS)
        return calibrate_start(trace, net, self.model_time_us - self.baseline_us)

    def network(self, rtt_us: float, gbps: float, trace: Trace | None = None) -> NetworkConfig:
        return NetworkConfig.from_gbps(rtt_us, gbps, self.start_overhead(trace))


def _gap_mean(baseline_us: float, groups) -> float:
    n = sum(g.count for g in groups)
    return (baseline_us - sum(g.total_gpu_us for g in groups)) / n


def _profile(name, baseline_us, model_time_us, groups) -> ReferenceProfile:
    groups = tuple(groups)
    synth = SynthProfile(groups, cpu_gap_mean_us=_gap_mean(baseline_us, groups), seed=0, app=name)
    return ReferenceProfile(name, synth, baseline_us, model_time_us)


def resnet_v100() -> ReferenceProfile:
    # 253 MB/s of host/device traffic over a 4.3 ms forward pass
    traffic = 1_087_900
    logits = 4_016
    return _profile(
        "resnet",
        baseline_us=4300.0,
        model_time_us=4000.0,
        groups=[
            SynthGroup(A, None, 414, 510.0, 0.0, traffic - logits, 0, ("LaunchKernel", "MemcpyH2D")),
            SynthGroup(S, A, 120, 70.0, 0.0, 0, 0, ("CreateTensorDescriptor", "Malloc")),
            SynthGroup(S, L, 937, 3580.0, 30.0, 0, 0, ("GetDevice",)),
            SynthGroup(S, None, 4, 50.0, 0.0, 0, logits, ("MemcpyD2H", "StreamSynchronize")),
        ],
    )


def gpt2_v100() -> ReferenceProfile:
    # 0.25 MB/s of host/device traffic over a 185.5 ms forward pass
    traffic = 46_375
    out = 8_000
    return _profile(
        "gpt2",
        baseline_us=185_500.0,
        model_time_us=163_100.0,
        groups=[
            SynthGroup(A, None, 6104, 14_490.0, 0.0, traffic - out, 0, ("LaunchKernel", "MemcpyH2D")),
            SynthGroup(S, L, 37_634, 104_060.0, 1_050.0, 0, 0, ("GetDevice",)),
            SynthGroup(S, None, 511, 6_740.0, 0.0, 0, out, ("MemcpyD2H", "StreamSynchronize")),
        ],
    )


PROFILES = {"resnet": resnet_v100, "gpt2": gpt2_v100}
