"""GPU API remoting lab: trace model, remoting cost model, network
requirement solver and a discrete-event replay of the remoting stack."""

from .cost_model import CostBreakdown, NetworkConfig, degradation, total_cost
from .replay import ReplayOptions, ReplayResult, compare_model, replay_local, replay_remote
from .solver import Budget, Grid, RequirementFrontier, derive_requirements, sweep
from .synth import SynthProfile, random_trace, synth_trace, training_trace
from .trace import ApiCall, ApiClass, Trace, apply_sr, load_trace, summarize

__version__ = "0.1.0"

__all__ = [
    "ApiCall",
    "ApiClass",
    "Budget",
    "CostBreakdown",
    "Grid",
    "NetworkConfig",
    "ReplayOptions",
    "ReplayResult",
    "RequirementFrontier",
    "SynthProfile",
    "Trace",
    "apply_sr",
    "compare_model",
    "degradation",
    "derive_requirements",
    "load_trace",
    "random_trace",
    "replay_local",
    "replay_remote",
    "summarize",
    "sweep",
    "synth_trace",
    "total_cost",
    "training_trace",
]
