"""Sequential hypothesis testing and change detection for continuously monitored spin noise."""

from .model import ConfigError, HypothesisPair, ModelParams, load_pair, psd, reference_pair
from .oracle import NumericError
from .sequential import CusumConfig, CusumVariant, DecisionRecord, SprtConfig, Verdict
from .simulate import Trace, load_trace, save_trace, simulate, simulate_with_change, trace_seed

__all__ = [
    "ConfigError",
    "CusumConfig",
    "CusumVariant",
    "DecisionRecord",
    "HypothesisPair",
    "ModelParams",
    "NumericError",
    "SprtConfig",
    "Trace",
    "Verdict",
    "load_pair",
    "load_trace",
    "psd",
    "save_trace",
    "simulate",
    "simulate_with_change",
    "reference_pair",
    "trace_seed",
]

__version__ = "0.1.0"
