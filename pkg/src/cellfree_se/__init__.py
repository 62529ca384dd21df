"""Spectral-efficiency toolkit for joint unicast / multigroup-multicast
cell-free distributed massive MIMO: channel estimation, precoding,
deterministic SINR maps with Monte Carlo validation, and two power
allocators (NSGA-II and an unsupervised neural network).
"""

from .channel import (
    ChannelSample,
    EstimateGains,
    draw_sample_pilot,
    draw_sample_statistical,
    estimate_gains,
)
from .errors import ConfigError, NumericalError
from .monte_carlo import McEstimate, McSinrReport, estimate_appendix_terms, estimate_sinr
from .numerics import make_rng, sample_circular_gaussian, substream
from .precoding import PRECODERS, PrecodeSet, build_precoders
from .scenario import (
    PowerAllocation,
    PowerLimits,
    Scenario,
    SystemConfig,
    default_allocation,
    large_scale_gain,
    place_uniform,
)
from .se import SeReport, array_gain, closed_form_sinr, se_from_sinr, se_report

__all__ = [
    "ChannelSample",
    "ConfigError",
    "EstimateGains",
    "McEstimate",
    "McSinrReport",
    "NumericalError",
    "PRECODERS",
    "PowerAllocation",
    "PowerLimits",
    "PrecodeSet",
    "Scenario",
    "SeReport",
    "SystemConfig",
    "array_gain",
    "build_precoders",
    "closed_form_sinr",
    "default_allocation",
    "draw_sample_pilot",
    "draw_sample_statistical",
    "estimate_appendix_terms",
    "estimate_gains",
    "estimate_sinr",
    "large_scale_gain",
    "make_rng",
    "place_uniform",
    "sample_circular_gaussian",
    "se_from_sinr",
    "se_report",
    "substream",
]

__version__ = "0.1.0"
