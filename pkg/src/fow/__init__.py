"""Flexible-window conversion estimation by interpolating two fixed windows."""

from ._kernels import BACKEND
from .core_types import Event, EventLog, LabeledExample, WindowSpec, maturation_label, window_label
from .delay_models import DelayDistribution, fit_rate_to_endpoints
from .interpolation import (
    AlphaDesign,
    PredictionPair,
    alpha,
    compose_conditional,
    compose_unconditional,
    recover_long_window,
)
from .metrics import MetricReport, calibration_score, ne_delta_percent, normalized_entropy

__version__ = "0.1.0"
