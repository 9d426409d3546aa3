"""Normalized entropy, calibration and relative NE deltas."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

CLIP = 1e-6


class DegenerateLabels(ValueError):
    pass


def _entropy(rate: float) -> float:
    return -(rate * math.log(rate) + (1.0 - rate) * math.log1p(-rate))


def ne_from_sums(log_loss_sum: float, n: float, positives: float) -> float:
    """NE from sufficient statistics: mean log loss over base-rate entropy."""
    if n < 1:
        raise DegenerateLabels("need at least one example")
    rate = positives / n
    if not 0.0 < rate < 1.0:
        raise DegenerateLabels(f"degenerate labels: base rate {rate:g}")
    return (log_loss_sum / n) / _entropy(rate)


def normalized_entropy(predictions, labels) -> float:
    """Cross-entropy of ``predictions`` normalised by the base-rate entropy.

    Predictions are clipped to ``[1e-6, 1 - 1e-6]``. A constant predictor
    at the empirical base rate scores exactly 1; lower is better.
    """
    p = np.clip(np.asarray(predictions, dtype=float), CLIP, 1.0 - CLIP)
    y = np.asarray(labels, dtype=bool)
    if p.shape != y.shape:
        raise ValueError("predictions and labels differ in shape")
    return ne_from_sums(_kernels.log_loss_sum(p, y), len(y), float(np.count_nonzero(y)))


def calibration_score(predictions, labels) -> float:
    """Total predicted conversions over total observed ones."""
    y = np.asarray(labels, dtype=bool)
    positives = np.count_nonzero(y)
    if positives == 0:
        raise DegenerateLabels("calibration needs at least one positive label")
    return math.fsum(np.asarray(predictions, dtype=float).tolist()) / positives


def ne_delta_percent(method_ne: float, baseline_ne: float) -> float:
    """Relative NE change vs a baseline in percent; positive is an improvement."""
    if not baseline_ne > 0:
        raise ValueError("baseline NE must be positive")
    return (baseline_ne - method_ne) / baseline_ne * 100.0


@dataclass(frozen=True)
class MetricReport:
    ne: float
    calibration: float
    n: int
    label_rate: float

    @classmethod
    def compute(cls, predictions, labels) -> "MetricReport":
        y = np.asarray(labels, dtype=bool)
        return cls(
            ne=normalized_entropy(predictions, y),
            calibration=calibration_score(predictions, y),
            n=len(y),
            label_rate=float(np.count_nonzero(y)) / len(y),
        )
