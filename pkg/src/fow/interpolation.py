"""Interpolation factors and the rules that turn fixed-window predictions
into flexible-window predictions.

Given predictions at a short window ``T_s`` and a long window ``T_l``, the
estimate at ``T_f`` is ``(1 - a) * P(tau <= T_s) + a * P(tau <= T_l)``
where ``a = alpha(T_s, T_f, T_l)`` is the share of the ``(T_s, T_l]`` CDF
mass that falls in ``(T_s, T_f]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core_types import WindowSpec

FAMILIES = ("linear", "rational", "exponential")

# below this rate the exponential factor is evaluated through its limit
EXP_SMALL_BETA = 1e-7


class InfeasibleBeta(ValueError):
    """Beta outside the range where alpha stays inside [0, 1]."""


def beta_range(family: str, t_short: float, t_long: float):
    """Closed/open feasible range ``(low, high, high_inclusive)`` for beta."""
    if family == "linear":
        return 0.0, 1.0 / (t_long - t_short), True
    if family == "rational":
        return 0.0, 1.0, False
    if family == "exponential":
        return 0.0, math.inf, False
    raise ValueError(f"unknown alpha family {family!r}")


def check_beta(family: str, beta: float, t_short: float, t_long: float) -> None:
    low, high, inclusive = beta_range(family, t_short, t_long)
    ok = beta >= low and (beta <= high if inclusive else beta < high)
    if not ok or math.isnan(beta):
        bracket = "]" if inclusive else ")"
        raise InfeasibleBeta(
            f"beta out of feasible range: {family} beta={beta!r} not in [{low:g}, {high:g}{bracket}"
        )


@dataclass(frozen=True)
class AlphaDesign:
    """An interpolation-factor family and its shape parameter.

    ``beta_by_segment`` optionally overrides ``beta`` per segment; segments
    without an entry use the global value.
    """

    family: str
    beta: float
    beta_by_segment: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown alpha family {self.family!r}")
        if self.beta < 0 or math.isnan(self.beta):
            raise InfeasibleBeta(f"beta out of feasible range: {self.family} beta={self.beta!r} < 0")
        if self.family == "rational" and self.beta >= 1:
            raise InfeasibleBeta(f"beta out of feasible range: rational beta={self.beta!r} >= 1")
        object.__setattr__(self, "beta_by_segment", dict(self.beta_by_segment))

    def validate(self, t_short: float, t_long: float) -> "AlphaDesign":
        """Check every beta against the windows; returns ``self``."""
        check_beta(self.family, self.beta, t_short, t_long)
        for b in self.beta_by_segment.values():
            check_beta(self.family, b, t_short, t_long)
        return self

    def beta_for(self, segment: Optional[int]) -> float:
        if segment is None:
            return self.beta
        return self.beta_by_segment.get(int(segment), self.beta)

    @classmethod
    def from_dict(cls, d: Mapping) -> "AlphaDesign":
        by_seg = {int(k): float(v) for k, v in d.get("beta_by_segment", {}).items()}
        return cls(d["family"], float(d["beta"]), by_seg)

    def to_dict(self) -> dict:
        out = {"family": self.family, "beta": self.beta}
        if self.beta_by_segment:
            out["beta_by_segment"] = {str(k): v for k, v in sorted(self.beta_by_segment.items())}
        return out


@dataclass(frozen=True)
class PredictionPair:
    """Short-window probability and the conditional tail probability."""

    p_short: float
    p_cond: float

    def __post_init__(self):
        _check_prob("p_short", self.p_short)
        _check_prob("p_cond", self.p_cond)


def _check_prob(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise ValueError(f"{name} must lie in [0, 1]")


def _alpha_value(family: str, beta: float, ts: float, tf: float, tl: float) -> float:
    if family == "linear":
        return beta * (tf - tl) + 1.0
    if family == "rational":
        return (tf - ts) / (beta * (tf - tl) + tl - ts)
    if beta < EXP_SMALL_BETA:
        return (tf - ts) / (tl - ts)
    # e^{-b ts} - e^{-b t} = e^{-b ts} * -expm1(-b (t - ts)); the common factor cancels
    return math.expm1(-beta * (tf - ts)) / math.expm1(-beta * (tl - ts))


def alpha(design: AlphaDesign, windows: WindowSpec, segment: Optional[int] = None) -> float:
    """Interpolation factor for ``windows.t_flex``.

    Raises :class:`InfeasibleBeta` if beta does not keep the factor inside
    [0, 1] for these windows. ``t_flex`` outside ``[t_short, t_long]`` is
    already rejected by :class:`WindowSpec`.
    """
    beta = design.beta_for(segment)
    check_beta(design.family, beta, windows.t_short, windows.t_long)
    return _alpha_value(design.family, beta, windows.t_short, windows.t_flex, windows.t_long)


def alpha_by_segment(design: AlphaDesign, windows: WindowSpec, num_segments: int) -> np.ndarray:
    """Factor for every segment id in ``range(num_segments)``."""
    design.validate(windows.t_short, windows.t_long)
    if not design.beta_by_segment:
        a = _alpha_value(design.family, design.beta, windows.t_short, windows.t_flex, windows.t_long)
        return np.full(num_segments, a)
    return np.array(
        [
            _alpha_value(design.family, design.beta_for(s), windows.t_short, windows.t_flex, windows.t_long)
            for s in range(num_segments)
        ]
    )


def compose_unconditional(p_short, p_long, a):
    """``(1 - a) * p_short + a * p_long``; works elementwise on arrays."""
    _check_prob("p_short", p_short)
    _check_prob("p_long", p_long)
    _check_prob("alpha", a)
    out = (1.0 - np.asarray(a, float)) * np.asarray(p_short, float) + np.asarray(a, float) * np.asarray(p_long, float)
    return float(out) if np.ndim(out) == 0 else out


def compose_conditional(pair: PredictionPair, a):
    """Flexible-window estimate from a short prediction and a conditional tail.

    ``p_short + (1 - p_short) * a * p_cond``: the conditional tail mass up to
    ``T_f`` is the factor times the tail mass up to ``T_l``.
    """
    _check_prob("alpha", a)
    ps = np.asarray(pair.p_short, float)
    out = ps + (1.0 - ps) * (np.asarray(a, float) * np.asarray(pair.p_cond, float))
    return float(out) if np.ndim(out) == 0 else out


def recover_long_window(pair: PredictionPair):
    """``P(tau <= T_l)`` from the two heads, by total probability."""
    return compose_conditional(pair, 1.0)
