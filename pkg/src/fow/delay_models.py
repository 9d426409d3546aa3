"""Ground-truth conversion-delay laws.

Each :class:`DelayDistribution` is a zero-inflated law: with probability
``1 - p_conv`` the event never converts, otherwise the delay follows the
family's conditional law. ``cdf(t)`` is ``P(delay <= t)`` and tends to
``p_conv``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

FAMILIES = ("zero_inflated_exponential", "zero_inflated_weibull", "empirical_histogram")

RATE_BRACKET = (1e-9, 1e6)
RATE_TOL = 1e-12


class InfeasibleFit(ValueError):
    """Raised when two CDF endpoints admit no zero-inflated exponential."""


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based Philox stream for ``seed`` and an integer sub-key.

    Distinct keys give independent streams, so a shard only needs its own
    key to be reproducible.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class DelayDistribution:
    family: str
    p_conv: float
    rate: Optional[float] = None
    shape: Optional[float] = None
    scale: Optional[float] = None
    bin_edges: Optional[tuple] = None
    bin_masses: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown delay family {self.family!r}")
        if not 0.0 <= self.p_conv <= 1.0:
            raise ValueError(f"p_conv must lie in [0, 1], got {self.p_conv}")
        if self.family == "zero_inflated_exponential":
            if self.rate is None or not self.rate > 0:
                raise ValueError("exponential family needs rate > 0")
        elif self.family == "zero_inflated_weibull":
            if self.shape is None or self.scale is None or not (self.shape > 0 and self.scale > 0):
                raise ValueError("weibull family needs shape > 0 and scale > 0")
        else:
            self._check_histogram()

    def _check_histogram(self):
        if self.bin_edges is None or self.bin_masses is None:
            raise ValueError("empirical family needs bin_edges and bin_masses")
        edges = np.asarray(self.bin_edges, dtype=float)
        masses = np.asarray(self.bin_masses, dtype=float)
        if edges.ndim != 1 or len(edges) != len(masses) + 1 or len(masses) == 0:
            raise ValueError("need len(bin_edges) == len(bin_masses) + 1")
        if edges[0] != 0.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must start at 0 and increase strictly")
        if np.any(masses < 0):
            raise ValueError("bin_masses must be non-negative")
        if not math.isclose(masses.sum(), self.p_conv, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"bin_masses sum to {masses.sum()}, expected p_conv={self.p_conv}")

    # ------------------------------------------------------------ constructors

    @classmethod
    def exponential(cls, p_conv: float, rate: float) -> "DelayDistribution":
        return cls("zero_inflated_exponential", p_conv, rate=rate)

    @classmethod
    def weibull(cls, p_conv: float, shape: float, scale: float) -> "DelayDistribution":
        return cls("zero_inflated_weibull", p_conv, shape=shape, scale=scale)

    @classmethod
    def histogram(cls, bin_edges: Sequence[float], bin_masses: Sequence[float]) -> "DelayDistribution":
        masses = tuple(float(m) for m in bin_masses)
        return cls(
            "empirical_histogram",
            float(math.fsum(masses)),
            bin_edges=tuple(float(e) for e in bin_edges),
            bin_masses=masses,
        )

    @classmethod
    def histogram_from_cdf(cls, cdf: Callable[[np.ndarray], np.ndarray], bin_edges) -> "DelayDistribution":
        """Piecewise-linear approximation of ``cdf`` on the given edges.

        Mass beyond the last edge is dropped: ``p_conv`` becomes
        ``cdf(bin_edges[-1])``.
        """
        edges = np.asarray(bin_edges, dtype=float)
        values = np.asarray(cdf(edges), dtype=float)
        return cls.histogram(edges, np.diff(values))

    def with_p_conv(self, p_conv: float) -> "DelayDistribution":
        """Same conditional delay law, different ultimate conversion rate."""
        if self.family != "empirical_histogram":
            return replace(self, p_conv=p_conv)
        masses = np.asarray(self.bin_masses, dtype=float)
        total = masses.sum()
        scaled = masses * (p_conv / total) if total > 0 else masses
        return replace(self, p_conv=float(p_conv), bin_masses=tuple(scaled.tolist()))

    # ------------------------------------------------------------ evaluation

    def cdf(self, t):
        """``P(delay <= t)``; accepts scalars or arrays, rejects ``t < 0``."""
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0) or np.any(np.isnan(arr)):
            raise ValueError("cdf is only defined for t >= 0")
        out = self.p_conv * self._conditional_cdf(arr)
        return float(out) if out.ndim == 0 else out

    def _conditional_cdf(self, t: np.ndarray) -> np.ndarray:
        if self.family == "zero_inflated_exponential":
            return -np.expm1(-self.rate * t)
        if self.family == "zero_inflated_weibull":
            return -np.expm1(-np.power(t / self.scale, self.shape))
        edges = np.asarray(self.bin_edges)
        cum = np.concatenate([[0.0], np.cumsum(self.bin_masses)])
        if cum[-1] <= 0:
            return np.zeros_like(t)
        return np.interp(t, edges, cum / cum[-1])

    def conditional_mean(self) -> float:
        """Mean delay given that the event converts."""
        if self.family == "zero_inflated_exponential":
            return 1.0 / self.rate
        if self.family == "zero_inflated_weibull":
            return self.scale * math.gamma(1.0 + 1.0 / self.shape)
        edges = np.asarray(self.bin_edges)
        masses = np.asarray(self.bin_masses)
        return float(np.sum(masses * 0.5 * (edges[:-1] + edges[1:])) / masses.sum())

    # ------------------------------------------------------------ sampling

    def sample_conditional(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` delays drawn from the law conditional on converting."""
        if self.family == "zero_inflated_exponential":
            return rng.exponential(1.0 / self.rate, size=n)
        if self.family == "zero_inflated_weibull":
            return self.scale * rng.weibull(self.shape, size=n)
        masses = np.asarray(self.bin_masses)
        edges = np.asarray(self.bin_edges)
        idx = rng.choice(len(masses), size=n, p=masses / masses.sum())
        u = rng.random(n)
        out = edges[idx] + u * (edges[idx + 1] - edges[idx])
        # the first bin starts at 0 and delays must stay positive
        return np.where(out > 0, out, np.nextafter(0.0, 1.0))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Delays for ``n`` events, NaN where the event never converts."""
        converted = rng.random(n) < self.p_conv
        out = np.full(n, np.nan)
        k = int(converted.sum())
        if k:
            out[converted] = self.sample_conditional(rng, k)
        return out

    def sample_delay(self, rng: np.random.Generator) -> Optional[float]:
        d = self.sample(rng, 1)[0]
        return None if math.isnan(d) else float(d)

    # ------------------------------------------------------------ config io

    def to_dict(self) -> dict:
        out = {"family": self.family, "p_conv": self.p_conv}
        if self.family == "zero_inflated_exponential":
            out["rate"] = self.rate
        elif self.family == "zero_inflated_weibull":
            out["shape"] = self.shape
            out["scale"] = self.scale
        else:
            out["bin_edges"] = list(self.bin_edges)
            out["bin_masses"] = list(self.bin_masses)
        return out

    @classmethod
    def from_dict(cls, d: dict, p_conv: Optional[float] = None) -> "DelayDistribution":
        """Build from a config mapping.

        Besides the plain family fields, an ``empirical_histogram`` may be
        given as ``{"mixture": {"weights": [...], "rates": [...]},
        "bin_edges": [...]}``: an exponential mixture discretised on the
        edges. ``p_conv`` overrides whatever the mapping says.
        """
        family = d.get("family")
        if family == "empirical_histogram" and "mixture" in d:
            mix = d["mixture"]
            dist = cls.histogram_from_cdf(
                exponential_mixture_cdf(mix["weights"], mix["rates"]), d["bin_edges"]
            )
        elif family == "empirical_histogram":
            dist = cls.histogram(d["bin_edges"], d["bin_masses"])
        elif family == "zero_inflated_exponential":
            dist = cls.exponential(d.get("p_conv", 1.0), d["rate"])
        elif family == "zero_inflated_weibull":
            dist = cls.weibull(d.get("p_conv", 1.0), d["shape"], d["scale"])
        else:
            raise ValueError(f"unknown delay family {family!r}")
        if p_conv is not None:
            dist = dist.with_p_conv(p_conv)
        elif "p_conv" in d and family == "empirical_histogram":
            dist = dist.with_p_conv(d["p_conv"])
        return dist


def exponential_mixture_cdf(weights: Sequence[float], rates: Sequence[float]):
    """CDF of ``sum_k w_k * Exp(rate_k)``; weights may sum below 1."""
    w = np.asarray(weights, dtype=float)
    r = np.asarray(rates, dtype=float)

    def cdf(t):
        t = np.asarray(t, dtype=float)
        return np.sum(w[:, None] * -np.expm1(-r[:, None] * t.ravel()[None, :]), axis=0).reshape(t.shape)

    return cdf


def fit_rate_to_endpoints(p_short: float, p_long: float, t_short: float, t_long: float):
    """Zero-inflated exponential through ``(t_short, p_short)`` and ``(t_long, p_long)``.

    The ratio ``p_short / p_long = (1 - e^{-r t_s}) / (1 - e^{-r t_l})`` rises
    monotonically from ``t_s / t_l`` (r -> 0) to 1 (r -> inf), so the rate is
    found by bisection on that ratio. Returns ``(p_conv, rate)``.
    """
    if not 0 < p_short < p_long < 1:
        raise ValueError("need 0 < p_short < p_long < 1")
    if not 0 < t_short < t_long:
        raise ValueError("need 0 < t_short < t_long")
    target = p_short / p_long

    def ratio(r):
        return math.expm1(-r * t_short) / math.expm1(-r * t_long)

    lo, hi = RATE_BRACKET
    if not ratio(lo) < target < ratio(hi):
        raise InfeasibleFit(
            f"no feasible rate: p_short/p_long={target:.6g} must lie strictly between "
            f"{ratio(lo):.6g} and {ratio(hi):.6g}"
        )
    while hi - lo > RATE_TOL * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if ratio(mid) < target:
            lo = mid
        else:
            hi = mid
    rate = 0.5 * (lo + hi)
    p_conv = p_long / -math.expm1(-rate * t_long)
    if p_conv > 1:
        raise InfeasibleFit(f"fitted p_conv={p_conv:.6g} exceeds 1")
    return p_conv, rate
