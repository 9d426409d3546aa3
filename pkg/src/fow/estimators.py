"""Per-segment stand-ins for production conversion models, and the methods
compared in the flexible-window experiments.

Every model here is a smoothed per-segment rate. What distinguishes the
methods is which events each head is trained on (how long it waits for
labels to mature) and how the heads are combined at prediction time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .core_types import Event, EventLog, LabeledExample, WindowSpec
from .interpolation import AlphaDesign, PredictionPair, alpha_by_segment, compose_conditional

CLIP = 1e-6


class InsufficientData(ValueError):
    """A head has no matured events to train on."""


class UntrainedMethod(ValueError):
    """The method was asked for a window it was not trained for."""


class Kind(str, enum.Enum):
    INTERP_LINEAR = "INTERP_LINEAR"
    INTERP_RATIONAL = "INTERP_RATIONAL"
    INTERP_EXP = "INTERP_EXP"
    P1D = "P1D"
    P7D = "P7D"
    SEVEN_HEAD = "SEVEN_HEAD"
    DEDICATED = "DEDICATED"
    NDUB = "NDUB"

    @property
    def is_interp(self) -> bool:
        return self.value.startswith("INTERP_")


INTERP_FAMILY = {
    Kind.INTERP_LINEAR: "linear",
    Kind.INTERP_RATIONAL: "rational",
    Kind.INTERP_EXP: "exponential",
}
FAMILY_KIND = {v: k for k, v in INTERP_FAMILY.items()}
# Table-1 defaults
DEFAULT_BETAS = {"linear": 0.1, "rational": 0.7, "exponential": 0.4}
ALL_KINDS = tuple(Kind)


def clip(p):
    return np.clip(p, CLIP, 1.0 - CLIP)


@dataclass(frozen=True, eq=False)
class BucketEstimator:
    """Additively smoothed per-segment rate.

    ``p(s) = (positives(s) + a * p0) / (totals(s) + a)``, falling back to
    ``p0`` for segments without data, clipped away from 0 and 1.
    """

    positives: np.ndarray
    totals: np.ndarray
    smoothing: float
    prior: float
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")
        if not 0.0 <= self.prior <= 1.0:
            raise ValueError("prior must lie in [0, 1]")
        pos = np.asarray(self.positives, dtype=float)
        tot = np.asarray(self.totals, dtype=float)
        if pos.shape != tot.shape or np.any(pos > tot) or np.any(pos < 0):
            raise ValueError("need 0 <= positives <= totals per segment")
        with np.errstate(invalid="ignore", divide="ignore"):
            raw = (pos + self.smoothing * self.prior) / (tot + self.smoothing)
        raw = np.where(tot > 0, raw, self.prior)
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "totals", tot)
        object.__setattr__(self, "values", clip(raw))

    @property
    def num_segments(self) -> int:
        return len(self.values)

    def predict(self, segment):
        return self.values[segment]

    @classmethod
    def from_arrays(cls, segment, label, mask, num_segments, smoothing, prior=None):
        """Fit on the rows of ``(segment, label)`` selected by ``mask``.

        ``prior=None`` uses the pooled label rate of those rows (0.5 if
        there are none).
        """
        pos, tot = _kernels.segment_counts(segment, label, mask, num_segments)
        if prior is None:
            n = tot.sum()
            prior = pos.sum() / n if n > 0 else 0.5
        return cls(pos, tot, float(smoothing), float(prior))


def train_bucket(
    examples: Iterable[LabeledExample],
    smoothing: float,
    prior: float,
    num_segments: Optional[int] = None,
) -> BucketEstimator:
    """Fit a :class:`BucketEstimator` on labeled examples as given.

    Censored examples are counted with their provisional label; filter them
    out first if only matured labels should be used.
    """
    examples = list(examples)
    seg = np.array([e.segment for e in examples], dtype=np.int64)
    lab = np.array([e.window_label for e in examples], dtype=bool)
    if num_segments is None:
        num_segments = int(seg.max()) + 1 if len(seg) else 1
    return BucketEstimator.from_arrays(
        seg, lab, np.ones(len(seg), dtype=bool), num_segments, smoothing, prior
    )


@dataclass(frozen=True, eq=False)
class TwoHead:
    """A short-window head plus a conditional tail head.

    ``cond`` estimates ``P(tau in (t_short, t_end] | tau > t_short)``; it is
    ``None`` when ``t_end == t_short`` and the model is the short head alone.
    """

    short: BucketEstimator
    cond: Optional[BucketEstimator]
    t_short: float
    t_end: float

    def predict_short(self, event: Event) -> float:
        return float(self.short.predict(event.segment))

    def predict_cond(self, event: Event) -> float:
        return float(self.cond.predict(event.segment)) if self.cond is not None else 0.0

    def pair(self) -> PredictionPair:
        cond = self.cond.values if self.cond is not None else np.zeros_like(self.short.values)
        return PredictionPair(self.short.values, cond)

    def end_values(self) -> np.ndarray:
        """Per-segment ``P(tau <= t_end)`` by total probability."""
        if self.cond is None:
            return self.short.values
        s = self.short.values
        return s + (1.0 - s) * self.cond.values


# MtmlBase is the same structure with t_end == t_long
MtmlBase = TwoHead


@dataclass(frozen=True)
class TrainingSettings:
    """Knobs shared by every method's training.

    ``window_days`` is how many days of matured events each head sees,
    counted back from its cutoff; ``None`` uses all history.
    """

    smoothing: float = 2.0
    window_days: Optional[float] = 4.0
    seven_head_gamma: float = 0.3


def _train_two_head(
    log: EventLog,
    num_segments: int,
    snapshot: float,
    t_short: float,
    t_end: float,
    short_cutoff: float,
    cond_cutoff: float,
    settings: TrainingSettings,
    oracle: bool = False,
) -> TwoHead:
    def population(cutoff):
        start = -math.inf if settings.window_days is None else cutoff - settings.window_days
        return (log.day >= start) & (log.day <= cutoff)

    def labels(t_window):
        if oracle:
            return log.window_labels(t_window)
        lab, _ = _kernels.matured_labels(log.day, log.converted, log.delay, t_window, snapshot)
        return lab

    short_mask = population(short_cutoff)
    if not short_mask.any():
        raise InsufficientData(f"no events before cutoff {short_cutoff:g} for the short head")
    short = BucketEstimator.from_arrays(
        log.segment, labels(t_short), short_mask, num_segments, settings.smoothing
    )
    if t_end <= t_short:
        return TwoHead(short, None, t_short, t_short)
    within_short = labels(t_short)
    cond_mask = population(cond_cutoff) & ~within_short
    if not cond_mask.any():
        raise InsufficientData(f"no events before cutoff {cond_cutoff:g} for the conditional head")
    cond = BucketEstimator.from_arrays(
        log.segment, labels(t_end), cond_mask, num_segments, settings.smoothing
    )
    return TwoHead(short, cond, t_short, t_end)


def train_mtml_base(
    log: EventLog,
    snapshot_day: float,
    windows: WindowSpec,
    settings: TrainingSettings = TrainingSettings(),
    num_segments: Optional[int] = None,
) -> TwoHead:
    """Two-head base model as it can be trained at ``snapshot_day``.

    The short head sees events matured for ``t_short``; the conditional
    head sees events matured for ``t_long`` that did not convert within
    ``t_short``.
    """
    if snapshot_day < windows.t_long:
        raise InsufficientData("snapshot_day must be at least t_long")
    num_segments = num_segments or log.num_segments
    return _train_two_head(
        log, num_segments, snapshot_day, windows.t_short, windows.t_long,
        snapshot_day - windows.t_short, snapshot_day - windows.t_long, settings,
    )


def _as_segment_index(segment):
    return segment.segment if isinstance(segment, Event) else segment


@dataclass(eq=False)
class Method:
    """A trained method that answers ``P(tau <= t_flex)`` per segment.

    Only the attributes relevant to ``kind`` are set.
    """

    kind: Kind
    t_short: float
    t_long: float
    name: str = ""
    base: Optional[TwoHead] = None
    design: Optional[AlphaDesign] = None
    per_window: Dict[float, TwoHead] = field(default_factory=dict)
    head_days: Optional[np.ndarray] = None
    heads: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if not self.name:
            self.name = self.kind.value

    @property
    def num_segments(self) -> int:
        if self.base is not None:
            return self.base.short.num_segments
        if self.heads is not None:
            return self.heads.shape[1]
        return next(iter(self.per_window.values())).short.num_segments

    def predict_segments(self, t_flex: float) -> np.ndarray:
        windows = WindowSpec(self.t_short, self.t_long, t_flex)
        k = self.kind
        if k.is_interp and t_flex == self.t_short:
            # the fixed windows are served by the base heads as they are
            out = self.base.short.values
        elif k.is_interp and t_flex == self.t_long:
            out = self.base.end_values()
        elif k.is_interp:
            a = alpha_by_segment(self.design, windows, self.num_segments)
            out = compose_conditional(self.base.pair(), a)
        elif k is Kind.P1D:
            out = self.base.short.values
        elif k is Kind.P7D:
            out = self.base.end_values()
        elif k is Kind.SEVEN_HEAD:
            out = self._seven_head(t_flex)
        else:
            model = self.per_window.get(float(t_flex))
            if model is None:
                raise UntrainedMethod(f"{self.name} was not trained for t_flex={t_flex:g}")
            out = model.end_values()
        return clip(np.asarray(out, dtype=float))

    def _seven_head(self, t_flex):
        days = self.head_days
        j = int(np.searchsorted(days, t_flex))
        if j < len(days) and days[j] == t_flex:
            return self.heads[j]
        w = (t_flex - days[j - 1]) / (days[j] - days[j - 1])
        return (1.0 - w) * self.heads[j - 1] + w * self.heads[j]

    def predict(self, event, t_flex: float) -> float:
        """Prediction for one event (or a bare segment id)."""
        return float(self.predict_segments(t_flex)[_as_segment_index(event)])

    def predict_array(self, segments: np.ndarray, t_flex: float) -> np.ndarray:
        return self.predict_segments(t_flex)[segments]

    def dump(self) -> dict:
        """Per-segment head values, JSON-ready."""
        def two_head(m: TwoHead):
            out = {"t_end": m.t_end, "short": m.short.values.tolist()}
            if m.cond is not None:
                out["cond"] = m.cond.values.tolist()
            return out

        out = {"kind": self.kind.value}
        if self.base is not None:
            out["base"] = two_head(self.base)
        if self.design is not None:
            out["alpha"] = self.design.to_dict()
        if self.per_window:
            out["per_window"] = {f"{t:g}": two_head(m) for t, m in sorted(self.per_window.items())}
        if self.heads is not None:
            out["heads"] = {f"{d:g}": h.tolist() for d, h in zip(self.head_days, self.heads)}
        return out


def default_t_flex_grid(t_short: float, t_long: float) -> list:
    grid = [float(t) for t in np.arange(math.ceil(t_short), math.floor(t_long) + 1)]
    if grid[0] != t_short:
        grid.insert(0, float(t_short))
    if grid[-1] != t_long:
        grid.append(float(t_long))
    return grid


def train_seven_head(
    log: EventLog,
    snapshot_day: float,
    windows: WindowSpec,
    settings: TrainingSettings,
    num_segments: int,
    gamma: Optional[float] = None,
) -> Method:
    """One rate head per day ``t_short..t_long``, all waiting ``t_long`` days.

    After fitting, each head is pulled toward the cross-head mean by
    ``gamma`` to mimic interference between jointly trained tasks.
    """
    gamma = settings.seven_head_gamma if gamma is None else gamma
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    cutoff = snapshot_day - windows.t_long
    start = -math.inf if settings.window_days is None else cutoff - settings.window_days
    mask = (log.day >= start) & (log.day <= cutoff)
    if not mask.any():
        raise InsufficientData(f"no events before cutoff {cutoff:g} for the per-day heads")
    days = np.array(default_t_flex_grid(windows.t_short, windows.t_long))
    heads = []
    for d in days:
        lab, _ = _kernels.matured_labels(log.day, log.converted, log.delay, d, snapshot_day)
        heads.append(BucketEstimator.from_arrays(log.segment, lab, mask, num_segments, settings.smoothing).values)
    heads = np.vstack(heads)
    heads = (1.0 - gamma) * heads + gamma * heads.mean(axis=0, keepdims=True)
    return Method(Kind.SEVEN_HEAD, windows.t_short, windows.t_long, head_days=days, heads=heads)


def train_methods(
    kinds: Sequence,
    log: EventLog,
    snapshot_day: float,
    windows: WindowSpec,
    designs: Optional[Mapping[str, AlphaDesign]] = None,
    settings: TrainingSettings = TrainingSettings(),
    t_flex_grid: Optional[Sequence[float]] = None,
    num_segments: Optional[int] = None,
) -> Dict[str, Method]:
    """Train several methods at one snapshot, sharing the base model.

    ``designs`` maps alpha family to design; missing families use the
    default betas. Result is keyed by method name, in ``kinds`` order.
    """
    num_segments = num_segments or log.num_segments
    grid = list(t_flex_grid) if t_flex_grid is not None else default_t_flex_grid(windows.t_short, windows.t_long)
    designs = dict(designs or {})
    base = None
    out: Dict[str, Method] = {}
    for kind in map(Kind, kinds):
        if kind.is_interp or kind in (Kind.P1D, Kind.P7D):
            if base is None:
                base = train_mtml_base(log, snapshot_day, windows, settings, num_segments)
        if kind.is_interp:
            fam = INTERP_FAMILY[kind]
            design = designs.get(fam) or AlphaDesign(fam, DEFAULT_BETAS[fam])
            design.validate(windows.t_short, windows.t_long)
            out[kind.value] = Method(kind, windows.t_short, windows.t_long, base=base, design=design)
        elif kind in (Kind.P1D, Kind.P7D):
            out[kind.value] = Method(kind, windows.t_short, windows.t_long, base=base)
        elif kind is Kind.SEVEN_HEAD:
            out[kind.value] = train_seven_head(log, snapshot_day, windows, settings, num_segments)
        else:
            out[kind.value] = _train_per_window(kind, log, snapshot_day, windows, settings, grid, num_segments)
    return out


def _train_per_window(kind, log, snapshot_day, windows, settings, grid, num_segments) -> Method:
    per_window = {}
    for t in grid:
        t = float(t)
        WindowSpec(windows.t_short, windows.t_long, t)
        if kind is Kind.DEDICATED:
            # labels must mature for t before an event can be used by either head
            cutoff, oracle = snapshot_day - t, False
        else:
            cutoff, oracle = snapshot_day, True
        per_window[t] = _train_two_head(
            log, num_segments, snapshot_day, windows.t_short, t, cutoff, cutoff, settings, oracle=oracle
        )
    return Method(kind, windows.t_short, windows.t_long, per_window=per_window)


def train_method(
    kind,
    log: EventLog,
    snapshot_day: float,
    windows: WindowSpec,
    alpha_design: Optional[AlphaDesign] = None,
    seven_head_pool: Optional[float] = None,
    settings: TrainingSettings = TrainingSettings(),
    t_flex_grid: Optional[Sequence[float]] = None,
    num_segments: Optional[int] = None,
) -> Method:
    """Train a single method; see :func:`train_methods`."""
    kind = Kind(kind)
    if seven_head_pool is not None:
        settings = TrainingSettings(settings.smoothing, settings.window_days, seven_head_pool)
    designs = {alpha_design.family: alpha_design} if alpha_design is not None else None
    if alpha_design is not None and kind.is_interp and INTERP_FAMILY[kind] != alpha_design.family:
        raise ValueError(f"{kind.value} cannot use a {alpha_design.family} design")
    return train_methods([kind], log, snapshot_day, windows, designs, settings, t_flex_grid, num_segments)[kind.value]


def interp_method(base: TwoHead, design: AlphaDesign, t_short: float, t_long: float, name: str = "") -> Method:
    """Wrap an already trained base with another alpha design."""
    design.validate(t_short, t_long)
    return Method(FAMILY_KIND[design.family], t_short, t_long, name=name, base=base, design=design)


def dump_methods(methods: Mapping[str, Method]) -> dict:
    return {name: m.dump() for name, m in methods.items()}
