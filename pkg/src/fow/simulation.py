"""Synthetic impression streams and the recurring train/evaluate schedule."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .core_types import EventLog, WindowSpec
from .delay_models import DelayDistribution, make_rng
from .estimators import (
    InsufficientData,
    Method,
    TrainingSettings,
    default_t_flex_grid,
    interp_method,
    train_methods,
    train_mtml_base,
)
from .interpolation import AlphaDesign
from .metrics import DegenerateLabels, ne_delta_percent, ne_from_sums

P_CONV_MIN, P_CONV_MAX = 0.001, 0.999

# sub-stream keys under the stream seed
_KEY_EVENTS = 0
_KEY_WALK = 1


@dataclass(frozen=True)
class Drift:
    kind: str = "none"
    amplitude: float = 0.0
    period: float = 28.0
    step: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "sinusoid", "random_walk"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError("drift amplitude must lie in [0, 1)")
        if self.period <= 0:
            raise ValueError("drift period must be positive")
        if self.step < 0:
            raise ValueError("random-walk step must be non-negative")

    def to_dict(self) -> dict:
        if self.kind == "sinusoid":
            return {"kind": self.kind, "amplitude": self.amplitude, "period": self.period}
        if self.kind == "random_walk":
            return {"kind": self.kind, "step": self.step}
        return {"kind": "none"}


@dataclass(frozen=True)
class StreamConfig:
    """Everything that determines a simulated event stream.

    ``delays[s]`` gives the conditional delay law of segment ``s``; its own
    ``p_conv`` is ignored in favour of the (drifted) ``base_p_conv[s]``.
    Sinusoidal drift multiplies the base rate by
    ``1 + A sin(2 pi day / P + 2 pi s / num_segments)``, so segments peak at
    evenly spread phases.
    """

    num_segments: int
    days: int
    events_per_day: int
    base_p_conv: Tuple[float, ...]
    delays: Tuple[DelayDistribution, ...]
    drift: Drift = Drift()
    seed: int = 0

    def __post_init__(self):
        if self.num_segments < 1 or self.days < 0 or self.events_per_day < 0:
            raise ValueError("num_segments >= 1, days >= 0 and events_per_day >= 0 required")
        if len(self.base_p_conv) != self.num_segments:
            raise ValueError("base_p_conv needs one entry per segment")
        if len(self.delays) != self.num_segments:
            raise ValueError("delays needs one distribution per segment")
        if any(not 0.0 <= p <= 1.0 for p in self.base_p_conv):
            raise ValueError("base_p_conv entries must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "num_segments": self.num_segments,
            "days": self.days,
            "events_per_day": self.events_per_day,
            "base_p_conv": list(self.base_p_conv),
            "delays": [d.to_dict() for d in self.delays],
            "drift": self.drift.to_dict(),
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def drifted_p_conv(config: StreamConfig, day: int) -> np.ndarray:
    """Per-segment conversion probability on integer ``day``."""
    base = np.asarray(config.base_p_conv, dtype=float)
    d = config.drift
    if d.kind == "none":
        return base.copy()
    if d.kind == "sinusoid":
        phase = 2.0 * math.pi * np.arange(config.num_segments) / config.num_segments
        mult = 1.0 + d.amplitude * np.sin(2.0 * math.pi * day / d.period + phase)
    else:
        mult = np.exp(_walk_position(config, day))
    return _clamp(base, base * mult)


def _clamp(base: np.ndarray, p: np.ndarray) -> np.ndarray:
    # a segment that never converts keeps rate zero under any drift
    return np.where(base > 0, np.clip(p, P_CONV_MIN, P_CONV_MAX), 0.0)


def _walk_position(config: StreamConfig, day: int) -> np.ndarray:
    pos = np.zeros(config.num_segments)
    for k in range(day):
        pos += config.drift.step * make_rng(config.seed, _KEY_WALK, k).standard_normal(config.num_segments)
    return pos


def _generate_day(config: StreamConfig, day: int, p_conv: np.ndarray) -> EventLog:
    n = config.events_per_day
    rng = make_rng(config.seed, _KEY_EVENTS, day)
    segment = rng.integers(0, config.num_segments, size=n)
    t = day + rng.random(n)
    converted = rng.random(n) < p_conv[segment]
    delay = np.full(n, np.nan)
    groups: Dict[DelayDistribution, List[int]] = {}
    for s, dist in enumerate(config.delays):
        groups.setdefault(dist, []).append(s)
    for dist, segs in groups.items():
        idx = np.flatnonzero(converted & np.isin(segment, segs))
        if len(idx):
            delay[idx] = dist.sample_conditional(rng, len(idx))
    event_id = np.arange(n, dtype=np.int64) + np.int64(day) * np.int64(n)
    return EventLog(event_id, t, segment.astype(np.int64), converted, delay)


def generate_stream(config: StreamConfig, start_day: int = 0, stop_day: Optional[int] = None) -> EventLog:
    """Events for days ``[start_day, stop_day)``; defaults to the whole horizon.

    Each day draws from its own keyed random stream, so any split of the
    horizon concatenates to the same log.
    """
    stop_day = config.days if stop_day is None else stop_day
    if config.drift.kind == "random_walk":
        pos = _walk_position(config, start_day)
    days = []
    for d in range(start_day, stop_day):
        if config.drift.kind == "random_walk":
            base = np.asarray(config.base_p_conv, dtype=float)
            p = _clamp(base, base * np.exp(pos))
            pos = pos + config.drift.step * make_rng(config.seed, _KEY_WALK, d).standard_normal(config.num_segments)
        else:
            p = drifted_p_conv(config, d)
        days.append(_generate_day(config, d, p))
    return EventLog.concat(days)


# ------------------------------------------------------------------ schedule


@dataclass(frozen=True)
class CellStats:
    """Sufficient statistics of one evaluation slice."""

    n: int
    positives: int
    pred_sum: float
    log_loss_sum: float

    @property
    def ne(self) -> float:
        return ne_from_sums(self.log_loss_sum, self.n, self.positives)

    @property
    def calibration(self) -> float:
        if self.positives == 0:
            raise DegenerateLabels("no positive labels in slice")
        return self.pred_sum / self.positives

    def __add__(self, other: "CellStats") -> "CellStats":
        return CellStats(
            self.n + other.n,
            self.positives + other.positives,
            self.pred_sum + other.pred_sum,
            self.log_loss_sum + other.log_loss_sum,
        )


@dataclass
class ScheduleResult:
    """Metrics per ``(train_day, method, t_flex)`` cell.

    Cells that could not be computed are listed in ``skipped`` with a
    reason instead of ``cells``.
    """

    train_days: List[float]
    methods: List[str]
    t_flex_grid: List[float]
    cells: Dict[Tuple[float, str, float], CellStats] = field(default_factory=dict)
    skipped: Dict[Tuple[float, str, float], str] = field(default_factory=dict)

    def cell(self, train_day, method, t_flex) -> CellStats:
        return self.cells[(float(train_day), method, float(t_flex))]

    def ne(self, train_day, method, t_flex) -> float:
        return self.cell(train_day, method, t_flex).ne

    def pooled(self, method: str, t_flex: float) -> CellStats:
        """Cell statistics summed over all train days."""
        stats = [self.cells[(d, method, float(t_flex))] for d in self.train_days if (d, method, float(t_flex)) in self.cells]
        if not stats:
            raise KeyError(f"no cells for {method} at t_flex={t_flex:g}")
        total = stats[0]
        for s in stats[1:]:
            total = total + s
        return total

    def gain(self, train_day, method, baseline, t_flex) -> float:
        return ne_delta_percent(self.ne(train_day, method, t_flex), self.ne(train_day, baseline, t_flex))

    def is_complete(self) -> bool:
        want = len(self.train_days) * len(self.methods) * len(self.t_flex_grid)
        return len(self.cells) + len(self.skipped) == want


def evaluate_cell(method: Method, eval_log: EventLog, t_flex: float) -> CellStats:
    labels = eval_log.window_labels(t_flex)
    pred = method.predict_array(eval_log.segment, t_flex)
    return CellStats(
        n=len(eval_log),
        positives=int(np.count_nonzero(labels)),
        pred_sum=math.fsum(pred.tolist()),
        log_loss_sum=_kernels.log_loss_sum(pred, labels),
    )


def _history_needed(windows: WindowSpec, settings: TrainingSettings) -> float:
    return windows.t_long + (settings.window_days or 0.0)


def run_recurring(
    log: EventLog,
    train_days: Sequence[float],
    windows: WindowSpec,
    methods: Sequence[str],
    eval_horizon_days: float = 7.0,
    designs: Optional[Mapping[str, AlphaDesign]] = None,
    settings: TrainingSettings = TrainingSettings(),
    t_flex_grid: Optional[Sequence[float]] = None,
    num_segments: Optional[int] = None,
    extra_designs: Optional[Mapping[str, AlphaDesign]] = None,
    threads: int = 1,
) -> ScheduleResult:
    """Train every method at each train day and score it on the next days.

    Evaluation uses the true window labels of events in
    ``[train_day, train_day + eval_horizon_days)``. ``extra_designs`` adds
    interpolation methods on the shared base, keyed by the name to report
    them under (used by the beta sweep).
    """
    grid = [float(t) for t in (t_flex_grid or default_t_flex_grid(windows.t_short, windows.t_long))]
    num_segments = num_segments or log.num_segments
    names = list(methods) + list(extra_designs or {})
    result = ScheduleResult([float(d) for d in train_days], names, grid)
    horizon_end = float(np.ceil(log.day.max())) if len(log) else 0.0
    need = _history_needed(windows, settings)

    def run_day(day: float):
        if day - need < 0 or day + eval_horizon_days > horizon_end:
            raise InsufficientData(
                f"train day {day:g} needs {need:g} days of history and "
                f"{eval_horizon_days:g} days of future inside the stream"
            )
        train_log = log.between(day - need - 1e-9, day)
        trained = train_methods(methods, train_log, day, windows, designs, settings, grid, num_segments)
        if extra_designs:
            base = next((m.base for m in trained.values() if m.base is not None), None)
            if base is None:
                base = train_mtml_base(train_log, day, windows, settings, num_segments)
            for name, design in extra_designs.items():
                trained[name] = interp_method(base, design, windows.t_short, windows.t_long, name)
        eval_log = log.between(day, day + eval_horizon_days)
        out = {}
        for name in names:
            for t in grid:
                out[(day, name, t)] = evaluate_cell(trained[name], eval_log, t)
        return out

    days = result.train_days
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run_day, days))
    else:
        outputs = [run_day(d) for d in days]
    for out in outputs:
        result.cells.update(out)
    return result
