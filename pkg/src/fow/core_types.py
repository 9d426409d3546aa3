"""Events, windows and labels shared by every other module."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class Event:
    """One impression: when it happened, its segment, and its conversion delay."""

    event_id: int
    day: float
    segment: int
    converted: bool
    delay: Optional[float] = None

    def __post_init__(self):
        if self.day < 0:
            raise ValueError(f"event day must be non-negative, got {self.day}")
        if self.segment < 0:
            raise ValueError(f"segment must be non-negative, got {self.segment}")
        if self.converted:
            if self.delay is None or not self.delay > 0:
                raise ValueError("converted events need a positive delay")
        elif self.delay is not None:
            raise ValueError("delay is only allowed on converted events")


@dataclass(frozen=True)
class WindowSpec:
    """Short, flexible and long optimization windows, in days."""

    t_short: float
    t_long: float
    t_flex: float

    def __post_init__(self):
        if not 0 < self.t_short < self.t_long:
            raise ValueError(
                f"need 0 < t_short < t_long, got t_short={self.t_short}, t_long={self.t_long}"
            )
        if not self.t_short <= self.t_flex <= self.t_long:
            raise ValueError(
                f"window out of range: t_flex={self.t_flex} not in "
                f"[{self.t_short}, {self.t_long}]"
            )

    def at(self, t_flex: float) -> "WindowSpec":
        return WindowSpec(self.t_short, self.t_long, t_flex)


@dataclass(frozen=True)
class LabeledExample:
    """A window label as seen at some snapshot.

    Censored examples carry a provisional label: negative unless the
    conversion has already been observed inside the window.
    """

    event_id: int
    segment: int
    window_label: bool
    censored: bool


def window_label(event: Event, t_window: float) -> bool:
    """Whether the event converted within ``(0, t_window]``."""
    if t_window <= 0:
        raise ValueError("t_window must be positive")
    return bool(event.converted and event.delay <= t_window)


def maturation_label(event: Event, t_window: float, snapshot_day: float) -> LabeledExample:
    """Label for ``event`` as it is visible at ``snapshot_day``.

    Once ``t_window`` days have elapsed the label is final. Before that the
    example is censored, and its label is positive only if the conversion is
    already visible and inside the window.
    """
    if snapshot_day < event.day:
        raise ValueError(f"snapshot {snapshot_day} precedes event day {event.day}")
    elapsed = snapshot_day - event.day
    censored = elapsed < t_window
    visible = event.converted and event.delay <= t_window and event.delay <= elapsed
    return LabeledExample(event.event_id, event.segment, bool(visible), bool(censored))


@dataclass(frozen=True, eq=False)
class EventLog:
    """Column store of events; the simulator and estimators work on this.

    ``delay`` holds NaN for events that never convert.
    """

    event_id: np.ndarray
    day: np.ndarray
    segment: np.ndarray
    converted: np.ndarray
    delay: np.ndarray

    def __post_init__(self):
        n = len(self.event_id)
        for name in ("day", "segment", "converted", "delay"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.event_id)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self.event(i)

    def event(self, i: int) -> Event:
        conv = bool(self.converted[i])
        return Event(
            event_id=int(self.event_id[i]),
            day=float(self.day[i]),
            segment=int(self.segment[i]),
            converted=conv,
            delay=float(self.delay[i]) if conv else None,
        )

    @property
    def num_segments(self) -> int:
        return int(self.segment.max()) + 1 if len(self) else 0

    @classmethod
    def empty(cls) -> "EventLog":
        return cls(
            np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64),
            np.zeros(0, bool), np.zeros(0),
        )

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "EventLog":
        events = list(events)
        return cls(
            event_id=np.array([e.event_id for e in events], dtype=np.int64),
            day=np.array([e.day for e in events], dtype=np.float64),
            segment=np.array([e.segment for e in events], dtype=np.int64),
            converted=np.array([e.converted for e in events], dtype=bool),
            delay=np.array([e.delay if e.converted else np.nan for e in events], dtype=np.float64),
        )

    @classmethod
    def concat(cls, logs: Iterable["EventLog"]) -> "EventLog":
        logs = list(logs)
        if not logs:
            return cls.empty()
        return cls(*(np.concatenate([getattr(lg, f) for lg in logs]) for f in _COLUMNS))

    def select(self, mask: np.ndarray) -> "EventLog":
        return EventLog(*(getattr(self, f)[mask] for f in _COLUMNS))

    def between(self, start: float, stop: float) -> "EventLog":
        """Events with ``start <= day < stop``."""
        return self.select((self.day >= start) & (self.day < stop))

    def window_labels(self, t_window: float) -> np.ndarray:
        if t_window <= 0:
            raise ValueError("t_window must be positive")
        with np.errstate(invalid="ignore"):
            return self.converted & (self.delay <= t_window)

    def maturation_labels(self, t_window: float, snapshot_day: float):
        """Vectorised :func:`maturation_label`; returns ``(label, censored)`` arrays."""
        if len(self) and snapshot_day < self.day.max():
            raise ValueError("snapshot precedes some events in the log")
        return _kernels.matured_labels(self.day, self.converted, self.delay, t_window, snapshot_day)

    def equals(self, other: "EventLog") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=(f in ("day", "delay")))
            for f in _COLUMNS
        )


_COLUMNS = ("event_id", "day", "segment", "converted", "delay")


def write_jsonl(log: EventLog, path) -> None:
    """Write one JSON record per event, UTF-8 with ``\\n`` line endings."""
    ids = log.event_id.tolist()
    days = log.day.tolist()
    segs = log.segment.tolist()
    conv = log.converted.tolist()
    delays = log.delay.tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(ids)):
            rec = {"event_id": ids[i], "day": days[i], "segment": segs[i], "converted": conv[i]}
            if conv[i]:
                rec["delay"] = delays[i]
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def read_jsonl(path) -> EventLog:
    ids, days, segs, conv, delays = [], [], [], [], []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                converted = bool(rec["converted"])
                delay = float(rec["delay"]) if converted else math.nan
                ids.append(int(rec["event_id"]))
                days.append(float(rec["day"]))
                segs.append(int(rec["segment"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad event record ({exc})") from exc
            if converted and not delay > 0:
                raise ValueError(f"{path}:{lineno}: converted event needs a positive delay")
            conv.append(converted)
            delays.append(delay)
    return EventLog(
        np.array(ids, dtype=np.int64),
        np.array(days, dtype=np.float64),
        np.array(segs, dtype=np.int64),
        np.array(conv, dtype=bool),
        np.array(delays, dtype=np.float64),
    )
