"""Experiment configuration: one JSON file drives every subcommand.

Missing keys fall back to :data:`DEFAULTS`. ``--set a.b.c=value`` style
overrides are applied to the raw mapping before it is resolved, and the
``FOW_SEED`` environment variable replaces the top-level seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core_types import WindowSpec
from .delay_models import DelayDistribution
from .estimators import DEFAULT_BETAS, Kind, TrainingSettings
from .interpolation import FAMILIES, AlphaDesign, InfeasibleBeta
from .simulation import Drift, StreamConfig

SEED_ENV = "FOW_SEED"


class ConfigError(ValueError):
    """The configuration cannot be parsed or is inconsistent."""


class DataError(ValueError):
    """Input data is missing, empty or does not belong to the configuration."""


DEFAULTS: dict = {
    "seed": 0,
    "stream": {
        "num_segments": 50,
        "days": 120,
        "events_per_day": 2000,
        # segments s and s + S/2 share a base rate and sit half a period apart
        "base_p_conv": {"geometric": [0.03, 0.5], "paired": True},
        "delay": {"family": "zero_inflated_exponential", "rate": 1.0},
        "delays": {},
        "drift": {"kind": "sinusoid", "amplitude": 0.3, "period": 28.0},
    },
    "windows": {"t_short": 1.0, "t_long": 7.0, "t_flex_grid": [1, 2, 3, 4, 5, 6, 7]},
    "methods": [k.value for k in Kind],
    "designs": {fam: {"family": fam, "beta": b} for fam, b in DEFAULT_BETAS.items()},
    "training": {"smoothing": 2.0, "window_days": 4.0, "seven_head_gamma": 0.3},
    "schedule": {"train_days": [100, 101, 102, 103, 104, 105, 106], "eval_horizon_days": 7.0},
    "sweep": {
        "linear": np.linspace(0.0, 1.0 / 6.0, 6).tolist(),
        "rational": np.linspace(0.0, 0.95, 6).tolist(),
        "exponential": np.linspace(0.05, 3.0, 6).tolist(),
    },
    "log": None,
    "output_dir": "out",
}


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    seed: int
    stream: StreamConfig
    windows: WindowSpec
    t_flex_grid: Tuple[float, ...]
    methods: Tuple[str, ...]
    designs: Dict[str, AlphaDesign]
    training: TrainingSettings
    train_days: Tuple[float, ...]
    eval_horizon_days: float
    sweep: Dict[str, Tuple[float, ...]]
    log: Optional[str]
    output_dir: str

    def config_hash(self) -> str:
        """Hash of the whole resolved configuration (output dir excluded)."""
        blob = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return _hash(blob)

    def stream_hash(self) -> str:
        return self.stream.config_hash()


def _hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# ------------------------------------------------------------------ raw layer


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k not in ("delays", "delay", "base_p_conv"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, assignment: str) -> None:
    """Apply one ``path=value`` assignment in place.

    The path is dot separated; numeric components index into lists. The
    value is parsed as JSON when possible and kept as a string otherwise.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form path=value")
    path, text = assignment.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {assignment!r} has an empty path")
    node = raw
    for key in keys[:-1]:
        node = _step(node, key, assignment, create=True)
    last = keys[-1]
    value = _parse_value(text)
    if isinstance(node, list):
        idx = _index(node, last, assignment)
        node[idx] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(f"override {assignment!r} walks into a scalar")


def _step(node, key, assignment, create):
    if isinstance(node, list):
        return node[_index(node, key, assignment)]
    if isinstance(node, dict):
        if key not in node or node[key] is None:
            if not create:
                raise ConfigError(f"override {assignment!r}: no key {key!r}")
            node[key] = {}
        return node[key]
    raise ConfigError(f"override {assignment!r} walks into a scalar")


def _index(node: list, key: str, assignment: str) -> int:
    try:
        idx = int(key)
    except ValueError:
        raise ConfigError(f"override {assignment!r}: {key!r} is not a list index") from None
    if not -len(node) <= idx < len(node):
        raise ConfigError(f"override {assignment!r}: index {idx} out of range")
    return idx


def load_raw(path: Optional[str] = None, overrides: Sequence[str] = (), env: Optional[Mapping] = None) -> dict:
    """Defaults, then the file, then ``--set`` overrides, then ``FOW_SEED``."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(user) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        raw = _merge(raw, user)
    for assignment in overrides:
        apply_override(raw, assignment)
    env = os.environ if env is None else env
    if env.get(SEED_ENV, "") != "":
        try:
            raw["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    return raw


# ------------------------------------------------------------------ resolution


def _base_rates(spec, num_segments: int) -> List[float]:
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return [float(spec)] * num_segments
    if isinstance(spec, list):
        if len(spec) != num_segments:
            raise ConfigError(f"base_p_conv has {len(spec)} entries for {num_segments} segments")
        return [float(p) for p in spec]
    if isinstance(spec, Mapping) and "geometric" in spec:
        low, high = (float(x) for x in spec["geometric"])
        if not 0 < low <= high <= 1:
            raise ConfigError("base_p_conv.geometric needs 0 < low <= high <= 1")
        if spec.get("paired", False):
            if num_segments % 2:
                raise ConfigError("paired base rates need an even number of segments")
            half = np.geomspace(low, high, num_segments // 2)
            rates = np.tile(half, 2)
        else:
            rates = np.geomspace(low, high, num_segments)
        # rounded so the resolved config prints and hashes stably
        return [round(float(p), 6) for p in rates]
    raise ConfigError("base_p_conv must be a number, a list or {'geometric': [low, high]}")


def _edges(spec):
    """``bin_edges`` as a list, or ``{"pieces": [[start, stop, step], ...]}``.

    Pieces are concatenated; each piece includes its stop value.
    """
    if not isinstance(spec, Mapping):
        return spec
    out = []
    for start, stop, step in spec["pieces"]:
        n = int(round((stop - start) / step))
        piece = start + step * np.arange(n + 1)
        out.extend(piece[1:] if out and np.isclose(piece[0], out[-1]) else piece)
    return [float(x) for x in out]


def _delays(stream: Mapping, num_segments: int) -> Tuple[DelayDistribution, ...]:
    default = stream.get("delay")
    by_segment = {}
    for k, v in (stream.get("delays") or {}).items():
        try:
            s = int(k)
        except ValueError:
            raise ConfigError(f"delays key {k!r} is not a segment id") from None
        if not 0 <= s < num_segments:
            raise ConfigError(f"delays refers to segment {s} outside 0..{num_segments - 1}")
        by_segment[s] = v
    out = []
    for s in range(num_segments):
        spec = by_segment.get(s, default)
        if spec is None:
            raise ConfigError(f"segment {s} has no delay distribution")
        if isinstance(spec, Mapping) and "bin_edges" in spec:
            spec = {**spec, "bin_edges": _edges(spec["bin_edges"])}
        # the stream's base rate decides conversion; the law only shapes the delay
        out.append(DelayDistribution.from_dict(spec, p_conv=1.0))
    return tuple(out)


def _float_tuple(values, name) -> Tuple[float, ...]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{name} must be a non-empty list")
    return tuple(float(v) for v in values)


def resolve(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping and build the typed configuration.

    Infeasible betas are not caught here; they surface as
    :class:`~fow.interpolation.InfeasibleBeta` so callers can tell them
    apart from other configuration errors.
    """
    try:
        seed = int(raw["seed"])
        st = raw["stream"]
        num_segments = int(st["num_segments"])
        if num_segments < 1:
            raise ConfigError("stream.num_segments must be at least 1")
        stream = StreamConfig(
            num_segments=num_segments,
            days=int(st["days"]),
            events_per_day=int(st["events_per_day"]),
            base_p_conv=tuple(_base_rates(st["base_p_conv"], num_segments)),
            delays=_delays(st, num_segments),
            drift=Drift(**st.get("drift") or {"kind": "none"}),
            seed=seed,
        )
        w = raw["windows"]
        windows = WindowSpec(float(w["t_short"]), float(w["t_long"]), float(w["t_long"]))
        grid = _float_tuple(w["t_flex_grid"], "windows.t_flex_grid")
        for t in grid:
            if not windows.t_short <= t <= windows.t_long:
                raise ConfigError(f"t_flex {t:g} outside [{windows.t_short:g}, {windows.t_long:g}]")
        methods = tuple(Kind(m).value for m in raw["methods"])
        designs = {}
        for fam, d in (raw.get("designs") or {}).items():
            design = AlphaDesign.from_dict(d)
            if design.family != fam:
                raise ConfigError(f"designs.{fam} declares family {design.family!r}")
            designs[fam] = design
        tr = raw["training"]
        window_days = tr.get("window_days")
        training = TrainingSettings(
            float(tr["smoothing"]),
            None if window_days is None else float(window_days),
            float(tr["seven_head_gamma"]),
        )
        sc = raw["schedule"]
        train_days = _float_tuple(sc["train_days"], "schedule.train_days")
        horizon = float(sc["eval_horizon_days"])
        sweep = {}
        for fam, grid_b in (raw.get("sweep") or {}).items():
            if fam not in FAMILIES:
                raise ConfigError(f"sweep family {fam!r} unknown")
            sweep[fam] = _float_tuple(grid_b, f"sweep.{fam}")
    except (ConfigError, InfeasibleBeta):
        raise
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(
        raw=raw,
        seed=seed,
        stream=stream,
        windows=windows,
        t_flex_grid=grid,
        methods=methods,
        designs=designs,
        training=training,
        train_days=train_days,
        eval_horizon_days=horizon,
        sweep=sweep,
        log=raw.get("log"),
        output_dir=str(raw.get("output_dir") or "out"),
    )


def load(path: Optional[str] = None, overrides: Sequence[str] = (), env: Optional[Mapping] = None) -> ExperimentConfig:
    return resolve(load_raw(path, overrides, env))
