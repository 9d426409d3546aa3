"""``fow`` command line: simulate, analyze, evaluate, recurring, sweep-beta.

Every report is a CSV whose first line is a ``# config_hash=...`` comment.
Exit codes: 0 success, 2 config error, 3 data error, 4 infeasible
hyperparameter.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, DataError, ExperimentConfig, load
from .core_types import EventLog, WindowSpec, read_jsonl, write_jsonl
from .delay_models import InfeasibleFit
from .estimators import DEFAULT_BETAS, InsufficientData, Kind, UntrainedMethod
from .interpolation import AlphaDesign, InfeasibleBeta, alpha, compose_unconditional
from .metrics import DegenerateLabels, ne_delta_percent
from .simulation import ScheduleResult, generate_stream, run_recurring

log = logging.getLogger("fow")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4

LOG_NAME = "events.jsonl"
MANIFEST_SUFFIX = ".manifest.json"
INTERP_COLUMNS = (("linear", "linear"), ("rational", "rational"), ("exponential", "exp"))


def fmt(x) -> str:
    """Numeric CSV cell: 6 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".6g")


def write_report(path: str, cfg: ExperimentConfig, header: Sequence[str], rows: List[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()} stream_hash={cfg.stream_hash()} seed={cfg.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def manifest_path(log_path: str) -> str:
    root, _ = os.path.splitext(log_path)
    return root + MANIFEST_SUFFIX


def load_events(cfg: ExperimentConfig) -> EventLog:
    """The configured event log, or the simulated stream if none is set.

    A log on disk must carry a manifest whose stream hash matches the
    configuration; anything else is a data error.
    """
    if cfg.log is None:
        return generate_stream(cfg.stream)
    path = cfg.log
    if not os.path.exists(path):
        raise DataError(f"event log {path} does not exist")
    mpath = manifest_path(path)
    try:
        with open(mpath, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {mpath}: {exc}") from exc
    if manifest.get("config_hash") != cfg.stream_hash():
        raise DataError(
            f"config hash mismatch: log {path} was written with {manifest.get('config_hash')}, "
            f"this configuration has {cfg.stream_hash()}"
        )
    try:
        return read_jsonl(path)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


# ------------------------------------------------------------------ commands


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> str:
    events = generate_stream(cfg.stream)
    path = os.path.join(out_dir, LOG_NAME)
    write_jsonl(events, path)
    manifest = {
        "seed": cfg.seed,
        "config_hash": cfg.stream_hash(),
        "n_events": len(events),
        "days": cfg.stream.days,
        "events_per_day": cfg.stream.events_per_day,
    }
    with open(manifest_path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def analyze_rows(events: EventLog, windows: WindowSpec, grid: Sequence[float], designs: Dict[str, AlphaDesign]):
    """Empirical CDF per window and its interpolation from the endpoints.

    Only events whose longest window has fully elapsed before the end of
    the log are used, so every row is computed on the same population.
    """
    if len(events) == 0:
        raise DataError("event log is empty")
    end = float(np.ceil(events.day.max()))
    matured = events.select(events.day <= end - windows.t_long)
    if len(matured) == 0:
        raise DataError(f"no event is older than t_long={windows.t_long:g} days")
    cdf = {t: float(np.mean(matured.window_labels(t))) for t in grid}
    p_short = float(np.mean(matured.window_labels(windows.t_short)))
    p_long = float(np.mean(matured.window_labels(windows.t_long)))
    rows = []
    for t in grid:
        est = []
        for fam, _ in INTERP_COLUMNS:
            design = designs.get(fam) or AlphaDesign(fam, DEFAULT_BETAS[fam])
            if t == windows.t_short:
                est.append(p_short)
            elif t == windows.t_long:
                est.append(p_long)
            else:
                a = alpha(design, WindowSpec(windows.t_short, windows.t_long, t))
                est.append(compose_unconditional(p_short, p_long, a))
        if cdf[t] <= 0:
            raise DataError(f"no conversions within {t:g} days; calibration undefined")
        rows.append([t, cdf[t], *est, *[e / cdf[t] for e in est]])
    return rows


def cmd_analyze(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> str:
    for d in cfg.designs.values():
        d.validate(cfg.windows.t_short, cfg.windows.t_long)
    rows = analyze_rows(load_events(cfg), cfg.windows, cfg.t_flex_grid, cfg.designs)
    header = ["day", "empirical_cdf"] + [f"est_{c}" for _, c in INTERP_COLUMNS] + [f"cal_{c}" for _, c in INTERP_COLUMNS]
    path = os.path.join(out_dir, "analyze.csv")
    write_report(path, cfg, header, rows)
    return path


def _schedule(cfg: ExperimentConfig, methods, threads, extra_designs=None) -> ScheduleResult:
    events = load_events(cfg)
    if len(events) == 0:
        raise DataError("event log is empty")
    return run_recurring(
        events,
        cfg.train_days,
        cfg.windows,
        methods,
        eval_horizon_days=cfg.eval_horizon_days,
        designs=cfg.designs,
        settings=cfg.training,
        t_flex_grid=cfg.t_flex_grid,
        num_segments=cfg.stream.num_segments,
        extra_designs=extra_designs,
        threads=threads,
    )


def _with(methods: Sequence[str], required: str) -> List[str]:
    return list(methods) if required in methods else list(methods) + [required]


def cmd_evaluate(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> str:
    """NE and calibration per (t_flex, method), pooled over the train days."""
    result = _schedule(cfg, _with(cfg.methods, Kind.NDUB.value), threads)
    rows = []
    for t in cfg.t_flex_grid:
        ndub = result.pooled(Kind.NDUB.value, t).ne
        for m in cfg.methods:
            stats = result.pooled(m, t)
            rows.append([t, m, stats.ne, stats.calibration, ne_delta_percent(stats.ne, ndub)])
    path = os.path.join(out_dir, "evaluate.csv")
    write_report(path, cfg, ["t_flex", "method", "ne", "calibration", "delta_vs_ndub_pct"], rows)
    return path


def cmd_recurring(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> str:
    """Per train day NE gain of each interpolation method over SEVEN_HEAD."""
    interp = [m for m in cfg.methods if Kind(m).is_interp]
    if not interp:
        raise ConfigError("recurring needs at least one INTERP_* method")
    baseline = Kind.SEVEN_HEAD.value
    result = _schedule(cfg, _with(interp, baseline), threads)
    rows = []
    for day in result.train_days:
        for t in cfg.t_flex_grid:
            base_ne = result.ne(day, baseline, t)
            for m in interp:
                ne = result.ne(day, m, t)
                rows.append([day, t, m, ne, base_ne, ne_delta_percent(ne, base_ne)])
    path = os.path.join(out_dir, "recurring.csv")
    write_report(path, cfg, ["train_day", "t_flex", "method", "ne", "baseline_ne", "gain_pct"], rows)
    return path


def sweep_designs(cfg: ExperimentConfig) -> Dict[str, AlphaDesign]:
    """One design per grid point, validated before anything is trained."""
    designs = {}
    for fam, grid in cfg.sweep.items():
        for beta in grid:
            d = AlphaDesign(fam, beta)
            d.validate(cfg.windows.t_short, cfg.windows.t_long)
            designs[f"{fam}:{beta!r}"] = d
    if not designs:
        raise ConfigError("sweep has no beta grid")
    return designs


def cmd_sweep_beta(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> str:
    """NE gain over SEVEN_HEAD per (family, beta, t_flex), pooled over train days."""
    designs = sweep_designs(cfg)
    baseline = Kind.SEVEN_HEAD.value
    result = _schedule(cfg, [baseline], threads, extra_designs=designs)
    rows = []
    for name, d in designs.items():
        for t in cfg.t_flex_grid:
            base_ne = result.pooled(baseline, t).ne
            rows.append([d.family, d.beta, t, ne_delta_percent(result.pooled(name, t).ne, base_ne)])
    path = os.path.join(out_dir, "sweep_beta.csv")
    write_report(path, cfg, ["family", "beta", "t_flex", "gain_pct"], rows)
    return path


COMMANDS = {
    "simulate": (cmd_simulate, "write the simulated event log and its manifest"),
    "analyze": (cmd_analyze, "empirical CDF and interpolated estimates per window"),
    "evaluate": (cmd_evaluate, "NE grid of every method against NDUB"),
    "recurring": (cmd_recurring, "per train day NE gain over SEVEN_HEAD"),
    "sweep-beta": (cmd_sweep_beta, "NE gain over a beta grid per family"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fow", description="Flexible-window conversion experiments.")
    parser.add_argument("--version", action="version", version=f"fow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field, e.g. stream.drift.amplitude=0.2")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for training/evaluation")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load(args.config, args.overrides)
        out_dir = args.out or cfg.output_dir
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory {out_dir}: {exc}") from exc
        log.info("running %s, config_hash=%s", args.command, cfg.config_hash())
        path = COMMANDS[args.command][0](cfg, out_dir, args.threads)
    except ConfigError as exc:
        print(f"fow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleBeta, InfeasibleFit) as exc:
        print(f"fow: infeasible hyperparameter: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, InsufficientData, DegenerateLabels, UntrainedMethod, OSError) as exc:
        print(f"fow: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
