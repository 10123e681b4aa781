"""Command-line experiment runner.

    fastk simulate <config.json>   one trace CSV per (mode, seed)
    fastk bounds   <config.json>   fixed-k and adaptive bound curves (CSV + SVG)
    fastk schedule <config.json>   bound-optimal switching times (JSON)
    fastk plot <out.svg> <trace.csv>...

Configs are JSON, validated against ``config.schema.json``; unknown keys are
rejected. Everything is a pure function of the config: seeds live there.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from . import bounds as bnd
from ._io import atomic_write_text, fmt
from .cluster import ResponseTimeModel, order_stat_summary
from .datagen import generate_synthetic
from .engine import (
    AdaptiveMode,
    AsyncMode,
    FixedMode,
    Mode,
    Problem,
    RunConfig,
    ScheduledMode,
    TraceRecord,
    read_trace_csv,
    run,
    write_trace_csv,
)
from .svgplot import line_chart

log = logging.getLogger("fastk")

EXIT_OK, EXIT_RUN_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def load_schema() -> dict:
    return json.loads(resources.files("fastk").joinpath("config.schema.json").read_text())


# --------------------------------------------------------------------------- #
# config parsing
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class BoundsBlock:
    params: bnd.BoundParams
    k_start: int = 1
    scale_by_rate: bool = True
    order_stats: str = "auto"
    mc_samples: int = 10**6
    mc_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    path: Path
    workers: int
    response_time: ResponseTimeModel
    dataset: Optional[dict] = None
    eta: Optional[float] = None
    max_iterations: Optional[int] = None
    modes: tuple[tuple[str, dict], ...] = ()
    seeds: tuple[int, ...] = (0,)
    output_dir: Optional[str] = None
    horizon: Optional[float] = None
    grid_points: int = bnd.DEFAULT_GRID_POINTS
    bounds: Optional[BoundsBlock] = None
    text: str = field(default="", repr=False)

    def require(self, *keys: str, why: str) -> None:
        missing = [k for k in keys if getattr(self, k) in (None, ())]
        if missing:
            raise ConfigError(f"{self.path}: {why} needs {', '.join(missing)}")


def _line_of(text: str, path: list, extra_key: Optional[str] = None) -> int:
    """Best-effort source line for a JSON path: walk the string keys in order."""
    lines = text.splitlines()
    pos = 0
    keys = [p for p in path if isinstance(p, str)]
    if extra_key:
        keys.append(extra_key)
    line = 1
    for key in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if not m:
            break
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return min(line, max(len(lines), 1))


def parse_config(path: Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for err in errors:
            m = re.search(r"\('([^']+)' was unexpected", err.message)
            line = _line_of(text, list(err.absolute_path), m.group(1) if m else None)
            where = "/".join(map(str, err.absolute_path)) or "<root>"
            msgs.append(f"{path}:{line}: {where}: {err.message}")
        raise ConfigError("\n".join(msgs))

    labels = []
    modes = []
    for i, entry in enumerate(raw.get("modes", [])):
        label = entry.get("label") or _default_label(entry)
        if label in labels:
            raise ConfigError(f"{path}:{_line_of(text, ['modes'])}: modes/{i}: duplicate run label {label!r}; add a 'label'")
        labels.append(label)
        modes.append((label, entry))

    bounds_block = None
    if "bounds" in raw:
        b = dict(raw["bounds"])
        extra = {k: b.pop(k) for k in ("k_start", "scale_by_rate", "order_stats", "mc_samples", "mc_seed") if k in b}
        try:
            params = bnd.BoundParams(**b)
        except ValueError as exc:
            raise ConfigError(f"{path}:{_line_of(text, ['bounds'])}: bounds: {exc}") from None
        bounds_block = BoundsBlock(params, **extra)

    ds = raw.get("dataset")
    return ExperimentConfig(
        path=Path(path),
        workers=raw["workers"],
        response_time=ResponseTimeModel.from_dict(raw["response_time"]),
        dataset=ds,
        eta=raw.get("eta"),
        max_iterations=raw.get("max_iterations"),
        modes=tuple(modes),
        seeds=tuple(raw.get("seeds", [0])),
        output_dir=raw.get("output_dir"),
        horizon=raw.get("horizon"),
        grid_points=raw.get("grid_points", bnd.DEFAULT_GRID_POINTS),
        bounds=bounds_block,
        text=text,
    )


def _default_label(entry: dict) -> str:
    return f"fixed_k{entry['k']}" if entry["mode"] == "fixed" else entry["mode"]


def build_mode(cfg: ExperimentConfig, entry: dict) -> Mode:
    kind = entry["mode"]
    if kind == "fixed":
        return FixedMode(entry["k"])
    if kind == "adaptive":
        burnin = entry.get("burnin", 200)
        if isinstance(burnin, dict):
            cfg.require("dataset", why="burnin as fraction_of_m")
            burnin = int(round(burnin["fraction_of_m"] * cfg.dataset["m"]))
        return AdaptiveMode(
            k_start=entry.get("k_start", 1),
            step=entry.get("step", 1),
            thresh=entry.get("thresh", 10),
            burnin=burnin,
            k_cap=entry.get("k_cap"),
        )
    if kind == "scheduled":
        if ("schedule" in entry) == bool(entry.get("from_bounds")):
            raise ConfigError(f"{cfg.path}: scheduled mode needs exactly one of 'schedule' or 'from_bounds': true")
        if "schedule" in entry:
            sched = bnd.SwitchSchedule.from_dict({**entry["schedule"], "k_max": cfg.workers})
        else:
            sched = compute_schedule(cfg)
        return ScheduledMode(sched)
    return AsyncMode(horizon=entry.get("horizon"), eta=entry.get("eta"))


def _order_stats(cfg: ExperimentConfig):
    b = cfg.bounds
    return order_stat_summary(
        cfg.response_time,
        cfg.workers,
        scale_by_rate=b.scale_by_rate,
        method=b.order_stats,
        samples=b.mc_samples,
        seed=b.mc_seed,
    )


def compute_schedule(cfg: ExperimentConfig) -> bnd.SwitchSchedule:
    cfg.require("bounds", why="a bound-optimal schedule")
    return bnd.switching_schedule(cfg.bounds.params, _order_stats(cfg), cfg.workers, cfg.bounds.k_start)


# --------------------------------------------------------------------------- #
# simulate
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=4)
def _problem(m: int, d: int, seed: int, noise_std: float, n: int) -> Problem:
    return Problem.build(generate_synthetic(m, d, seed, noise_std=noise_std), n)


def _execute(rc: RunConfig, horizon: Optional[float]) -> list[TraceRecord]:
    problem = _problem(rc.m, rc.d, rc.data_seed, rc.noise_std, rc.n)
    if isinstance(rc.mode, AsyncMode) and rc.mode.horizon is None:
        rc = replace(rc, mode=replace(rc.mode, horizon=horizon))
    return run(rc, problem)


def _summary(label: str, seed: int, recs: list[TraceRecord]) -> str:
    last = recs[-1]
    switches = [(round(r.wall_clock, 3), r.k) for r in recs if r.switched]
    s = f"{label:<14} seed={seed:<4} updates={len(recs):<7} wall_clock={last.wall_clock:<12.6g} error={last.error:.6g}"
    if switches:
        s += " switches(t,k_before)=" + ",".join(f"({t:g},{k})" for t, k in switches)
    return s


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    cfg.require("dataset", "eta", "max_iterations", "modes", why="simulate")
    ds = cfg.dataset
    built = [(label, build_mode(cfg, entry)) for label, entry in cfg.modes]
    base = dict(
        m=ds["m"],
        d=ds["d"],
        n=cfg.workers,
        eta=cfg.eta,
        max_iterations=cfg.max_iterations,
        response_time=cfg.response_time,
        data_seed=ds["seed"],
        noise_std=ds.get("noise_std", 1.0),
    )
    try:
        for label, mode in built:
            RunConfig(mode=mode, **base)
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from None

    sync = [(lab, m) for lab, m in built if not isinstance(m, AsyncMode)]
    asyn = [(lab, m) for lab, m in built if isinstance(m, AsyncMode)]
    results: dict[tuple[str, int], list[TraceRecord]] = {}
    failures: list[str] = []

    def collect(tasks, horizons):
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futs = {key: pool.submit(_execute, rc, horizons.get(key[1])) for key, rc in tasks}
                for key, fut in futs.items():
                    try:
                        results[key] = fut.result()
                    except Exception as exc:  # noqa: BLE001 - reported per run
                        failures.append(f"{key[0]} seed={key[1]}: {exc}")
        else:
            for key, rc in tasks:
                try:
                    results[key] = _execute(rc, horizons.get(key[1]))
                except Exception as exc:  # noqa: BLE001 - reported per run
                    failures.append(f"{key[0]} seed={key[1]}: {exc}")

    tasks = [((lab, seed), RunConfig(mode=m, master_seed=seed, **base)) for seed in cfg.seeds for lab, m in sync]
    collect(tasks, {})
    horizons = {}
    for seed in cfg.seeds:
        ends = [results[(lab, seed)][-1].wall_clock for lab, _ in sync if (lab, seed) in results]
        horizons[seed] = max(ends) if ends else cfg.horizon
    if asyn:
        for seed in cfg.seeds:
            if horizons[seed] is None and any(m.horizon is None for _, m in asyn):
                failures.append(f"async seed={seed}: no horizon (set modes[].horizon or top-level horizon)")
        tasks = [
            ((lab, seed), RunConfig(mode=m, master_seed=seed, **base))
            for seed in cfg.seeds
            for lab, m in asyn
            if m.horizon is not None or horizons[seed] is not None
        ]
        collect(tasks, horizons)

    for seed in cfg.seeds:
        for label, _ in built:
            recs = results.get((label, seed))
            if recs is None:
                continue
            if not recs:
                failures.append(f"{label} seed={seed}: no updates before the horizon")
                continue
            try:
                path = write_trace_csv(recs, out_dir / f"{label}_seed{seed}.csv")
            except OSError as exc:
                failures.append(f"{label} seed={seed}: cannot write trace ({exc})")
                continue
            print(_summary(label, seed, recs))
            log.info("wrote %s", path)
    if failures:
        print("failed runs:", file=sys.stderr)
        for f in failures:
            print(f"  {f}", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


# --------------------------------------------------------------------------- #
# bounds / schedule
# --------------------------------------------------------------------------- #


def bounds_table(cfg: ExperimentConfig):
    """Time grid, fixed-k curves (k = 1..n) and the adaptive curve."""
    cfg.require("bounds", why="bounds")
    if cfg.horizon is None:
        raise ConfigError(f"{cfg.path}: bounds needs a 'horizon'")
    stats = _order_stats(cfg)
    params = cfg.bounds.params
    grid = bnd.time_grid(cfg.horizon, cfg.grid_points)
    sched = bnd.switching_schedule(params, stats, cfg.workers, cfg.bounds.k_start)
    fixed = {k: bnd.fixed_k_curve(params, stats, k, grid) for k in range(1, cfg.workers + 1)}
    adaptive = [b for _, b in bnd.piecewise_bound_curve(params, sched, stats, grid)]
    return grid, fixed, adaptive, sched


def cmd_bounds(cfg: ExperimentConfig, out_dir: Path) -> int:
    grid, fixed, adaptive, sched = bounds_table(cfg)
    cols = [f"k{k}" for k in fixed] + ["adaptive"]
    lines = ["t," + ",".join(cols)]
    for i, t in enumerate(grid):
        lines.append(",".join([fmt(t)] + [fmt(fixed[k][i]) for k in fixed] + [fmt(adaptive[i])]))
    csv_path = atomic_write_text(out_dir / "bounds.csv", "\n".join(lines) + "\n")
    series = [(f"k={k}", grid.tolist(), fixed[k].tolist()) for k in fixed]
    series.append(("adaptive", grid.tolist(), adaptive))
    svg_path = atomic_write_text(
        out_dir / "bounds.svg", line_chart(series, title="error bound vs wall-clock time", ylabel="error bound")
    )
    for t, k in sched.entries:
        print(f"switch to k={k} at t={t:.6g}")
    for note in sched.diagnostics:
        print(f"note: {note}")
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def cmd_schedule(cfg: ExperimentConfig, out_dir: Path) -> int:
    sched = compute_schedule(cfg)
    text = sched.to_json()
    atomic_write_text(out_dir / "schedule.json", text)
    atomic_write_text(out_dir / "schedule.csv", sched.to_csv())
    sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(out_svg: Path, traces: list[Path]) -> int:
    series = []
    for p in traces:
        recs = read_trace_csv(p)
        series.append((Path(p).stem, [r.wall_clock for r in recs], [r.error for r in recs]))
    atomic_write_text(out_svg, line_chart(series, title="error vs wall-clock time"))
    print(f"wrote {out_svg}")
    return EXIT_OK


# --------------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastk", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("simulate", "run the configured modes for every seed"),
        ("bounds", "fixed-k and adaptive error-bound curves"),
        ("schedule", "bound-optimal switching times"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", type=Path)
        p.add_argument("--seed", type=int, help="override the config seeds (Monte Carlo seed for bounds/schedule)")
        p.add_argument("--out-dir", type=Path, help="override output_dir")
        if name == "simulate":
            p.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")
    p = sub.add_parser("plot", help="overlay trace CSVs as an error-vs-time SVG")
    p.add_argument("out", type=Path)
    p.add_argument("traces", type=Path, nargs="+")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "plot":
            return cmd_plot(args.out, args.traces)
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seeds=(args.seed,))
            if cfg.bounds is not None:
                cfg = replace(cfg, bounds=replace(cfg.bounds, mc_seed=args.seed))
        out_dir = args.out_dir or Path(cfg.output_dir or ".")
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, jobs=args.jobs)
        if args.command == "bounds":
            return cmd_bounds(cfg, out_dir)
        return cmd_schedule(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (bnd.ScheduleError, bnd.EmptyGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
