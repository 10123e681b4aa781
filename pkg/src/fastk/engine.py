"""Simulated synchronous fastest-k SGD (fixed, scheduled and adaptive k) and an
asynchronous single-worker-update baseline.

Simulated time comes only from sampled worker response times; evaluating the
error of an iterate is free.
"""

from __future__ import annotations

import csv
import heapq
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from ._io import atomic_write_text, fmt
from .bounds import SwitchSchedule
from .cluster import ResponseTimeModel
from .datagen import Dataset, Shard, generate_synthetic, shard, stack_shards
from .model import LEAST_SQUARES, ModelState, Objective, Optimum

log = logging.getLogger(__name__)

TRACE_HEADER = ("iteration", "wall_clock", "k", "error", "count_negative", "switched")


# --------------------------------------------------------------------------- #
# run configuration
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class FixedMode:
    k: int
    name = "fixed"

    @property
    def label(self) -> str:
        return f"fixed_k{self.k}"


@dataclass(frozen=True)
class ScheduledMode:
    schedule: SwitchSchedule
    name = "scheduled"
    label = "scheduled"


@dataclass(frozen=True)
class AdaptiveMode:
    k_start: int = 1
    step: int = 1
    thresh: int = 10
    burnin: int = 200
    k_cap: Optional[int] = None
    name = "adaptive"
    label = "adaptive"

    def cap(self, n: int) -> int:
        """Explicit cap, else the largest k_start + i*step that fits in n."""
        if self.k_cap is not None:
            return self.k_cap
        return self.k_start + ((n - self.k_start) // self.step) * self.step


@dataclass(frozen=True)
class AsyncMode:
    """``eta`` overrides the run's step size for the baseline only."""

    horizon: Optional[float] = None
    eta: Optional[float] = None
    name = "async"
    label = "async"


Mode = Union[FixedMode, ScheduledMode, AdaptiveMode, AsyncMode]


@dataclass(frozen=True)
class RunConfig:
    m: int
    d: int
    n: int
    eta: float
    max_iterations: int
    response_time: ResponseTimeModel
    mode: Mode
    data_seed: int = 0
    master_seed: int = 0
    noise_std: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.m % self.n:
            raise ValueError(f"n={self.n} must be >= 1 and divide m={self.m}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        _validate_mode(self.mode, self.n)


def _validate_mode(mode: Mode, n: int) -> None:
    if isinstance(mode, FixedMode):
        if not 1 <= mode.k <= n:
            raise ValueError(f"fixed k={mode.k} outside [1, {n}]")
    elif isinstance(mode, ScheduledMode):
        ks = [mode.schedule.k_start] + [k for _, k in mode.schedule.entries]
        if ks[0] < 1 or ks[-1] > n:
            raise ValueError(f"schedule k values {ks} outside [1, {n}]")
    elif isinstance(mode, AdaptiveMode):
        if mode.step < 1 or mode.thresh < 0 or mode.burnin < 0:
            raise ValueError("adaptive step must be >= 1; thresh and burnin >= 0")
        if not 1 <= mode.k_start <= mode.cap(n) <= n:
            raise ValueError(f"need 1 <= k_start={mode.k_start} <= k_cap={mode.cap(n)} <= n={n}")
    elif isinstance(mode, AsyncMode):
        if mode.horizon is not None and not mode.horizon > 0:
            raise ValueError(f"async horizon must be > 0, got {mode.horizon}")
        if mode.eta is not None and not mode.eta > 0:
            raise ValueError(f"async eta must be > 0, got {mode.eta}")
    else:
        raise TypeError(f"unknown mode {mode!r}")


@dataclass(eq=False)
class Problem:
    """A dataset split over n workers, with the optimum used to report errors."""

    dataset: Dataset
    shards: list[Shard]
    optimum: Optimum
    objective: Objective = LEAST_SQUARES
    Xs: np.ndarray = field(init=False, repr=False)
    ys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.Xs, self.ys = stack_shards(self.dataset, self.shards)
        self._excess = self.objective.excess_loss_fn(self.dataset, self.optimum)

    @classmethod
    def build(cls, dataset: Dataset, n: int, objective: Objective = LEAST_SQUARES) -> "Problem":
        return cls(dataset, shard(dataset, n), objective.solve_optimum(dataset), objective)

    @classmethod
    def from_config(cls, config: RunConfig) -> "Problem":
        ds = generate_synthetic(config.m, config.d, config.data_seed, noise_std=config.noise_std)
        return cls.build(ds, config.n)

    @property
    def n(self) -> int:
        return len(self.shards)

    def partial_gradients(self, weights: np.ndarray) -> np.ndarray:
        """All n partial gradients at once, shape (n, d)."""
        return self.objective.stacked_partial_gradients(self.Xs, self.ys, weights)

    def worker_gradient(self, worker: int, weights: np.ndarray) -> np.ndarray:
        """Partial gradient of one worker (0-based position)."""
        return self.objective.stacked_partial_gradients(self.Xs[worker : worker + 1], self.ys[worker : worker + 1], weights)[0]

    def error(self, weights: np.ndarray) -> float:
        return self._excess(weights)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    wall_clock: float
    k: int
    error: float
    count_negative: int = 0
    switched: bool = False
    winners: Optional[tuple[int, ...]] = field(default=None, compare=False)

    def csv_row(self) -> str:
        return f"{self.iteration},{fmt(self.wall_clock)},{self.k},{fmt(self.error)},{self.count_negative},{int(self.switched)}"


# --------------------------------------------------------------------------- #
# synchronous fastest-k
# --------------------------------------------------------------------------- #


def fastest_k(times: np.ndarray, k: int) -> np.ndarray:
    """0-based indices of the k smallest times; equal times go to the lower index."""
    return np.argsort(times, kind="stable")[:k]


def step_fastest_k(
    state: ModelState,
    k: int,
    problem: Problem,
    model: ResponseTimeModel,
    rng: np.random.Generator,
    eta: float,
) -> tuple[ModelState, np.ndarray, float, frozenset[int]]:
    """One master update from the first k of n workers to respond.

    Returns the new state, the averaged gradient estimate, the simulated
    duration (k-th order statistic) and the winning worker ids (1-based).
    """
    n = problem.n
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= {n}, got {k}")
    times = model.sample(rng, n)
    order = fastest_k(times, k)
    elapsed = float(times[order[-1]])
    grad = problem.partial_gradients(state.weights)[order].mean(axis=0)
    new_state = ModelState(
        weights=state.weights - eta * grad,
        iteration=state.iteration + 1,
        wall_clock=state.wall_clock + elapsed,
    )
    return new_state, grad, elapsed, frozenset(int(i) + 1 for i in order)


@dataclass(frozen=True)
class PflugState:
    """Counters of the sign test on consecutive gradient estimates.

    ``count_negative`` goes up on a negative inner product and down otherwise;
    a phase transition is declared once it exceeds ``thresh`` with more than
    ``burnin`` iterations since the last switch.
    """

    thresh: int
    burnin: int
    step: int
    count_negative: int = 0
    count_iter: int = 1
    prev_gradient: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


def pflug_update(
    state: PflugState, current_gradient: np.ndarray, k: int, k_cap: int
) -> tuple[PflugState, int, bool]:
    g = np.asarray(current_gradient, dtype=np.float64)
    count_negative, count_iter = state.count_negative, state.count_iter
    if state.prev_gradient is not None:
        if float(g @ state.prev_gradient) < 0:
            count_negative += 1
        else:
            count_negative -= 1
    new_k, switched = k, False
    if count_negative > state.thresh and count_iter > state.burnin and k <= k_cap - state.step:
        new_k, switched = k + state.step, True
        count_negative, count_iter = 0, 0
    count_iter += 1
    new_state = replace(state, count_negative=count_negative, count_iter=count_iter, prev_gradient=g.copy())
    return new_state, new_k, switched


def run(
    config: RunConfig,
    problem: Optional[Problem] = None,
    *,
    record_winners: bool = False,
) -> list[TraceRecord]:
    """Simulate one run; returns one record per master update.

    ``problem`` lets several runs share one dataset; it must match the
    config's n. Async mode is delegated to :func:`run_async`.
    """
    if isinstance(config.mode, AsyncMode):
        return run_async(config, problem)
    if problem is None:
        problem = Problem.from_config(config)
    _check_problem(problem, config)
    mode = config.mode
    n = config.n
    rng = np.random.default_rng(config.master_seed)
    state = ModelState(np.zeros(problem.dataset.d))

    pflug = None
    if isinstance(mode, AdaptiveMode):
        pflug = PflugState(thresh=mode.thresh, burnin=mode.burnin, step=mode.step)
        k, k_cap = mode.k_start, mode.cap(n)
    elif isinstance(mode, FixedMode):
        k = mode.k

    records = []
    for _ in range(config.max_iterations):
        if isinstance(mode, ScheduledMode):
            k = min(mode.schedule.k_at(state.wall_clock), n)
        used_k = k
        state, grad, _, winners = step_fastest_k(state, used_k, problem, config.response_time, rng, config.eta)
        switched = False
        if pflug is not None:
            pflug, k, switched = pflug_update(pflug, grad, used_k, k_cap)
        records.append(
            TraceRecord(
                iteration=state.iteration,
                wall_clock=state.wall_clock,
                k=used_k,
                error=problem.error(state.weights),
                count_negative=pflug.count_negative if pflug is not None else 0,
                switched=switched,
                winners=tuple(sorted(winners)) if record_winners else None,
            )
        )
    return records


def _check_problem(problem: Problem, config: RunConfig) -> None:
    if problem.n != config.n:
        raise ValueError(f"problem has {problem.n} workers, config says {config.n}")


# --------------------------------------------------------------------------- #
# asynchronous baseline
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class AsyncUpdate:
    """One master update of the async baseline. ``staleness`` counts master
    updates between the model version the worker used and the one it updates."""

    iteration: int
    wall_clock: float
    worker: int
    staleness: int
    weights: np.ndarray = field(repr=False)


def iterate_async(
    config: RunConfig, problem: Problem, horizon: float
) -> Iterator[AsyncUpdate]:
    """Event loop: every worker holds one outstanding computation on the model
    version it last received; each completion applies its (possibly stale)
    partial gradient and the worker is handed the fresh model."""
    rng = np.random.default_rng(config.master_seed)
    model = config.response_time
    mode = config.mode
    eta = mode.eta if isinstance(mode, AsyncMode) and mode.eta is not None else config.eta
    w = np.zeros(problem.dataset.d)
    version = 0
    # (finish time, worker, version sent); worker index breaks ties
    events: list[tuple[float, int, int]] = []
    sent: dict[int, np.ndarray] = {}
    for i in range(problem.n):
        sent[i] = w
        heapq.heappush(events, (float(model.sample(rng, 1)[0]), i, version))
    while events:
        t, i, v = heapq.heappop(events)
        if t > horizon:
            return
        g = problem.worker_gradient(i, sent[i])
        w = w - eta * g
        version += 1
        yield AsyncUpdate(version, t, i + 1, version - 1 - v, w)
        sent[i] = w
        heapq.heappush(events, (t + float(model.sample(rng, 1)[0]), i, version))


def run_async(
    config: RunConfig,
    problem: Optional[Problem] = None,
    horizon: Optional[float] = None,
) -> list[TraceRecord]:
    """Async baseline up to ``horizon`` (argument, else the mode's horizon).

    Stops early, with a final ``inf`` error record, if the iterates blow up.
    """
    if not isinstance(config.mode, AsyncMode):
        raise ValueError("run_async needs an AsyncMode config")
    horizon = horizon if horizon is not None else config.mode.horizon
    if horizon is None or not horizon > 0:
        raise ValueError("async run needs a positive wall-clock horizon")
    if problem is None:
        problem = Problem.from_config(config)
    _check_problem(problem, config)
    records = []
    with np.errstate(over="ignore", invalid="ignore"):
        for upd in iterate_async(config, problem, horizon):
            err = problem.error(upd.weights)
            if not math.isfinite(err):
                log.warning("async run diverged at t=%g after %d updates", upd.wall_clock, upd.iteration)
                records.append(TraceRecord(upd.iteration, upd.wall_clock, 1, math.inf))
                break
            records.append(TraceRecord(upd.iteration, upd.wall_clock, 1, err))
    return records


# --------------------------------------------------------------------------- #
# trace files
# --------------------------------------------------------------------------- #


def trace_to_csv(records: list[TraceRecord]) -> str:
    return ",".join(TRACE_HEADER) + "\n" + "".join(r.csv_row() + "\n" for r in records)


def write_trace_csv(records: list[TraceRecord], path) -> Path:
    return atomic_write_text(path, trace_to_csv(records))


def read_trace_csv(path) -> list[TraceRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                it, t, k, err, cn, sw = row
                out.append(TraceRecord(int(it), float(t), int(k), float(err), int(cn), sw == "1"))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad trace row {row!r} ({exc})") from None
    return out
