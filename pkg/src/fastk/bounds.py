"""Error bounds for fastest-k SGD and the bound-optimal schedule for raising k.

With fixed k the expected suboptimality after j iterations is bounded by

    floor_k + (1 - eta*c)**j * (F0 - floor_k),   floor_k = eta*L*sigma2 / (2*c*k*s)

and, in wall-clock time t, j is replaced by (t / mu_k) * (1 - epsilon) where
mu_k is the mean k-th order statistic of the worker response times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import fmt
from .cluster import OrderStatSummary

DEFAULT_GRID_POINTS = 2000


class ScheduleError(ValueError):
    pass


class EmptyGridError(ValueError):
    pass


@dataclass(frozen=True)
class BoundParams:
    eta: float
    L: float
    c: float
    sigma2: float
    s: float
    F0: float
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("eta", "L", "c", "sigma2", "s", "F0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not self.eta * self.c < 1:
            raise ValueError(f"eta*c must be < 1 for the bound to contract, got {self.eta * self.c}")

    def floor(self, k) -> float:
        """Stationary error floor for fastest-k."""
        return self.eta * self.L * self.sigma2 / (2 * self.c * k * self.s)

    @property
    def log_contraction(self) -> float:
        """ln(1 - eta*c), negative."""
        return math.log1p(-self.eta * self.c)

    def replace(self, **changes) -> "BoundParams":
        return BoundParams(**{**self.__dict__, **changes})

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def error_bound_iterations(params: BoundParams, k: int, j):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if np.any(np.asarray(j) < 0):
        raise ValueError("j must be >= 0")
    r = np.exp(params.log_contraction * np.asarray(j, dtype=np.float64))
    out = _mix(r, params.F0, params.floor(k))
    return float(out) if np.ndim(out) == 0 else out


def _mix(r, start: float, fl: float):
    # r*start + (1-r)*floor is exact at both ends (r = 1 and r = 0)
    return r * start + (1 - r) * fl


def _decay(params: BoundParams, mu_k: float, t, epsilon: float):
    return np.exp(params.log_contraction * (np.asarray(t, dtype=np.float64) / mu_k) * (1 - epsilon))


def error_bound_time(params: BoundParams, mu_k: float, k: int, t, *, F0: float | None = None):
    """Bound after wall-clock ``t`` at fixed k. Scalars in, scalar out; arrays broadcast.

    ``F0`` overrides the starting suboptimality (used when a segment of an
    adaptive run restarts from the bound value at a switch).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not mu_k > 0:
        raise ValueError(f"mu_k must be > 0, got {mu_k}")
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    start = params.F0 if F0 is None else F0
    out = _mix(_decay(params, mu_k, t, params.epsilon), start, params.floor(k))
    return float(out) if np.ndim(out) == 0 else out


def confidence_level(params: BoundParams, sigma_k2: float, mu_k: float, t):
    """Probability with which the wall-clock bound holds, clamped to [0, 1]."""
    if params.epsilon == 0:
        raise ValueError("confidence level is undefined for epsilon = 0")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("t must be > 0")
    p = 1 - (sigma_k2 / params.epsilon**2) * (2 / (t * mu_k) + 1 / t**2)
    out = np.clip(p, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SwitchSchedule:
    """Times at which k goes up. ``entries`` holds (switch time, new k); before
    the first entry the run uses ``k_start``."""

    k_start: int
    entries: tuple[tuple[float, int], ...]
    k_max: int
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        times = [t for t, _ in self.entries]
        ks = [self.k_start] + [k for _, k in self.entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("switch times must be strictly increasing")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("k must strictly increase across switches")
        if ks[-1] > self.k_max:
            raise ValueError(f"schedule reaches k={ks[-1]} above k_max={self.k_max}")

    @property
    def final_k(self) -> int:
        return self.entries[-1][1] if self.entries else self.k_start

    def k_at(self, t: float) -> int:
        """Active k at time ``t``: the latest entry whose time is <= t."""
        k = self.k_start
        for time, new_k in self.entries:
            if time <= t:
                k = new_k
            else:
                break
        return k

    def segments(self) -> list[tuple[float, int]]:
        """(start time, k) for each constant-k stretch, starting at t=0."""
        segs = [(0.0, self.k_start)]
        for t, k in self.entries:
            if t == segs[-1][0]:
                segs[-1] = (t, k)
            else:
                segs.append((t, k))
        return segs

    def to_dict(self) -> dict:
        return {
            "k_start": self.k_start,
            "k_max": self.k_max,
            "entries": [{"t": t, "k": k} for t, k in self.entries],
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "SwitchSchedule":
        return cls(
            k_start=int(obj["k_start"]),
            entries=tuple((float(e["t"]), int(e["k"])) for e in obj["entries"]),
            k_max=int(obj["k_max"]),
            diagnostics=tuple(obj.get("diagnostics", ())),
        )

    def to_csv(self) -> str:
        lines = ["t,k"] + [f"{fmt(t)},{k}" for t, k in self.segments()]
        return "\n".join(lines) + "\n"


def switch_delay(params: BoundParams, mu_k: float, mu_next: float, k: int, E: float) -> float:
    """Time to spend at k before moving to k+1, starting from suboptimality E.

    This is where the k and k+1 bound curves through the current value have
    equal slope. All three log arguments must be positive; callers check.
    """
    s, c, L, eta, sigma2 = params.s, params.c, params.L, params.eta, params.sigma2
    bracket = (
        math.log(mu_next - mu_k)
        - math.log(eta * L * sigma2 * mu_k)
        + math.log(2 * c * k * (k + 1) * s * E - eta * L * (k + 1) * sigma2)
    )
    return mu_k / -params.log_contraction * bracket


def switching_schedule(
    params: BoundParams,
    order_stats: OrderStatSummary,
    n: int,
    k_start: int = 1,
) -> SwitchSchedule:
    """Bound-optimal times to go from k to k+1, for k = k_start .. n-1.

    The suboptimality at each switch is not observable, so the bound value at
    that time stands in for it. The epsilon term is dropped here.
    Stops early (with a diagnostic) once the current value sits on the k floor.
    """
    if not 1 <= k_start <= n:
        raise ValueError(f"k_start must lie in [1, {n}], got {k_start}")
    if order_stats.n < n:
        raise ValueError(f"order statistics cover n={order_stats.n} < {n}")
    p = params.replace(epsilon=0.0)
    entries: list[tuple[float, int]] = []
    notes: list[str] = []
    t_prev, E = 0.0, p.F0
    for k in range(k_start, n):
        mu_k, mu_next = order_stats.mean(k), order_stats.mean(k + 1)
        if not mu_next > mu_k:
            raise ScheduleError(
                f"equal order-statistic means at k={k} (mu_k={mu_k}, mu_k+1={mu_next}); "
                "the schedule needs strictly increasing means"
            )
        arg = 2 * p.c * k * (k + 1) * p.s * E - p.eta * p.L * (k + 1) * p.sigma2
        if not arg > 0:
            notes.append(
                f"stopped at k={k}: suboptimality {E!r} is at or below the k={k} floor {p.floor(k)!r}"
            )
            break
        tau = switch_delay(p, mu_k, mu_next, k, E)
        if tau > 0:
            t_prev += tau
            E = error_bound_time(p, mu_k, k, tau, F0=E)
            entries.append((t_prev, k + 1))
        else:
            notes.append(f"switch {k}->{k + 1} is immediate at t={t_prev!r} (formula gave delay {tau!r})")
            if entries and entries[-1][0] == t_prev:
                entries[-1] = (t_prev, k + 1)
            else:
                entries.append((t_prev, k + 1))
    return SwitchSchedule(k_start, tuple(entries), k_max=n, diagnostics=tuple(notes))


def time_grid(horizon: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if not horizon > 0 or points < 1:
        raise EmptyGridError(f"empty time grid (horizon={horizon}, points={points})")
    return np.linspace(0.0, horizon, points)


def fixed_k_curve(params: BoundParams, order_stats: OrderStatSummary, k: int, t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=np.float64)
    if t.size == 0:
        raise EmptyGridError("empty time grid")
    return np.asarray(error_bound_time(params, order_stats.mean(k), k, t), dtype=np.float64).reshape(t.shape)


def piecewise_bound_curve(
    params: BoundParams,
    schedule: SwitchSchedule,
    order_stats: OrderStatSummary,
    t_grid,
) -> list[tuple[float, float]]:
    """Bound of the adaptive policy: each segment restarts the fixed-k bound
    from the value reached at its switch time, so the curve is continuous."""
    t = np.asarray(t_grid, dtype=np.float64)
    if t.size == 0:
        raise EmptyGridError("empty time grid")
    if np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be sorted ascending")
    segs = schedule.segments()
    starts = np.array([s for s, _ in segs])
    start_vals = [params.F0]
    for (t0, k), (t1, _) in zip(segs, segs[1:]):
        start_vals.append(error_bound_time(params, order_stats.mean(k), k, t1 - t0, F0=start_vals[-1]))
    which = np.searchsorted(starts, t, side="right") - 1
    out = np.empty_like(t)
    for i, (t0, k) in enumerate(segs):
        mask = which == i
        if mask.any():
            out[mask] = error_bound_time(params, order_stats.mean(k), k, t[mask] - t0, F0=start_vals[i])
    return list(zip(t.tolist(), out.tolist()))


def curve_to_csv(curve: list[tuple[float, float]]) -> str:
    return "t,bound\n" + "".join(f"{fmt(t)},{fmt(b)}\n" for t, b in curve)


def curve_to_json(curve: list[tuple[float, float]]) -> str:
    return json.dumps([{"t": t, "bound": b} for t, b in curve]) + "\n"
