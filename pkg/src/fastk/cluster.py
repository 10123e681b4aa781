"""Worker response-time models and order statistics of the per-iteration delay.

A fastest-k iteration costs the k-th smallest of n iid response times. For
exponential workers its mean and variance have closed forms in harmonic sums;
other models fall back to a seeded Monte Carlo estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

MC_SAMPLES = 10**6
MC_SEED = 0
_MC_CHUNK = 100_000

_KINDS = ("exponential", "shifted_exponential", "deterministic")


@dataclass(frozen=True)
class ResponseTimeModel:
    kind: str
    rate: float = 1.0
    shift: float = 0.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown response-time kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind in ("exponential", "shifted_exponential") and not self.rate > 0:
            raise ValueError(f"rate must be > 0, got {self.rate}")
        if self.kind == "shifted_exponential" and not self.shift >= 0:
            raise ValueError(f"shift must be >= 0, got {self.shift}")
        if self.kind == "deterministic" and not self.value > 0:
            raise ValueError(f"deterministic value must be > 0, got {self.value}")

    @classmethod
    def exponential(cls, rate: float) -> "ResponseTimeModel":
        return cls("exponential", rate=rate)

    @classmethod
    def shifted_exponential(cls, shift: float, rate: float) -> "ResponseTimeModel":
        return cls("shifted_exponential", rate=rate, shift=shift)

    @classmethod
    def deterministic(cls, value: float) -> "ResponseTimeModel":
        return cls("deterministic", value=value)

    @property
    def continuous(self) -> bool:
        return self.kind != "deterministic"

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(size, self.value, dtype=np.float64)
        draws = rng.exponential(1.0 / self.rate, size=size)
        if self.kind == "shifted_exponential":
            draws += self.shift
        return draws

    def to_dict(self) -> dict:
        if self.kind == "exponential":
            return {"kind": self.kind, "rate": self.rate}
        if self.kind == "shifted_exponential":
            return {"kind": self.kind, "shift": self.shift, "rate": self.rate}
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, obj: dict) -> "ResponseTimeModel":
        return cls(**obj)


def sample_response_times(model: ResponseTimeModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return model.sample(rng, n)


def _check_k(n: int, k: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= {n}, got {k}")


def kth_order_statistic(times, k: int) -> float:
    """k-th smallest entry (1-based). The input is not modified."""
    arr = np.asarray(times, dtype=np.float64)
    _check_k(arr.size, k)
    return float(np.partition(arr, k - 1)[k - 1])


def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


@dataclass(frozen=True)
class OrderStatSummary:
    """Means and variances of X_(1..n). ``method`` is ``"analytic"`` or
    ``"monte_carlo"`` (then ``samples`` and ``seed`` say how it was drawn)."""

    n: int
    means: tuple[float, ...]
    variances: tuple[float, ...]
    method: str = "analytic"
    samples: Optional[int] = None
    seed: Optional[int] = None

    def mean(self, k: int) -> float:
        _check_k(self.n, k)
        return self.means[k - 1]

    def variance(self, k: int) -> float:
        _check_k(self.n, k)
        return self.variances[k - 1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "means": list(self.means),
                "variances": list(self.variances),
                "method": self.method,
                "samples": self.samples,
                "seed": self.seed,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "OrderStatSummary":
        obj = json.loads(text)
        return cls(
            n=obj["n"],
            means=tuple(obj["means"]),
            variances=tuple(obj["variances"]),
            method=obj.get("method", "analytic"),
            samples=obj.get("samples"),
            seed=obj.get("seed"),
        )


def _analytic(model: ResponseTimeModel, n: int, scale_by_rate: bool):
    """Closed-form (means, variances) for all k, or None when unavailable."""
    if model.kind == "deterministic":
        return [model.value] * n, [0.0] * n
    if model.kind != "exponential":
        return None
    rate = model.rate if scale_by_rate else 1.0
    # X_(k) of n unit exponentials is a sum of independent Exp(n), Exp(n-1), ..., Exp(n-k+1)
    means, variances = [], []
    for k in range(1, n + 1):
        terms = range(n - k + 1, n + 1)
        means.append(math.fsum(1.0 / i for i in terms) / rate)
        variances.append(math.fsum(1.0 / (i * i) for i in terms) / rate**2)
    return means, variances


@lru_cache(maxsize=64)
def _monte_carlo(model: ResponseTimeModel, n: int, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    total = np.zeros(n)
    total_sq = np.zeros(n)
    done = 0
    while done < samples:
        rows = min(_MC_CHUNK, samples - done)
        draws = np.sort(model.sample(rng, (rows, n)), axis=1)
        # centre on the first chunk's mean to keep the variance sum well conditioned
        if done == 0:
            centre = draws.mean(axis=0)
        dev = draws - centre
        total += dev.sum(axis=0)
        total_sq += (dev * dev).sum(axis=0)
        done += rows
    mean_dev = total / samples
    means = centre + mean_dev
    variances = (total_sq - samples * mean_dev**2) / (samples - 1)
    return tuple(means.tolist()), tuple(np.maximum(variances, 0.0).tolist())


def order_stat_summary(
    model: ResponseTimeModel,
    n: int,
    *,
    scale_by_rate: bool = True,
    method: str = "auto",
    samples: int = MC_SAMPLES,
    seed: int = MC_SEED,
) -> OrderStatSummary:
    """Moments of every order statistic of ``n`` iid draws.

    ``scale_by_rate=False`` drops the 1/rate factor from the exponential closed
    form, i.e. means become ``H_n - H_{n-k}`` whatever the rate.
    ``method`` is ``"auto"`` (closed form when one exists), ``"analytic"`` or
    ``"monte_carlo"``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if method not in ("auto", "analytic", "monte_carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method != "monte_carlo":
        exact = _analytic(model, n, scale_by_rate)
        if exact is not None:
            return OrderStatSummary(n, tuple(exact[0]), tuple(exact[1]))
        if method == "analytic":
            raise ValueError(f"no closed form for {model.kind} response times")
    if samples < 2:
        raise ValueError("Monte Carlo needs at least 2 samples")
    means, variances = _monte_carlo(model, n, samples, seed)
    return OrderStatSummary(n, means, variances, method="monte_carlo", samples=samples, seed=seed)


def mean_order_statistic(model: ResponseTimeModel, n: int, k: int, **kwargs) -> float:
    """Mean of X_(k); exponential: ``(H_n - H_{n-k}) / rate``."""
    _check_k(n, k)
    return order_stat_summary(model, n, **kwargs).mean(k)


def var_order_statistic(model: ResponseTimeModel, n: int, k: int, **kwargs) -> float:
    """Variance of X_(k); exponential: ``sum_{i=n-k+1}^{n} 1 / (rate * i)^2``."""
    _check_k(n, k)
    return order_stat_summary(model, n, **kwargs).variance(k)
