"""Least-squares objective ``F(w) = ||Xw - y||^2 / (2m)``.

The error reported by every simulation is ``F(w) - F*`` with ``F*`` taken from
an exact least-squares solve, not from a long SGD run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .datagen import Dataset, Shard


class DimensionMismatch(ValueError):
    pass


class ForeignShardError(ValueError):
    pass


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class ModelState:
    weights: np.ndarray
    iteration: int = 0
    wall_clock: float = 0.0


@dataclass(frozen=True)
class Optimum:
    weights_star: np.ndarray
    loss_star: float

    def to_json(self) -> str:
        return json.dumps({"weights_star": self.weights_star.tolist(), "loss_star": self.loss_star})

    @classmethod
    def from_json(cls, text: str) -> "Optimum":
        obj = json.loads(text)
        return cls(np.asarray(obj["weights_star"], dtype=np.float64), float(obj["loss_star"]))


class Objective(Protocol):
    """What the simulation engine needs from a loss.

    ``stacked_*`` methods take shard data already gathered into ``(n, s, d)``
    and ``(n, s)`` arrays so one call covers every worker.
    """

    def loss(self, dataset: Dataset, weights: np.ndarray) -> float: ...

    def full_gradient(self, dataset: Dataset, weights: np.ndarray) -> np.ndarray: ...

    def partial_gradient(self, dataset: Dataset, shard: Shard, weights: np.ndarray) -> np.ndarray: ...

    def solve_optimum(self, dataset: Dataset) -> Optimum: ...

    def stacked_partial_gradients(self, Xs: np.ndarray, ys: np.ndarray, weights: np.ndarray) -> np.ndarray: ...

    def excess_loss_fn(self, dataset: Dataset, optimum: Optimum) -> Callable[[np.ndarray], float]: ...


def _check_weights(dataset: Dataset, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (dataset.d,):
        raise DimensionMismatch(f"weights must have shape ({dataset.d},), got {w.shape}")
    return w


class LeastSquares:
    def loss(self, dataset: Dataset, weights) -> float:
        w = _check_weights(dataset, weights)
        r = dataset.features @ w - dataset.labels
        return float(r @ r) / (2 * dataset.m)

    def full_gradient(self, dataset: Dataset, weights) -> np.ndarray:
        w = _check_weights(dataset, weights)
        r = dataset.features @ w - dataset.labels
        return dataset.features.T @ r / dataset.m

    def partial_gradient(self, dataset: Dataset, shard: Shard, weights) -> np.ndarray:
        w = _check_weights(dataset, weights)
        if shard.dataset_id != dataset.fingerprint:
            raise ForeignShardError(f"shard of worker {shard.worker_id} belongs to another dataset")
        Xs = dataset.features[shard.row_indices]
        r = Xs @ w - dataset.labels[shard.row_indices]
        return Xs.T @ r / shard.size

    def solve_optimum(self, dataset: Dataset) -> Optimum:
        X, y = dataset.features, dataset.labels
        w, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < dataset.d:
            raise RankDeficientError(f"feature matrix has rank {rank} < d={dataset.d}")
        # one step of iterative refinement tightens the normal-equation residual
        r = X @ w - y
        dw, *_ = np.linalg.lstsq(X, r, rcond=None)
        w = w - dw
        return Optimum(w, self.loss(dataset, w))

    def stacked_partial_gradients(self, Xs, ys, weights) -> np.ndarray:
        r = Xs @ weights - ys
        return np.einsum("nsd,ns->nd", Xs, r) / Xs.shape[1]

    def excess_loss_fn(self, dataset: Dataset, optimum: Optimum) -> Callable[[np.ndarray], float]:
        """``w -> F(w) - F*`` as the quadratic form ``(w - w*)' H (w - w*) / 2``.

        Equal to ``loss(w) - loss_star`` for a least-squares optimum, but never
        loses digits to cancellation near the optimum and costs O(d^2).
        """
        H = dataset.features.T @ dataset.features / dataset.m
        w_star = optimum.weights_star

        def excess(w: np.ndarray) -> float:
            delta = w - w_star
            return 0.5 * float(delta @ H @ delta)

        return excess


LEAST_SQUARES = LeastSquares()

loss = LEAST_SQUARES.loss
full_gradient = LEAST_SQUARES.full_gradient
partial_gradient = LEAST_SQUARES.partial_gradient
solve_optimum = LEAST_SQUARES.solve_optimum
