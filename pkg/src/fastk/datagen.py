"""Synthetic least-squares data and horizontal sharding across workers.

Rows are drawn iid, so the contiguous-block sharding used here is statistically
equivalent to any other equal partition.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ._io import atomic_write_text, fmt

PathLike = Union[str, os.PathLike]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix ``X`` (m x d), labels ``y`` (m,), and optionally the
    generating weights. Arrays are copied on construction and frozen."""

    features: np.ndarray
    labels: np.ndarray
    true_weights: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels must have shape ({X.shape[0]},), got {y.shape}")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "labels", _readonly(y))
        if self.true_weights is not None:
            w = np.array(self.true_weights, dtype=np.float64)
            if w.shape != (X.shape[1],):
                raise ValueError(f"true_weights must have shape ({X.shape[1]},), got {w.shape}")
            object.__setattr__(self, "true_weights", _readonly(w))

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        h.update(np.asarray(self.features.shape, dtype=np.int64).tobytes())
        h.update(self.features.tobytes())
        h.update(self.labels.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Shard:
    """Rows held by one worker. ``row_indices`` are 0-based positions into the
    parent dataset; ``worker_id`` runs from 1 to n."""

    row_indices: np.ndarray
    worker_id: int
    dataset_id: str

    @property
    def size(self) -> int:
        return len(self.row_indices)


def generate_synthetic(m: int, d: int, seed: int, noise_std: float = 1.0) -> Dataset:
    """Draw features uniformly from {1..10}, weights uniformly from {1..100}
    and labels ``y ~ N(<x, w>, noise_std**2)``.

    ``noise_std=0`` gives a consistent system, handy for exact-recovery checks.
    """
    if m < 1 or d < 1:
        raise ValueError(f"m and d must be >= 1, got m={m}, d={d}")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    X = rng.integers(1, 11, size=(m, d)).astype(np.float64)
    w_bar = rng.integers(1, 101, size=d).astype(np.float64)
    y = X @ w_bar + noise_std * rng.standard_normal(m)
    return Dataset(X, y, true_weights=w_bar, seed=seed)


def shard(dataset: Dataset, n: int) -> list[Shard]:
    """Split the rows into ``n`` contiguous blocks of ``m / n`` rows."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if dataset.m % n:
        raise ValueError(f"n={n} does not divide m={dataset.m}")
    s = dataset.m // n
    fp = dataset.fingerprint
    return [
        Shard(_readonly(np.arange(i * s, (i + 1) * s)), worker_id=i + 1, dataset_id=fp)
        for i in range(n)
    ]


def stack_shards(dataset: Dataset, shards: list[Shard]) -> tuple[np.ndarray, np.ndarray]:
    """Gather shard rows into arrays of shape (n, s, d) and (n, s)."""
    idx = np.stack([sh.row_indices for sh in shards])
    return dataset.features[idx], dataset.labels[idx]


def save_csv(dataset: Dataset, path: PathLike) -> None:
    """Write ``x1..xd,y`` rows; a ``<path>.json`` sidecar keeps seed and true weights."""
    path = Path(path)
    lines = [",".join([f"x{j + 1}" for j in range(dataset.d)] + ["y"])]
    for row, label in zip(dataset.features, dataset.labels):
        lines.append(",".join(fmt(v) for v in row) + "," + fmt(label))
    atomic_write_text(path, "\n".join(lines) + "\n")
    if dataset.true_weights is not None or dataset.seed is not None:
        side = {
            "seed": dataset.seed,
            "true_weights": None if dataset.true_weights is None else dataset.true_weights.tolist(),
        }
        atomic_write_text(sidecar_path(path), json.dumps(side, indent=2) + "\n")


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_csv(path: PathLike) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 1
        if d < 1 or header != [f"x{j + 1}" for j in range(d)] + ["y"]:
            raise ValueError(f"{path}: header must be x1,...,xd,y")
        rows = [list(map(float, r)) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    side = sidecar_path(path)
    seed = true_weights = None
    if side.exists():
        meta = json.loads(side.read_text())
        seed = meta.get("seed")
        true_weights = meta.get("true_weights")
    return Dataset(arr[:, :d], arr[:, d], true_weights=true_weights, seed=seed)
