"""Evaluation metrics on numpy arrays."""

from __future__ import annotations

from dataclasses import asdict
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import Any

import numpy as np

from v2i_chanpred.errors import ShapeMismatchError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike
    from numpy.typing import NDArray

HISTOGRAM_BINS = 50
HISTOGRAM_RANGE = (-1.0, 1.0)


def _pair(
    y: ArrayLike, y_hat: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_hat, dtype=np.float64)
    if a.shape != b.shape:
        msg = f"length mismatch: {a.shape} vs {b.shape}"
        raise ShapeMismatchError(msg)
    if a.size == 0:
        msg = "metrics need at least one value"
        raise ShapeMismatchError(msg)
    return a, b


def rmse(y: ArrayLike, y_hat: ArrayLike) -> float:
    a, b = _pair(y, y_hat)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def mae(y: ArrayLike, y_hat: ArrayLike) -> float:
    a, b = _pair(y, y_hat)
    return float(np.mean(np.abs(a - b)))


def row_cosines(
    target: ArrayLike, prediction: ArrayLike, epsilon: float = 1e-8
) -> NDArray[np.float64]:
    """Per-row cosine similarity of two ``(M, K)`` arrays."""
    t, p = _pair(target, prediction)
    t, p = np.atleast_2d(t), np.atleast_2d(p)
    dot = np.sum(t * p, axis=1)
    norms = np.linalg.norm(t, axis=1) * np.linalg.norm(p, axis=1)
    return np.asarray(dot / (norms + epsilon), dtype=np.float64)


@dataclass(frozen=True)
class CosineSummary:
    mean: float
    median: float
    std: float
    min: float
    max: float
    counts: tuple[int, ...]
    edges: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["counts"] = list(self.counts)
        data["edges"] = list(self.edges)
        return data


def cosine_distribution(values: ArrayLike) -> CosineSummary:
    """Summary statistics and a 50-bin histogram on [-1, 1].

    Values are clipped into the histogram range before binning, so the counts
    always sum to the number of values. ``std`` is the population deviation.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        msg = "cosine distribution of an empty sequence"
        raise ShapeMismatchError(msg)
    counts, edges = np.histogram(
        np.clip(arr, *HISTOGRAM_RANGE), bins=HISTOGRAM_BINS, range=HISTOGRAM_RANGE
    )
    return CosineSummary(
        mean=float(np.mean(arr)),
        median=float(np.median(arr)),
        std=float(np.std(arr)),
        min=float(np.min(arr)),
        max=float(np.max(arr)),
        counts=tuple(int(c) for c in counts),
        edges=tuple(float(e) for e in edges),
    )
