"""Classical (Torgerson) multidimensional scaling of a distance matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .signal_model import DistanceMatrix


@dataclass(frozen=True)
class EmbeddingPoint:
    epoch_id: int
    x: float
    y: float


@dataclass(frozen=True)
class Embedding:
    points: tuple[EmbeddingPoint, ...]
    stress: float
    eigenvalue_spectrum: tuple[float, ...]
    negative_mass_fraction: float = 0.0

    @property
    def coordinates(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=float).reshape(-1, 2)

    @property
    def epoch_ids(self) -> tuple[int, ...]:
        return tuple(p.epoch_id for p in self.points)


def double_center(sq: np.ndarray) -> np.ndarray:
    """``-1/2 J sq J`` with ``J`` the centering matrix."""
    row = sq.mean(axis=1, keepdims=True)
    col = sq.mean(axis=0, keepdims=True)
    b = -0.5 * (sq - row - col + sq.mean())
    return 0.5 * (b + b.T)


def stress1(embedded: np.ndarray, target: np.ndarray) -> float:
    """Kruskal stress-1 over the upper triangle."""
    iu = np.triu_indices(len(target), k=1)
    num = np.sum((embedded[iu] - target[iu]) ** 2)
    den = np.sum(target[iu] ** 2)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(np.sqrt(num / den))


def pairwise_euclidean(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _rank_tol(evals, n):
    # Same scale as numpy.linalg.matrix_rank's default tolerance.
    return n * np.finfo(float).eps * float(np.max(np.abs(evals)))


def classical_mds_coordinates(entries: np.ndarray, dims: int = 2):
    """Coordinates and the full descending eigenvalue spectrum.

    Negative eigenvalues, and positive ones at rounding level relative to the
    largest, are clamped to zero. Each axis is flipped so that its
    largest-magnitude coordinate is positive.
    """
    n = entries.shape[0]
    if n <= dims:
        raise DimensionError(f"need more than {dims} points for a {dims}-D embedding, got {n}")
    b = double_center(np.asarray(entries, dtype=float) ** 2)
    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    evals[np.abs(evals) <= _rank_tol(evals, n)] = 0.0
    coords = evecs[:, :dims] * np.sqrt(np.clip(evals[:dims], 0.0, None))
    for k in range(dims):
        col = coords[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            coords[:, k] = -col
    coords[coords == 0] = 0.0  # no negative zeros in output files
    return coords, evals


def classical_mds(matrix: DistanceMatrix, dims: int = 2) -> Embedding:
    """Embed epochs in the plane with classical MDS.

    Stress-1 is reported against the input distances, and the share of
    absolute eigenvalue mass that was negative (non-Euclidean part of the
    input) as ``negative_mass_fraction``.
    """
    if dims != 2:
        raise DimensionError("Embedding stores planar points; use classical_mds_coordinates for other dims")
    coords, evals = classical_mds_coordinates(matrix.entries, dims)
    total = np.sum(np.abs(evals))
    negative = float(np.sum(-evals[evals < 0]) / total) if total > 0 else 0.0
    points = tuple(
        EmbeddingPoint(eid, float(x), float(y)) for eid, (x, y) in zip(matrix.epoch_ids, coords)
    )
    return Embedding(
        points,
        stress1(pairwise_euclidean(coords), matrix.entries),
        tuple(float(v) for v in evals),
        negative,
    )
