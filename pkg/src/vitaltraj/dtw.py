"""Multivariate dynamic time warping and pairwise distance matrices.

The local cost is the squared Euclidean distance between frames; the square
root is taken once, on the accumulated cost of the optimal path. Steps are
the symmetric set {(1, 0), (0, 1), (1, 1)} with no weights, optionally
restricted to a Sakoe-Chiba band ``|i - j| <= band_radius``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numba as nb
import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .signal_model import DistanceMatrix, Epoch

_UNBANDED = -1

# The system TBB is often too old for numba and warns on every run; try OpenMP first.
if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@dataclass(frozen=True)
class DtwConfig:
    band_radius: Optional[int] = None

    def __post_init__(self):
        if self.band_radius is not None and self.band_radius < 0:
            raise ConfigError(f"band_radius must be >= 0, got {self.band_radius}")

    @property
    def _radius(self) -> int:
        return _UNBANDED if self.band_radius is None else int(self.band_radius)


@dataclass(frozen=True)
class AlignmentPath:
    """Optimal warping path as 1-based ``(i, j)`` index pairs."""

    steps: tuple[tuple[int, int], ...]

    def __post_init__(self):
        steps = tuple((int(i), int(j)) for i, j in self.steps)
        if not steps or steps[0] != (1, 1):
            raise DataError("alignment path must start at (1, 1)")
        for (i0, j0), (i1, j1) in zip(steps, steps[1:]):
            di, dj = i1 - i0, j1 - j0
            if di not in (0, 1) or dj not in (0, 1) or di == dj == 0:
                raise DataError(f"non-contiguous step {(i0, j0)} -> {(i1, j1)}")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


@nb.njit(cache=True)
def _cost_table(a, b, radius):
    m, n, c = a.shape[0], b.shape[0], a.shape[1]
    acc = np.full((m + 1, n + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, m + 1):
        lo, hi = 1, n
        if radius >= 0:
            lo = max(1, i - radius)
            hi = min(n, i + radius)
        for j in range(lo, hi + 1):
            d = 0.0
            for k in range(c):
                t = a[i - 1, k] - b[j - 1, k]
                d += t * t
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = d + best
    return acc


@nb.njit(cache=True)
def _backtrack(acc):
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    out = np.empty((i + j, 2), dtype=np.int64)
    k = 0
    while True:
        out[k, 0] = i
        out[k, 1] = j
        k += 1
        if i == 1 and j == 1:
            break
        # Ties: diagonal first, then the predecessor with the smaller i.
        best = acc[i - 1, j - 1]
        ni, nj = i - 1, j - 1
        if acc[i - 1, j] < best:
            best = acc[i - 1, j]
            ni, nj = i - 1, j
        if acc[i, j - 1] < best:
            ni, nj = i, j - 1
        i, j = ni, nj
    return out[:k][::-1]


@nb.njit(cache=True)
def _dtw_sq(a, b, radius):
    # Same recurrence and operation order as _cost_table, two rolling rows.
    m, n, c = a.shape[0], b.shape[0], a.shape[1]
    prev = np.full(n + 1, np.inf)
    cur = np.full(n + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, m + 1):
        lo, hi = 1, n
        if radius >= 0:
            lo = max(1, i - radius)
            hi = min(n, i + radius)
        for j in range(n + 1):
            cur[j] = np.inf
        for j in range(lo, hi + 1):
            d = 0.0
            for k in range(c):
                t = a[i - 1, k] - b[j - 1, k]
                d += t * t
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = d + best
        prev, cur = cur, prev
    return prev[n]


@nb.njit(cache=True, parallel=True)
def _pairwise(stack, rows, cols, radius):
    n = stack.shape[0]
    out = np.zeros((n, n))
    for p in nb.prange(rows.shape[0]):
        i, j = rows[p], cols[p]
        v = np.sqrt(_dtw_sq(stack[i], stack[j], radius))
        out[i, j] = v
        out[j, i] = v
    return out


def _as_frames(x, name) -> np.ndarray:
    arr = np.asarray(x.data if isinstance(x, Epoch) else x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def _check_band(m, n, config):
    if config.band_radius is not None and abs(m - n) > config.band_radius:
        raise DimensionError(
            f"lengths {m} and {n} differ by more than band_radius {config.band_radius}"
        )


def dtw_distance(a, b, config: DtwConfig = DtwConfig()):
    """DTW distance between two multichannel sequences.

    Parameters
    ----------
    a, b : array_like or Epoch
        Arrays of shape (length, channels); 1-D input is one channel.
    config : DtwConfig
        Optional Sakoe-Chiba band.

    Returns
    -------
    distance : float
        Square root of the minimal accumulated squared Euclidean cost.
    path : AlignmentPath
        A path attaining it.
    """
    a = _as_frames(a, "a")
    b = _as_frames(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    _check_band(a.shape[0], b.shape[0], config)
    acc = _cost_table(a, b, config._radius)
    path = _backtrack(acc)
    return float(np.sqrt(acc[-1, -1])), AlignmentPath(tuple(map(tuple, path.tolist())))


def dtw_value(a, b, config: DtwConfig = DtwConfig()) -> float:
    """Distance only; skips the full table and the backtrack."""
    a = _as_frames(a, "a")
    b = _as_frames(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    _check_band(a.shape[0], b.shape[0], config)
    return float(np.sqrt(_dtw_sq(a, b, config._radius)))


def stack_epochs(epochs: Sequence) -> np.ndarray:
    """Stack epochs into an (n, length, channels) array, checking shapes agree."""
    frames = [_as_frames(e, f"epoch {k}") for k, e in enumerate(epochs)]
    if not frames:
        raise DimensionError("no epochs given")
    shape = frames[0].shape
    for k, f in enumerate(frames):
        if f.shape != shape:
            raise DimensionError(f"epoch {k} has shape {f.shape}, expected {shape}")
    return np.ascontiguousarray(np.stack(frames))


def pairwise_matrix(epochs: Sequence, config: DtwConfig = DtwConfig(), threads: Optional[int] = None) -> DistanceMatrix:
    """All-pairs DTW distances.

    Each unordered pair is one independent work item and is written exactly
    once, so the result does not depend on ``threads``.
    """
    if len(epochs) < 2:
        raise DimensionError(f"need at least 2 epochs, got {len(epochs)}")
    stack = stack_epochs(epochs)
    ids = [e.epoch_id if isinstance(e, Epoch) else k for k, e in enumerate(epochs)]
    rows, cols = np.triu_indices(len(stack), k=1)
    if threads is not None:
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        previous = nb.get_num_threads()
        nb.set_num_threads(min(threads, nb.config.NUMBA_NUM_THREADS))
        try:
            out = _pairwise(stack, rows, cols, config._radius)
        finally:
            nb.set_num_threads(previous)
    else:
        out = _pairwise(stack, rows, cols, config._radius)
    return DistanceMatrix(out, tuple(ids))
