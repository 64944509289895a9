"""Average-linkage agglomerative clustering, max-gap cut and outlier scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba as nb
import numpy as np

from .errors import ConfigError, DataError
from .signal_model import DistanceMatrix

# Relative slack when asserting merge-distance monotonicity; rounding in the
# Lance-Williams average can dip by an ulp, anything larger is a bug.
_MONOTONE_RTOL = 1e-12


@dataclass(frozen=True)
class MergeStep:
    step_index: int
    left: int
    right: int
    linkage_distance: float
    new_cluster_id: int
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence in scipy-style ids: leaves ``0..n-1``, merge ``s`` creates ``n+s-1``."""

    n_leaves: int
    merges: tuple[MergeStep, ...]
    leaf_ids: tuple[int, ...] = ()

    def __post_init__(self):
        n = self.n_leaves
        merges = tuple(self.merges)
        if n < 1 or len(merges) != n - 1:
            raise DataError(f"dendrogram over {n} leaves needs {n - 1} merges, got {len(merges)}")
        ids = tuple(self.leaf_ids) if len(self.leaf_ids) else tuple(range(n))
        if len(ids) != n:
            raise DataError("leaf_ids length does not match n_leaves")
        alive = set(range(n))
        prev = -np.inf
        for k, step in enumerate(merges, start=1):
            if step.step_index != k or step.new_cluster_id != n + k - 1:
                raise DataError(f"merge {k} is out of sequence")
            if step.left not in alive or step.right not in alive or step.left == step.right:
                raise DataError(f"merge {k} references an unavailable cluster")
            if step.linkage_distance < prev:
                raise DataError(f"merge {k} distance decreases")
            prev = step.linkage_distance
            alive -= {step.left, step.right}
            alive.add(step.new_cluster_id)
        object.__setattr__(self, "merges", merges)
        object.__setattr__(self, "leaf_ids", ids)

    @property
    def distances(self) -> np.ndarray:
        return np.array([m.linkage_distance for m in self.merges])

    def linkage_matrix(self) -> np.ndarray:
        """The merge table in ``scipy.cluster.hierarchy`` layout."""
        return np.array(
            [[m.left, m.right, m.linkage_distance, m.size] for m in self.merges], dtype=float
        ).reshape(-1, 4)


@dataclass(frozen=True)
class ClusterAssignment:
    epoch_ids: tuple[int, ...]
    labels: tuple[int, ...]
    k: int
    cut_gap: float

    def __post_init__(self):
        if len(self.epoch_ids) != len(self.labels):
            raise DataError("one label per epoch required")
        if sorted(set(self.labels)) != list(range(self.k)):
            raise DataError(f"labels must be contiguous 0..{self.k - 1}")
        object.__setattr__(self, "epoch_ids", tuple(int(i) for i in self.epoch_ids))
        object.__setattr__(self, "labels", tuple(int(i) for i in self.labels))

    def as_dict(self) -> dict:
        return dict(zip(self.epoch_ids, self.labels))

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()

    def members(self, label: int) -> list[int]:
        return [e for e, lab in zip(self.epoch_ids, self.labels) if lab == label]


@nb.njit(cache=True)
def _average_linkage(dist):
    n = dist.shape[0]
    work = dist.copy()
    active = np.ones(n, dtype=np.bool_)
    cid = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    out_l = np.empty(n - 1, dtype=np.int64)
    out_r = np.empty(n - 1, dtype=np.int64)
    out_d = np.empty(n - 1)
    out_s = np.empty(n - 1, dtype=np.int64)
    for step in range(n - 1):
        best = np.inf
        ba, bb = -1, -1
        key_lo, key_hi = -1, -1
        for a in range(n):
            if not active[a]:
                continue
            for b in range(a + 1, n):
                if not active[b]:
                    continue
                v = work[a, b]
                if v > best:
                    continue
                lo = min(cid[a], cid[b])
                hi = max(cid[a], cid[b])
                if v < best or lo < key_lo or (lo == key_lo and hi < key_hi):
                    best = v
                    ba, bb = a, b
                    key_lo, key_hi = lo, hi
        na, nb_ = size[ba], size[bb]
        for k in range(n):
            if active[k] and k != ba and k != bb:
                v = (na * work[ba, k] + nb_ * work[bb, k]) / (na + nb_)
                work[ba, k] = v
                work[k, ba] = v
        active[bb] = False
        out_l[step] = key_lo
        out_r[step] = key_hi
        out_d[step] = best
        out_s[step] = na + nb_
        size[ba] = na + nb_
        cid[ba] = n + step
    return out_l, out_r, out_d, out_s


def agglomerate(matrix: DistanceMatrix) -> Dendrogram:
    """Average-linkage agglomeration over a distance matrix.

    At every step the globally closest pair of active clusters is merged,
    where the distance between clusters U and V is the mean of all
    element-pair distances. Cluster distances are maintained with the
    Lance-Williams recurrence. Exact ties go to the pair with the smallest
    ``(min id, max id)``.
    """
    n = matrix.n_epochs
    if n < 2:
        raise DataError("agglomerate needs at least 2 epochs")
    left, right, dist, size = _average_linkage(np.ascontiguousarray(matrix.entries))
    merges = []
    prev = 0.0
    for s in range(n - 1):
        d = float(dist[s])
        if d < prev - _MONOTONE_RTOL * max(abs(prev), 1.0):
            raise AssertionError(f"average linkage lost monotonicity at merge {s + 1}: {d} < {prev}")
        d = max(d, prev)
        prev = d
        merges.append(MergeStep(s + 1, int(left[s]), int(right[s]), d, n + s, int(size[s])))
    return Dendrogram(n, tuple(merges), matrix.epoch_ids)


def _labels_after(dendrogram: Dendrogram, n_merges: int) -> list[int]:
    n = dendrogram.n_leaves
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in dendrogram.merges[:n_merges]:
        parent[find(step.left)] = step.new_cluster_id
        parent[find(step.right)] = step.new_cluster_id
    roots = {}
    labels = []
    for leaf in range(n):
        labels.append(roots.setdefault(find(leaf), len(roots)))
    return labels


def _assignment(dendrogram, n_merges, gap) -> ClusterAssignment:
    labels = _labels_after(dendrogram, n_merges)
    return ClusterAssignment(dendrogram.leaf_ids, tuple(labels), dendrogram.n_leaves - n_merges, float(gap))


def _gap_at(d, n_merges):
    if 1 <= n_merges < len(d):
        return float(d[n_merges] - d[n_merges - 1])
    return 0.0


def cut_by_max_gap(dendrogram: Dendrogram) -> ClusterAssignment:
    """Cut where consecutive merge distances jump the most.

    With ``d_1 <= ... <= d_{n-1}``, the first ``k*`` merges are applied where
    ``k* = argmax_k (d_{k+1} - d_k)``; ties go to the larger ``k*``. Labels
    are numbered by first appearance in leaf order.
    """
    d = dendrogram.distances
    if dendrogram.n_leaves <= 2:
        return _assignment(dendrogram, dendrogram.n_leaves - 1, 0.0)
    gaps = np.diff(d)
    k_star = int(np.flatnonzero(gaps == gaps.max())[-1]) + 1
    return _assignment(dendrogram, k_star, gaps[k_star - 1])


def cut_at_distance(dendrogram: Dendrogram, threshold: float) -> ClusterAssignment:
    """Apply every merge whose linkage distance is <= ``threshold``."""
    d = dendrogram.distances
    n_merges = int(np.searchsorted(d, threshold, side="right"))
    return _assignment(dendrogram, n_merges, _gap_at(d, n_merges))


def cut_to_k(dendrogram: Dendrogram, k: int) -> ClusterAssignment:
    if not 1 <= k <= dendrogram.n_leaves:
        raise ConfigError(f"cluster count must be in 1..{dendrogram.n_leaves}, got {k}")
    n_merges = dendrogram.n_leaves - k
    return _assignment(dendrogram, n_merges, _gap_at(dendrogram.distances, n_merges))


def outlier_scores(matrix: DistanceMatrix) -> list[tuple[int, float]]:
    """Mean distance from each epoch to every other epoch, highest first.

    Ties keep ascending epoch id order.
    """
    n = matrix.n_epochs
    if n < 2:
        raise DataError("outlier scores need at least 2 epochs")
    scores = matrix.entries.sum(axis=1) / (n - 1)
    pairs = [(eid, float(s)) for eid, s in zip(matrix.epoch_ids, scores)]
    return sorted(pairs, key=lambda p: (-p[1], p[0]))


def cluster_epochs(matrix: DistanceMatrix, threshold: Optional[float] = None, k: Optional[int] = None):
    """Agglomerate and cut. Gap rule by default; a threshold or a fixed k override it."""
    if threshold is not None and k is not None:
        raise ConfigError("give at most one of threshold and k")
    dendrogram = agglomerate(matrix)
    if threshold is not None:
        assignment = cut_at_distance(dendrogram, threshold)
    elif k is not None:
        assignment = cut_to_k(dendrogram, k)
    else:
        assignment = cut_by_max_gap(dendrogram)
    return dendrogram, assignment
