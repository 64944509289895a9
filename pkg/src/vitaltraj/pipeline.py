"""End-to-end analysis: records to epochs, distances, clusters and outliers."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .cluster import ClusterAssignment, Dendrogram, cluster_epochs, outlier_scores
from .dtw import DtwConfig, pairwise_matrix
from .errors import CorruptionError, DataError
from .mds import Embedding, classical_mds
from .preprocess import PreprocessConfig, PreprocessReport, build_epochs
from .signal_model import DistanceMatrix, Epoch, PatientRecord

log = logging.getLogger(__name__)


def epoch_fingerprint(epochs: Sequence[Epoch], dtw_config: DtwConfig) -> str:
    """SHA-256 over everything the distance matrix depends on."""
    h = hashlib.sha256()
    h.update(f"band={dtw_config.band_radius}\n".encode())
    for e in epochs:
        h.update(f"{e.epoch_id}|{e.patient_id}|{e.start_time}|{e.data.shape}\n".encode())
        h.update(np.ascontiguousarray(e.data, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class AnalysisResult:
    epochs: list[Epoch]
    reports: list[PreprocessReport]
    matrix: DistanceMatrix
    dendrogram: Dendrogram
    assignment: ClusterAssignment
    outliers: list[tuple[int, float]]
    fingerprint: str
    matrix_from_cache: bool = False


def load_or_compute_matrix(epochs, dtw_config: DtwConfig, cache: Optional[Path] = None, threads=None):
    """Distance matrix for ``epochs``, reusing ``cache`` when its fingerprint matches.

    Returns ``(matrix, fingerprint, reused)``. A stale or unreadable cache is
    recomputed and overwritten.
    """
    fp = epoch_fingerprint(epochs, dtw_config)
    if cache is not None and Path(cache).exists():
        try:
            matrix, meta = io.read_matrix_with_meta(cache)
        except CorruptionError as exc:
            log.warning("ignoring matrix cache: %s", exc)
        else:
            if meta.get("fingerprint") == fp:
                return matrix, fp, True
            log.warning("matrix cache %s is for different epochs; recomputing", cache)
    matrix = pairwise_matrix(epochs, dtw_config, threads=threads)
    if cache is not None:
        io.write_matrix(cache, matrix, matrix_meta(fp, dtw_config))
    return matrix, fp, False


def matrix_meta(fingerprint: str, dtw_config: DtwConfig) -> dict:
    return {"fingerprint": fingerprint, "band_radius": dtw_config.band_radius}


def analyze_records(
    records: Sequence[PatientRecord],
    preprocess_config: PreprocessConfig = PreprocessConfig(),
    dtw_config: DtwConfig = DtwConfig(),
    threads: Optional[int] = None,
    matrix_cache: Optional[Path] = None,
    threshold: Optional[float] = None,
    k: Optional[int] = None,
) -> AnalysisResult:
    epochs, reports = build_epochs(records, preprocess_config)
    if len(epochs) < 2:
        raise DataError(
            f"fewer than 2 usable epochs ({len(epochs)}); records may be shorter than "
            f"{preprocess_config.epoch_minutes} contiguous minutes"
        )
    matrix, fp, reused = load_or_compute_matrix(epochs, dtw_config, matrix_cache, threads)
    dendrogram, assignment = cluster_epochs(matrix, threshold=threshold, k=k)
    return AnalysisResult(epochs, reports, matrix, dendrogram, assignment, outlier_scores(matrix), fp, reused)


def embed_matrix(matrix: DistanceMatrix) -> Embedding:
    return classical_mds(matrix, 2)


def report_text(result: AnalysisResult, top: int = 10) -> str:
    """Plain-text summary: cluster count and sizes, top outliers with spans."""
    by_id = {e.epoch_id: e for e in result.epochs}
    labels = result.assignment.as_dict()
    a = result.assignment
    lines = [
        f"patients: {len(result.reports)}",
        f"epochs: {len(result.epochs)}",
        f"clusters: {a.k}",
        f"cut gap: {a.cut_gap:.6g}",
        "cluster sizes: " + " ".join(f"{lab}:{size}" for lab, size in enumerate(a.sizes())),
    ]
    skipped = sum(r.skipped_segments for r in result.reports)
    if skipped:
        lines.append(f"segments shorter than the median window (dropped): {skipped}")
    for r in result.reports:
        for ch, frac in sorted(r.implausible_fraction.items()):
            if frac > 0:
                lines.append(f"implausible {ch} readings removed for {r.patient_id}: {100 * frac:.1f}%")
    lines.append(f"top {min(top, len(result.outliers))} outlier epochs:")
    lines.append("rank\tepoch_id\tpatient_id\tstart_minute\tend_minute\tscore\tcluster")
    for rank, (eid, score) in enumerate(result.outliers[:top], start=1):
        e = by_id[eid]
        lines.append(f"{rank}\t{eid}\t{e.patient_id}\t{e.start_time}\t{e.end_time}\t{score:.6g}\t{labels[eid]}")
    return "\n".join(lines) + "\n"


def write_outliers(path, result: AnalysisResult) -> None:
    by_id = {e.epoch_id: e for e in result.epochs}
    labels = result.assignment.as_dict()
    rows = []
    for rank, (eid, score) in enumerate(result.outliers, start=1):
        e = by_id[eid]
        rows.append([rank, eid, e.patient_id, e.start_time, e.end_time, io.fmt(score), labels[eid]])
    io.write_table(
        path, {}, ("rank", "epoch_id", "patient_id", "start_time", "end_time", "score", "cluster"), rows
    )
