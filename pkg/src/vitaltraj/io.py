"""Readers and writers for corpus CSVs and analysis artifacts.

Corpus CSV columns: ``patient_id``, ``timestamp`` (integer minutes or
ISO-8601), then one column per channel (``hr``, ``rr``, ``temp``) with an
empty cell for a missing reading. Unknown columns are ignored.

All writers are deterministic: floats use the shortest round-trip decimal
(``repr``), rows keep a fixed order and line endings are ``\\n``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cluster import ClusterAssignment, Dendrogram, MergeStep
from .errors import CorruptionError, DataError
from .mds import Embedding, EmbeddingPoint
from .signal_model import DistanceMatrix, Epoch, PatientRecord

log = logging.getLogger(__name__)

KNOWN_CHANNELS = ("hr", "rr", "temp")
REQUIRED_COLUMNS = ("patient_id", "timestamp")

MATRIX_MAGIC = b"VITALTRAJ-DTWM 1\n"


def fmt(x: float) -> str:
    x = float(x)
    if x == 0:
        x = 0.0  # drop the sign of -0.0
    return repr(x)


def _parse_time(raw: str, line: int):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(raw[:-1] + "+00:00" if raw.endswith("Z") else raw)
    except ValueError:
        raise DataError(f"line {line}: bad timestamp {raw!r}") from None


def _to_minutes(stamps, patient_id):
    kinds = {type(s) for s in stamps}
    if len(kinds) > 1:
        raise DataError(f"patient {patient_id!r}: mixes integer and ISO-8601 timestamps")
    if kinds == {int}:
        return stamps
    try:
        t0 = min(stamps)
        return [int(round((s - t0).total_seconds() / 60.0)) for s in stamps]
    except TypeError:
        raise DataError(f"patient {patient_id!r}: mixes timezone-aware and naive timestamps") from None


def read_patients(path, channels: Optional[Sequence[str]] = None) -> list[PatientRecord]:
    """Read a corpus CSV into one record per patient, in order of first appearance.

    ``channels`` selects channel columns; by default every known channel
    column present in the header is used. Timestamps become minutes since
    each patient's first sample.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing_cols = [c for c in REQUIRED_COLUMNS if c not in header]
        if channels is None:
            channels = [c for c in KNOWN_CHANNELS if c in header]
            if not channels:
                raise DataError(f"{path}: no channel columns (expected some of {KNOWN_CHANNELS})")
        else:
            channels = list(channels)
            missing_cols += [c for c in channels if c not in header]
        if missing_cols:
            raise DataError(f"{path}: missing required columns {missing_cols}")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        unknown = [h for h in header if h not in REQUIRED_COLUMNS and h not in KNOWN_CHANNELS and h not in channels]
        if unknown:
            log.warning("%s: ignoring unknown columns %s", path, unknown)
        pid_col = header.index("patient_id")
        t_col = header.index("timestamp")
        ch_cols = [header.index(c) for c in channels]

        rows: dict[str, list] = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            pid = row[pid_col].strip()
            if not pid:
                raise DataError(f"line {line}: empty patient_id")
            values = []
            for c in ch_cols:
                cell = row[c].strip()
                if cell == "":
                    values.append(np.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"line {line}: bad number {cell!r} in column {header[c]!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"line {line}: non-finite reading {cell!r}; leave the cell empty for missing")
                values.append(v)
            rows.setdefault(pid, []).append((_parse_time(row[t_col], line), line, values))

    records = []
    for pid, items in rows.items():
        minutes = _to_minutes([it[0] for it in items], pid)
        order = sorted(range(len(items)), key=lambda k: minutes[k])
        times = np.array([minutes[k] for k in order], dtype=np.int64)
        if len(times):
            times = times - times[0]
        dup = np.flatnonzero(np.diff(times) == 0)
        if len(dup):
            first = items[order[dup[0] + 1]][1]
            raise DataError(f"line {first}: duplicate timestamp for patient {pid!r}")
        values = np.array([items[k][2] for k in order], dtype=float).reshape(len(items), len(channels))
        records.append(PatientRecord(pid, tuple(channels), times, values, np.isnan(values)))
    return records


def write_patients(path, records: Sequence[PatientRecord]) -> None:
    if not records:
        raise DataError("no records to write")
    channels = records[0].channels
    for r in records:
        if r.channels != channels:
            raise DataError("all records must share the same channels")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "timestamp", *channels])
        for r in records:
            for t, row, miss in zip(r.times.tolist(), r.values.tolist(), r.missing.tolist()):
                w.writerow([r.patient_id, t, *("" if m else fmt(v) for v, m in zip(row, miss))])


# -- distance matrix container ---------------------------------------------

def _matrix_digest(header_fields: dict, payload: bytes) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(header_fields, sort_keys=True, separators=(",", ":")).encode())
    h.update(payload)
    return h.hexdigest()


def write_matrix(path, matrix: DistanceMatrix, meta: Optional[dict] = None) -> None:
    """Store the strict upper triangle as little-endian float64 plus a SHA-256 digest.

    ``meta`` is free-form JSON kept in the header (covered by the digest).
    """
    n = matrix.n_epochs
    iu = np.triu_indices(n, k=1)
    payload = matrix.entries[iu].astype("<f8").tobytes()
    fields = {"n": n, "epoch_ids": list(matrix.epoch_ids), "dtype": "<f8", "meta": meta or {}}
    header = dict(fields, sha256=_matrix_digest(fields, payload))
    with Path(path).open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        fh.write(payload)


def read_matrix_with_meta(path):
    blob = Path(path).read_bytes()
    if not blob.startswith(MATRIX_MAGIC):
        raise CorruptionError(f"{path}: not a distance matrix file")
    rest = blob[len(MATRIX_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CorruptionError(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl])
        n = int(header["n"])
        digest = header.pop("sha256")
    except (ValueError, KeyError, TypeError):
        raise CorruptionError(f"{path}: unreadable header") from None
    payload = rest[nl + 1:]
    expected = n * (n - 1) // 2 * 8
    if len(payload) != expected:
        raise CorruptionError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    if _matrix_digest(header, payload) != digest:
        raise CorruptionError(f"{path}: digest mismatch")
    entries = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    entries[iu] = np.frombuffer(payload, dtype="<f8")
    entries.T[iu] = entries[iu]
    return DistanceMatrix(entries, tuple(header["epoch_ids"])), header.get("meta", {})


def read_matrix(path) -> DistanceMatrix:
    return read_matrix_with_meta(path)[0]


# -- CSV artifacts with "# key=value" preambles ------------------------------

def write_table(path, meta: dict, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def read_table(path, columns):
    meta = {}
    lines = Path(path).read_text().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        key, sep, value = line[1:].strip().partition("=")
        if not sep:
            raise DataError(f"{path}:{i + 1}: bad metadata line")
        meta[key] = value
    else:
        raise DataError(f"{path}: no header row")
    reader = csv.reader(lines[body_start:])
    header = next(reader)
    if header != list(columns):
        raise DataError(f"{path}: expected columns {list(columns)}, got {header}")
    rows = []
    for lineno, row in enumerate(reader, start=body_start + 2):
        if len(row) != len(columns):
            raise DataError(f"{path}:{lineno}: expected {len(columns)} fields")
        rows.append(row)
    return meta, rows


DENDROGRAM_COLUMNS = ("step_index", "left", "right", "linkage_distance", "new_cluster_id", "size")


def write_dendrogram(path, dendrogram: Dendrogram) -> None:
    meta = {"n_leaves": dendrogram.n_leaves, "leaf_ids": " ".join(map(str, dendrogram.leaf_ids))}
    rows = [
        [m.step_index, m.left, m.right, fmt(m.linkage_distance), m.new_cluster_id, m.size]
        for m in dendrogram.merges
    ]
    write_table(path, meta, DENDROGRAM_COLUMNS, rows)


def read_dendrogram(path) -> Dendrogram:
    meta, rows = read_table(path, DENDROGRAM_COLUMNS)
    try:
        merges = tuple(
            MergeStep(int(r[0]), int(r[1]), int(r[2]), float(r[3]), int(r[4]), int(r[5])) for r in rows
        )
        leaf_ids = tuple(int(x) for x in meta["leaf_ids"].split())
        return Dendrogram(int(meta["n_leaves"]), merges, leaf_ids)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed dendrogram ({exc})") from None


def write_assignment(path, assignment: ClusterAssignment) -> None:
    meta = {"k": assignment.k, "cut_gap": fmt(assignment.cut_gap)}
    write_table(path, meta, ("epoch_id", "label"), zip(assignment.epoch_ids, assignment.labels))


def read_assignment(path) -> ClusterAssignment:
    meta, rows = read_table(path, ("epoch_id", "label"))
    try:
        return ClusterAssignment(
            tuple(int(r[0]) for r in rows), tuple(int(r[1]) for r in rows), int(meta["k"]), float(meta["cut_gap"])
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed assignment ({exc})") from None


def write_embedding(path, embedding: Embedding) -> None:
    meta = {
        "stress": fmt(embedding.stress),
        "negative_mass_fraction": fmt(embedding.negative_mass_fraction),
        "eigenvalues": " ".join(fmt(v) for v in embedding.eigenvalue_spectrum),
    }
    rows = [[p.epoch_id, fmt(p.x), fmt(p.y)] for p in embedding.points]
    write_table(path, meta, ("epoch_id", "x", "y"), rows)


def read_embedding(path) -> Embedding:
    meta, rows = read_table(path, ("epoch_id", "x", "y"))
    try:
        points = tuple(EmbeddingPoint(int(r[0]), float(r[1]), float(r[2])) for r in rows)
        spectrum = tuple(float(v) for v in meta["eigenvalues"].split())
        return Embedding(points, float(meta["stress"]), spectrum, float(meta["negative_mass_fraction"]))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed embedding ({exc})") from None


EPOCH_INDEX_COLUMNS = ("epoch_id", "patient_id", "start_time", "end_time")


def write_epoch_index(path, epochs: Sequence[Epoch]) -> None:
    rows = [[e.epoch_id, e.patient_id, e.start_time, e.end_time] for e in epochs]
    write_table(path, {}, EPOCH_INDEX_COLUMNS, rows)


def read_epoch_index(path) -> list[tuple[int, str, int, int]]:
    _, rows = read_table(path, EPOCH_INDEX_COLUMNS)
    try:
        return [(int(r[0]), r[1], int(r[2]), int(r[3])) for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: malformed epoch index ({exc})") from None
