"""Turn raw patient streams into analysis-ready epochs.

The order is fixed: plausibility screening, per-patient z-normalization,
median filtering per contiguous segment, then tiling into epochs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, DegenerateChannelError
from .signal_model import Epoch, PatientRecord

log = logging.getLogger(__name__)

# Applied only to channels that are present; HR and RR are left unscreened.
DEFAULT_PLAUSIBILITY_BOUNDS = {"temp": (34.0, 43.0)}

Bounds = Mapping[str, tuple[Optional[float], Optional[float]]]


@dataclass(frozen=True)
class PreprocessConfig:
    epoch_minutes: int = 180
    median_window: int = 25
    gap_tolerance_minutes: int = 5
    # None means DEFAULT_PLAUSIBILITY_BOUNDS restricted to the channels present.
    plausibility_bounds: Optional[Bounds] = None
    zero_variance_epsilon: float = 1e-9

    def __post_init__(self):
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ConfigError(f"median_window must be odd and >= 1, got {self.median_window}")
        if self.epoch_minutes <= self.median_window:
            raise ConfigError(
                f"epoch_minutes ({self.epoch_minutes}) must exceed median_window ({self.median_window})"
            )
        if self.gap_tolerance_minutes < 0:
            raise ConfigError("gap_tolerance_minutes must be >= 0")
        if not self.zero_variance_epsilon > 0:
            raise ConfigError("zero_variance_epsilon must be positive")

    def bounds_for(self, record: PatientRecord) -> dict:
        if self.plausibility_bounds is None:
            return {c: b for c, b in DEFAULT_PLAUSIBILITY_BOUNDS.items() if c in record.channels}
        return dict(self.plausibility_bounds)


@dataclass
class PreprocessReport:
    """What happened to one patient on the way to epochs."""

    patient_id: str
    implausible_fraction: dict = field(default_factory=dict)
    segments: int = 0
    skipped_segments: int = 0
    epochs: int = 0
    discarded_minutes: int = 0


def screen_plausibility(record: PatientRecord, bounds: Bounds):
    """Mark readings outside per-channel ``(low, high)`` bounds as missing.

    Either bound may be ``None``. Returns the screened record and, for each
    bounded channel, the implausible count divided by the non-missing count.
    """
    if not bounds:
        raise ConfigError("screen_plausibility needs bounds for at least one channel")
    values = np.array(record.values)
    missing = np.array(record.missing)
    fractions = {}
    for name, (low, high) in bounds.items():
        if name not in record.channels:
            raise ConfigError(
                f"plausibility bounds given for channel {name!r}, "
                f"record {record.patient_id!r} has {list(record.channels)}"
            )
        col = record.channel_index(name)
        present = ~missing[:, col]
        x = values[:, col]
        bad = np.zeros(len(x), dtype=bool)
        with np.errstate(invalid="ignore"):
            if low is not None:
                bad |= x < low
            if high is not None:
                bad |= x > high
        bad &= present
        n_present = int(present.sum())
        fractions[name] = bad.sum() / n_present if n_present else 0.0
        missing[bad, col] = True
        values[bad, col] = np.nan
    return record.replace(values=values, missing=missing), fractions


def normalize_per_patient(record: PatientRecord, epsilon: float = 1e-9) -> PatientRecord:
    """Z-normalize each channel over the patient's whole recording.

    Uses the population standard deviation of the non-missing readings.
    """
    values = np.array(record.values)
    for col, name in enumerate(record.channels):
        present = ~record.missing[:, col]
        x = values[present, col]
        if len(x) < 2:
            raise DataError(
                f"patient {record.patient_id!r}, channel {name!r}: "
                f"need >= 2 readings to normalize, have {len(x)}"
            )
        # Corrected two-pass: re-centering removes the rounding left in the mean.
        d = x - x.mean()
        d -= d.mean()
        std = float(np.sqrt(np.mean(d * d)))
        if std < epsilon:
            raise DegenerateChannelError(name, std)
        values[present, col] = d / std
    return record.replace(values=values, missing=record.missing)


def median_filter(series, window: int) -> np.ndarray:
    """Centered running median with nearest-edge replication at both ends.

    >>> median_filter([1, 9, 2, 8, 3], 3).tolist()
    [1.0, 2.0, 8.0, 3.0, 3.0]
    """
    x = np.asarray(series, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"median window must be odd and >= 1, got {window}")
    if window > len(x):
        raise DataError(f"segment of length {len(x)} is shorter than median window {window}")
    if not np.all(np.isfinite(x)):
        raise DataError("median_filter input contains missing values")
    if window == 1:
        return x.copy()
    return ndimage.median_filter(x, size=window, mode="nearest")


def contiguous_segments(record: PatientRecord, gap_tolerance: int) -> list[tuple[int, np.ndarray]]:
    """Split a stream into dense per-minute segments.

    A minute counts as a gap when any channel is missing it (or no sample
    exists). Runs of gap minutes longer than ``gap_tolerance`` split the
    stream; shorter runs are bridged by per-channel linear interpolation.
    Returns ``(start_minute, values)`` pairs with no missing entries.
    """
    if len(record) == 0:
        return []
    t0 = int(record.times[0])
    span = int(record.times[-1]) - t0 + 1
    grid = np.full((span, len(record.channels)), np.nan)
    grid[record.times - t0] = np.where(record.missing, np.nan, record.values)
    ok = np.all(np.isfinite(grid), axis=1)
    if not ok.any():
        return []

    # Boundaries of runs of ok / not-ok minutes.
    change = np.flatnonzero(np.diff(ok.astype(np.int8))) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [span]))

    segments = []
    seg_start = None
    seg_end = None
    for s, e in zip(starts, ends):
        if ok[s]:
            if seg_start is None:
                seg_start = s
            seg_end = e
        elif seg_start is not None and (e - s) > gap_tolerance:
            segments.append((seg_start, seg_end))
            seg_start = None
    if seg_start is not None:
        segments.append((seg_start, seg_end))

    out = []
    for s, e in segments:
        block = grid[s:e].copy()
        pos = np.arange(e - s)
        for col in range(block.shape[1]):
            bad = ~np.isfinite(block[:, col])
            if bad.any():
                block[bad, col] = np.interp(pos[bad], pos[~bad], block[~bad, col])
        out.append((t0 + int(s), block))
    return out


def filter_record(record: PatientRecord, window: int, gap_tolerance: int, report=None) -> PatientRecord:
    """Median-filter every channel within each contiguous segment.

    Segments shorter than the window are dropped with a warning. The result is
    dense over the retained segments (bridged gaps become interpolated values).
    """
    times = []
    blocks = []
    for start, block in contiguous_segments(record, gap_tolerance):
        if len(block) < window:
            log.warning(
                "patient %s: segment at minute %d has %d samples, shorter than median window %d; skipped",
                record.patient_id, start, len(block), window,
            )
            if report is not None:
                report.skipped_segments += 1
            continue
        filtered = np.column_stack([median_filter(block[:, c], window) for c in range(block.shape[1])])
        times.append(np.arange(start, start + len(block)))
        blocks.append(filtered)
    if blocks:
        t = np.concatenate(times)
        v = np.concatenate(blocks)
    else:
        t = np.empty(0, dtype=np.int64)
        v = np.empty((0, len(record.channels)))
    return record.replace(times=t, values=v, missing=np.zeros(v.shape, dtype=bool))


def segment_epochs(record: PatientRecord, config: PreprocessConfig, first_epoch_id: int = 0, report=None) -> list[Epoch]:
    """Tile each contiguous segment left-to-right into non-overlapping epochs.

    Trailing remainders shorter than ``config.epoch_minutes`` are discarded.
    Epoch ids are assigned consecutively from ``first_epoch_id``.
    """
    m = config.epoch_minutes
    epochs = []
    segments = contiguous_segments(record, config.gap_tolerance_minutes)
    for start, block in segments:
        n_full = len(block) // m
        for k in range(n_full):
            epochs.append(
                Epoch(first_epoch_id + len(epochs), record.patient_id, start + k * m, block[k * m:(k + 1) * m])
            )
        if report is not None:
            report.discarded_minutes += len(block) - n_full * m
    if report is not None:
        report.segments = len(segments)
        report.epochs = len(epochs)
    return epochs


def preprocess_record(record: PatientRecord, config: PreprocessConfig, first_epoch_id: int = 0):
    """Run screen, normalize, filter and segment on one patient.

    Returns ``(epochs, report)``.
    """
    report = PreprocessReport(record.patient_id)
    bounds = config.bounds_for(record)
    if bounds:
        record, report.implausible_fraction = screen_plausibility(record, bounds)
    record = normalize_per_patient(record, config.zero_variance_epsilon)
    record = filter_record(record, config.median_window, config.gap_tolerance_minutes, report)
    epochs = segment_epochs(record, config, first_epoch_id, report)
    return epochs, report


def build_epochs(records: Sequence[PatientRecord], config: PreprocessConfig):
    """Preprocess every patient; epoch ids are global and follow input order."""
    epochs = []
    reports = []
    for record in records:
        got, report = preprocess_record(record, config, first_epoch_id=len(epochs))
        epochs.extend(got)
        reports.append(report)
    return epochs, reports
