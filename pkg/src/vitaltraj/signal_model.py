"""Core data types: raw patient streams, epochs and distance matrices.

All types are immutable after construction. Array fields are stored as
read-only numpy arrays so they can be shared between workers freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionError


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _dumps(obj) -> str:
    # json emits floats via repr(), the shortest round-trip decimal.
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class SampleRecord:
    """One per-minute reading. ``None`` in ``values`` marks a missing reading."""

    timestamp: int
    values: tuple[Optional[float], ...]


@dataclass(frozen=True, eq=False)
class PatientRecord:
    """A patient's multichannel stream.

    Stored column-wise: ``times`` (T,) integer minutes since stream start,
    ``values`` (T, C) readings and ``missing`` (T, C) boolean mask. Missing
    slots hold NaN in ``values`` but the mask is authoritative.
    """

    patient_id: str
    channels: tuple[str, ...]
    times: np.ndarray
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        channels = tuple(str(c) for c in self.channels)
        if len(set(channels)) != len(channels):
            raise DataError(f"duplicate channel names in {channels}")
        times = _frozen(self.times, np.int64).reshape(-1)
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.size == 0:
            values = values.reshape(len(times), len(channels))
        if values.ndim != 2 or values.shape != (len(times), len(channels)):
            raise DimensionError(
                f"values shape {values.shape} does not match "
                f"{len(times)} samples x {len(channels)} channels"
            )
        missing = np.array(self.missing, dtype=bool, copy=True).reshape(values.shape)
        if np.any(~np.isfinite(values) & ~missing):
            raise DataError(f"patient {self.patient_id!r}: non-finite reading not marked missing")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise DataError(f"patient {self.patient_id!r}: timestamps not strictly increasing")
        values[missing] = np.nan
        values.setflags(write=False)
        missing.setflags(write=False)
        object.__setattr__(self, "patient_id", str(self.patient_id))
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_samples(cls, patient_id: str, channels: Sequence[str], samples: Sequence[SampleRecord]):
        n_ch = len(channels)
        times = np.empty(len(samples), dtype=np.int64)
        values = np.full((len(samples), n_ch), np.nan)
        for row, s in enumerate(samples):
            if len(s.values) != n_ch:
                raise DimensionError(
                    f"sample at t={s.timestamp} has {len(s.values)} values, expected {n_ch}"
                )
            times[row] = s.timestamp
            for col, v in enumerate(s.values):
                if v is not None:
                    values[row, col] = v
        return cls(patient_id, tuple(channels), times, values, np.isnan(values))

    @property
    def samples(self) -> list[SampleRecord]:
        return [
            SampleRecord(
                int(t),
                tuple(None if m else float(v) for v, m in zip(row, mrow)),
            )
            for t, row, mrow in zip(self.times, self.values, self.missing)
        ]

    def __len__(self):
        return len(self.times)

    def channel_index(self, name: str) -> int:
        try:
            return self.channels.index(name)
        except ValueError:
            raise KeyError(name) from None

    def replace(self, times=None, values=None, missing=None, channels=None) -> "PatientRecord":
        """Copy with some columns swapped out."""
        values = self.values if values is None else values
        if missing is None:
            missing = ~np.isfinite(values)
        return PatientRecord(
            self.patient_id,
            self.channels if channels is None else channels,
            self.times if times is None else times,
            values,
            missing,
        )

    def select_channels(self, names: Sequence[str]) -> "PatientRecord":
        idx = [self.channel_index(n) for n in names]
        return PatientRecord(
            self.patient_id, tuple(names), self.times, self.values[:, idx], self.missing[:, idx]
        )

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        return (
            self.patient_id == other.patient_id
            and self.channels == other.channels
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.missing, other.missing)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "channels": list(self.channels),
            "times": self.times.tolist(),
            "values": [
                [None if m else float(v) for v, m in zip(row, mrow)]
                for row, mrow in zip(self.values, self.missing)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatientRecord":
        channels = tuple(d["channels"])
        raw = d["values"]
        values = np.array(
            [[np.nan if v is None else v for v in row] for row in raw], dtype=np.float64
        ).reshape(len(raw), len(channels))
        return cls(d["patient_id"], channels, d["times"], values, np.isnan(values))

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PatientRecord":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Epoch:
    """A fixed-length preprocessed segment; ``data`` has shape (length, channels)."""

    epoch_id: int
    patient_id: str
    start_time: int
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data, np.float64)
        if data.ndim != 2:
            raise DimensionError(f"epoch data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError(f"epoch {self.epoch_id} contains non-finite entries")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "epoch_id", int(self.epoch_id))
        object.__setattr__(self, "start_time", int(self.start_time))

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def end_time(self) -> int:
        """Last minute covered (inclusive)."""
        return self.start_time + self.length - 1

    def __eq__(self, other):
        if not isinstance(other, Epoch):
            return NotImplemented
        return (
            self.epoch_id == other.epoch_id
            and self.patient_id == other.patient_id
            and self.start_time == other.start_time
            and np.array_equal(self.data, other.data)
        )

    def to_dict(self) -> dict:
        return {
            "epoch_id": self.epoch_id,
            "patient_id": self.patient_id,
            "start_time": self.start_time,
            "data": self.data.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Epoch":
        return cls(d["epoch_id"], d["patient_id"], d["start_time"], np.array(d["data"], dtype=float))

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Epoch":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric, non-negative, zero-diagonal matrix of pairwise distances."""

    entries: np.ndarray
    epoch_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        entries = _frozen(self.entries, np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionError(f"distance matrix must be square, got {entries.shape}")
        n = entries.shape[0]
        ids = tuple(int(i) for i in self.epoch_ids) if len(self.epoch_ids) else tuple(range(n))
        if len(ids) != n:
            raise DimensionError(f"{len(ids)} epoch ids for a {n}x{n} matrix")
        if len(set(ids)) != n:
            raise DataError("epoch ids must be unique")
        if not np.all(np.isfinite(entries)):
            raise DataError("distance matrix has non-finite entries")
        if np.any(entries < 0):
            raise DataError("distance matrix has negative entries")
        if np.any(np.diag(entries) != 0):
            raise DataError("distance matrix diagonal must be zero")
        if not np.array_equal(entries, entries.T):
            raise DataError("distance matrix is not symmetric")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "epoch_ids", ids)

    @property
    def n_epochs(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return self.epoch_ids == other.epoch_ids and np.array_equal(self.entries, other.entries)

    def index_of(self, epoch_id: int) -> int:
        return self.epoch_ids.index(epoch_id)

    def to_dict(self) -> dict:
        return {"epoch_ids": list(self.epoch_ids), "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceMatrix":
        n = len(d["epoch_ids"])
        return cls(np.array(d["entries"], dtype=float).reshape(n, n), tuple(d["epoch_ids"]))

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DistanceMatrix":
        return cls.from_dict(json.loads(text))
