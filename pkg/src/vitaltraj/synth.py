"""Synthetic two-channel (HR, RR) corpus with known abnormal segments.

Each file is a shared noise-free base signal (a diurnal sine plus a low
amplitude 4-hour sine), per-file correlated Gaussian noise, and for a few
files a perturbation over the trailing part of the recording.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .signal_model import Epoch, PatientRecord

CHANNELS = ("hr", "rr")


class PerturbationType(enum.IntEnum):
    TYPE1 = 1  # step offset on HR
    TYPE2 = 2  # HR and RR rise
    TYPE3 = 3  # HR rises, RR falls


DEFAULT_PERTURBED_FILES = (
    (0, PerturbationType.TYPE1),
    (1, PerturbationType.TYPE1),
    (2, PerturbationType.TYPE2),
    (3, PerturbationType.TYPE2),
    (4, PerturbationType.TYPE3),
    (5, PerturbationType.TYPE3),
)

DEFAULT_SEED = 20210301


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 20
    duration_days: int = 8
    samples_per_minute: int = 1
    diurnal_period_minutes: int = 1440
    secondary_period_minutes: int = 240
    diurnal_amplitude: float = 0.25
    secondary_amplitude: float = 0.0625
    noise_cov_range: tuple[float, float] = (0.15, 0.6)
    noise_scale: float = 1.0
    perturbation_fraction: float = 0.10
    perturbation_sigma: float = 1.5
    # Minutes for the type 2/3 rise; None ramps across the whole window.
    ramp_minutes: Optional[int] = 162
    # "vector": the two-channel offset has norm perturbation_sigma (in per-channel SD units).
    # "channel": each channel moves by perturbation_sigma SDs.
    two_channel_norm: str = "vector"
    perturbed_files: tuple = DEFAULT_PERTURBED_FILES
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.n_patients < 1:
            raise ConfigError("n_patients must be >= 1")
        if self.duration_days < 1:
            raise ConfigError("duration_days must be >= 1")
        if self.samples_per_minute != 1:
            raise ConfigError("only 1 sample per minute is supported")
        if not 0 < self.perturbation_fraction < 1:
            raise ConfigError("perturbation_fraction must be in (0, 1)")
        lo, hi = self.noise_cov_range
        if not 0 <= lo <= hi < 1:
            raise ConfigError(f"noise_cov_range must satisfy 0 <= lo <= hi < 1, got {self.noise_cov_range}")
        if self.noise_scale < 0 or self.perturbation_sigma < 0:
            raise ConfigError("noise_scale and perturbation_sigma must be >= 0")
        if self.ramp_minutes is not None and self.ramp_minutes < 0:
            raise ConfigError("ramp_minutes must be >= 0")
        if self.two_channel_norm not in ("vector", "channel"):
            raise ConfigError("two_channel_norm must be 'vector' or 'channel'")
        files = tuple((int(i), PerturbationType(t)) for i, t in self.perturbed_files)
        for idx, _ in files:
            if not 0 <= idx < self.n_patients:
                raise ConfigError(f"perturbed file index {idx} outside 0..{self.n_patients - 1}")
        if len({i for i, _ in files}) != len(files):
            raise ConfigError("a file can carry only one perturbation")
        object.__setattr__(self, "perturbed_files", files)

    @property
    def n_samples(self) -> int:
        return self.duration_days * 1440 * self.samples_per_minute

    @property
    def window(self) -> tuple[int, int]:
        """Perturbed sample range ``[start, stop)``: the trailing fraction of a file."""
        length = int(math.floor(self.perturbation_fraction * self.n_samples))
        return self.n_samples - length, self.n_samples

    def patient_id(self, index: int) -> str:
        return f"synth-{index:02d}"


def base_signal(t, config: SynthConfig = SynthConfig()):
    """Diurnal plus 4-hour sine at minute(s) ``t``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ConfigError("t must be >= 0")
    out = config.diurnal_amplitude * np.sin(2 * np.pi * t / config.diurnal_period_minutes)
    out = out + config.secondary_amplitude * np.sin(2 * np.pi * t / config.secondary_period_minutes)
    return float(out) if out.ndim == 0 else out


def sample_noise_covariance(rng: np.random.Generator, cov_range=(0.15, 0.6)) -> np.ndarray:
    """Unit-variance 2x2 covariance with off-diagonal drawn uniformly from ``cov_range``."""
    rho = rng.uniform(*cov_range)
    return np.array([[1.0, rho], [rho, 1.0]])


def ramp_profile(length: int, ramp_minutes: Optional[int]) -> np.ndarray:
    """0 at the first sample rising linearly to 1 after ``ramp_minutes``, then flat."""
    r = length if ramp_minutes is None else min(ramp_minutes, length)
    if r <= 1:
        return np.ones(length)
    return np.minimum(np.arange(length) / (r - 1), 1.0)


def apply_perturbation(
    series,
    ptype: PerturbationType,
    window: tuple[int, int],
    sigma,
    scale: float,
    ramp_minutes: Optional[int] = None,
    two_channel_norm: str = "channel",
) -> np.ndarray:
    """Add one perturbation to a (T, 2) HR/RR array over ``window = (start, stop)``.

    Type 1 adds ``scale * sigma_hr`` to HR. Types 2 and 3 ramp HR up and RR
    up (type 2) or down (type 3), reaching the full offset after
    ``ramp_minutes`` (whole window when None). With ``two_channel_norm ==
    "vector"`` the two-channel offset is divided by sqrt(2) so its norm in SD
    units equals ``scale``.
    """
    x = np.array(series, dtype=np.float64, copy=True)
    start, stop = window
    if stop <= start:
        raise ConfigError(f"empty perturbation window {window}")
    if x.ndim != 2 or x.shape[1] != 2:
        raise ConfigError(f"expected a (T, 2) series, got {x.shape}")
    sigma = np.asarray(sigma, dtype=np.float64)
    ptype = PerturbationType(ptype)
    length = stop - start
    if ptype is PerturbationType.TYPE1:
        x[start:stop, 0] += scale * sigma[0]
        return x
    mag = scale / math.sqrt(2.0) if two_channel_norm == "vector" else scale
    r = ramp_profile(length, ramp_minutes)
    sign_rr = 1.0 if ptype is PerturbationType.TYPE2 else -1.0
    x[start:stop, 0] += mag * sigma[0] * r
    x[start:stop, 1] += sign_rr * mag * sigma[1] * r
    return x


def _child_seeds(config: SynthConfig):
    return np.random.SeedSequence(config.seed).spawn(config.n_patients)


def generate_file(index: int, config: SynthConfig, perturb: bool = True) -> tuple[np.ndarray, float]:
    """One file's (T, 2) samples and its drawn noise correlation.

    Every file draws from its own child seed, so files can be generated in
    any order or in parallel with identical output.
    """
    rng = np.random.default_rng(_child_seeds(config)[index])
    cov = sample_noise_covariance(rng, config.noise_cov_range)
    noise = rng.standard_normal((config.n_samples, 2)) @ np.linalg.cholesky(cov).T
    t = np.arange(config.n_samples) / config.samples_per_minute
    x = base_signal(t, config)[:, None] + config.noise_scale * noise
    if perturb:
        kinds = dict(config.perturbed_files)
        if index in kinds:
            x = apply_perturbation(
                x,
                kinds[index],
                config.window,
                x.std(axis=0),
                config.perturbation_sigma,
                config.ramp_minutes,
                config.two_channel_norm,
            )
    return x, float(cov[0, 1])


def generate_corpus(config: SynthConfig = SynthConfig()) -> list[PatientRecord]:
    """All files as HR/RR patient records, sampled once per minute."""
    records = []
    times = np.arange(config.n_samples, dtype=np.int64)
    for i in range(config.n_patients):
        x, _ = generate_file(i, config)
        records.append(PatientRecord(config.patient_id(i), CHANNELS, times, x, np.zeros(x.shape, bool)))
    return records


def abnormal_minutes(config: SynthConfig) -> int:
    start, stop = config.window
    return (stop - start) * len(config.perturbed_files)


# -- ground truth for evaluation ---------------------------------------------

NORMAL = "normal"


@dataclass(frozen=True)
class EpochTruth:
    """``kind`` is "normal", "full" (entirely inside the window) or "transitional"."""

    kind: str
    ptype: Optional[PerturbationType] = None

    @property
    def label(self) -> str:
        if self.kind == NORMAL:
            return NORMAL
        return f"{self.kind}-{int(self.ptype)}"


def epoch_truth(epochs: Sequence[Epoch], config: SynthConfig) -> list[EpochTruth]:
    """Classify epochs against the perturbation windows of ``config``."""
    by_id = {config.patient_id(i): t for i, t in config.perturbed_files}
    start, stop = config.window
    out = []
    for e in epochs:
        ptype = by_id.get(e.patient_id)
        lo, hi = e.start_time, e.end_time + 1
        if ptype is None or hi <= start or lo >= stop:
            out.append(EpochTruth(NORMAL))
        elif lo >= start and hi <= stop:
            out.append(EpochTruth("full", ptype))
        else:
            out.append(EpochTruth("transitional", ptype))
    return out
