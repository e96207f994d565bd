"""Preprocessing chain from raw EMG to simplex feature vectors.

Stages: band-stop filtering (power-line removal), full-wave rectification,
low-pass smoothing (envelope extraction), initial-transient trimming, and
a two-step normalization (per-channel division by the training maximum,
then per-frame division by the channel sum).  All filters are Butterworth
designs applied causally with zero initial state, as they would run on a
live prosthesis controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .dataset import Pattern, Recording


@dataclass(frozen=True)
class BiquadCascade:
    """IIR filter as a cascade of second-order sections.

    Each section is (b0, b1, b2, a1, a2) with a0 normalized to 1.  Every
    section must be stable (poles strictly inside the unit circle).
    """

    sections: tuple[tuple[float, float, float, float, float], ...]
    design_rate: float

    def __post_init__(self):
        if not self.sections:
            raise ValueError("cascade needs at least one section")
        for b0, b1, b2, a1, a2 in self.sections:
            poles = np.roots([1.0, a1, a2])
            if np.any(np.abs(poles) >= 1.0):
                raise ValueError("unstable section: pole on or outside the unit circle")

    @property
    def n_sections(self) -> int:
        return len(self.sections)

    def as_sos(self) -> np.ndarray:
        """Sections in scipy's (n, 6) sos layout."""
        return np.array([[b0, b1, b2, 1.0, a1, a2] for b0, b1, b2, a1, a2 in self.sections])

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response evaluated on the unit circle."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / self.design_rate
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        h = np.ones_like(z1, dtype=np.complex128)
        for b0, b1, b2, a1, a2 in self.sections:
            h = h * (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
        return h

    def magnitude_db(self, freqs_hz) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.response(freqs_hz)))


def _cascade_from_sos(sos: np.ndarray, fs: float) -> BiquadCascade:
    sections = []
    for row in sos:
        b0, b1, b2, a0, a1, a2 = row
        sections.append((b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0))
    return BiquadCascade(sections=tuple(sections), design_rate=fs)


def design_bandstop(low_hz: float, high_hz: float, order: int, fs: float) -> BiquadCascade:
    """Butterworth band-stop of the given total order (must be even)."""
    if order < 2 or order % 2 != 0:
        raise ValueError(f"band-stop order must be a positive even integer, got {order}")
    if not 0 < low_hz < high_hz < fs / 2:
        raise ValueError(
            f"need 0 < low < high < fs/2, got low={low_hz}, high={high_hz}, fs={fs}"
        )
    sos = sps.butter(order // 2, [low_hz, high_hz], btype="bandstop", fs=fs, output="sos")
    return _cascade_from_sos(sos, fs)


def design_lowpass(cutoff_hz: float, order: int, fs: float) -> BiquadCascade:
    """Butterworth low-pass; -3 dB at the cutoff, unity DC gain."""
    if order < 1:
        raise ValueError(f"low-pass order must be >= 1, got {order}")
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"need 0 < cutoff < fs/2, got cutoff={cutoff_hz}, fs={fs}")
    sos = sps.butter(order, cutoff_hz, btype="lowpass", fs=fs, output="sos")
    return _cascade_from_sos(sos, fs)


def filter_forward(cascade: BiquadCascade, x: np.ndarray) -> np.ndarray:
    """Causal filtering (direct form II transposed), zero initial state.

    Accepts a 1-D signal or an (n_samples, n_channels) matrix filtered
    column-wise; output has the same shape as the input.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot filter an empty signal")
    return sps.sosfilt(cascade.as_sos(), x, axis=0)


@dataclass(frozen=True)
class PipelineConfig:
    """Filter and normalization settings for the preprocessing chain."""

    bandstop_low: float = 60.0
    bandstop_high: float = 62.0
    bandstop_order: int = 4
    lowpass_cutoff: float = 2.0
    lowpass_order: int = 2
    trim_fraction: float = 0.05

    def __post_init__(self):
        if not 0 < self.bandstop_low < self.bandstop_high:
            raise ValueError("need 0 < bandstop_low < bandstop_high")
        if self.lowpass_cutoff <= 0:
            raise ValueError("lowpass_cutoff must be positive")
        if not 0 <= self.trim_fraction < 1:
            raise ValueError("trim_fraction must be in [0, 1)")


@lru_cache(maxsize=64)
def _design_chain(config: PipelineConfig, fs: float) -> tuple[BiquadCascade, BiquadCascade]:
    bandstop = design_bandstop(config.bandstop_low, config.bandstop_high, config.bandstop_order, fs)
    lowpass = design_lowpass(config.lowpass_cutoff, config.lowpass_order, fs)
    return bandstop, lowpass


def smooth_rectified(recording: Recording, config: PipelineConfig) -> np.ndarray:
    """Band-stop -> rectify -> low-pass -> drop the initial transient.

    Returns the per-channel envelope, shape (n_kept, n_channels).  This is
    the fold-independent part of preprocessing; normalization happens later.
    """
    bandstop, lowpass = _design_chain(config, recording.sample_rate)
    env = filter_forward(bandstop, recording.samples)
    np.abs(env, out=env)
    env = filter_forward(lowpass, env)
    n = env.shape[0]
    drop = int(n * config.trim_fraction)
    return env[drop:]


@dataclass(frozen=True)
class NormalizationParams:
    """Per-channel maxima of the smoothed rectified training signals.

    ``design_rate`` records the sample rate the parameters were fit at so
    that later use against a mismatched recording can be rejected.
    """

    channel_max: np.ndarray
    design_rate: float

    def __post_init__(self):
        if np.any(self.channel_max <= 0):
            raise ValueError("every channel maximum must be strictly positive")


def fit_normalization(
    train_recordings: Sequence[Recording],
    config: PipelineConfig,
) -> NormalizationParams:
    """Per-channel maxima over all training envelopes (after trimming)."""
    if not train_recordings:
        raise ValueError("no training recordings")
    channel_max = None
    rate = train_recordings[0].sample_rate
    for rec in train_recordings:
        if rec.sample_rate != rate:
            raise ValueError("training recordings have mixed sample rates")
        peaks = smooth_rectified(rec, config).max(axis=0)
        channel_max = peaks if channel_max is None else np.maximum(channel_max, peaks)
    if np.any(channel_max <= 0):
        flat = np.flatnonzero(channel_max <= 0).tolist()
        raise ValueError(f"flat channel(s) {flat}: zero maximum in training data")
    return NormalizationParams(channel_max=channel_max, design_rate=rate)


def normalize_envelope(
    env: np.ndarray,
    params: NormalizationParams,
    max_dropped_fraction: float = 0.01,
) -> tuple[np.ndarray, np.ndarray]:
    """Two-step normalization of an envelope matrix.

    Clamps smoothing undershoot to zero, divides channel d by
    ``channel_max[d]``, then divides each frame by its component sum so
    every row lies on the probability simplex.  Frames whose components
    are all zero cannot be normalized and are dropped; more than
    ``max_dropped_fraction`` dropped frames is an error.

    Returns ``(x, kept)`` where ``x`` is (n_kept, n_channels) and ``kept``
    holds the surviving row indices of ``env``.
    """
    env = np.maximum(env, 0.0)
    scaled = env / params.channel_max
    sums = scaled.sum(axis=1)
    kept = np.flatnonzero(sums > 0.0)
    n_dropped = env.shape[0] - kept.size
    if n_dropped > max_dropped_fraction * env.shape[0]:
        raise ValueError(
            f"{n_dropped} of {env.shape[0]} frames are all-zero and cannot be normalized"
        )
    x = scaled[kept] / sums[kept, np.newaxis]
    return x, kept


def preprocess(
    recording: Recording,
    params: NormalizationParams,
    config: PipelineConfig,
) -> list[Pattern]:
    """Full chain from a raw recording to simplex patterns.

    Frame indices refer to sample positions in the original recording.
    """
    if recording.sample_rate != params.design_rate:
        raise ValueError(
            f"recording rate {recording.sample_rate} differs from the rate "
            f"normalization was fit at ({params.design_rate})"
        )
    env = smooth_rectified(recording, config)
    drop = recording.samples.shape[0] - env.shape[0]
    x, kept = normalize_envelope(env, params)
    return [
        Pattern(x=x[i], motion=recording.motion, trial=recording.trial, frame_index=drop + int(k))
        for i, k in enumerate(kept)
    ]


def dump_patterns_csv(patterns: Sequence[Pattern], path: str | Path) -> None:
    """Debug dump: one row per pattern, columns motion,trial,frame,x1..xD."""
    if not patterns:
        raise ValueError("no patterns to dump")
    d = patterns[0].x.shape[0]
    header = "motion,trial,frame," + ",".join(f"x{i + 1}" for i in range(d))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p in patterns:
            values = ",".join(repr(float(v)) for v in p.x)
            fh.write(f"{p.motion},{p.trial},{p.frame_index},{values}\n")
