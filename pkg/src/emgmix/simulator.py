"""Seeded synthetic EMG session generator for end-to-end validation.

Each basic motion m gets a nonnegative per-electrode activation envelope
a_m.  A recording of motion m is band-limited noise shared across channels,
scaled per channel by the motion's envelope, plus power-line interference
and per-channel sensor noise:

    channel d = A[d] * (1 + jitter) * carrier(t)
                + interference_amp * sin(2*pi*60*t + phase)
                + baseline_noise * white_d(t)

For a combined motion the amplitude vector is the scaled sum of its
constituents' envelopes, A = c * sum_k a_k, optionally plus a co-contraction
term gamma * geomean_k(a_k) that deliberately breaks additivity.  With
gamma = 0 the simplex patterns of combined motions are exact convex
combinations of their constituents' patterns, which is the ground truth the
synthesis-based training method assumes.

Generation is deterministic per (seed, motion, trial) via counter-based
Philox streams keyed on that triple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .dataset import BASIC, MotionVocabulary, Recording

POWERLINE_HZ = 60.0


@dataclass(frozen=True)
class SimulatorSpec:
    """Full description of a synthetic session; serializable to JSON."""

    vocabulary: MotionVocabulary
    envelopes: np.ndarray  # (n_basic, n_channels), nonnegative
    seed: int
    duration_s: float = 4.0
    sample_rate: float = 2000.0
    trials: int = 6
    emg_band: tuple[float, float] = (20.0, 450.0)
    interference_amp: float = 0.075
    baseline_noise: float = 0.02
    combine_gain: float = 0.6
    cocontraction_gamma: float = 0.0
    trial_jitter: float = 0.1
    subject: str = "sim01"

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.envelopes.shape[0] != self.vocabulary.n_basic:
            raise ValueError("need one envelope per basic motion")
        if np.any(self.envelopes < 0):
            raise ValueError("envelopes must be nonnegative")
        if np.any(self.envelopes.max(axis=1) <= 0):
            raise ValueError("every motion needs at least one positive envelope component")
        if self.duration_s * self.sample_rate < 1:
            raise ValueError("duration times sample rate must give at least one sample")
        low, high = self.emg_band
        if not 0 < low < high < self.sample_rate / 2:
            raise ValueError("emg_band must satisfy 0 < low < high < rate/2")
        if min(self.interference_amp, self.baseline_noise, self.combine_gain) < 0:
            raise ValueError("amplitudes must be nonnegative")
        if self.cocontraction_gamma < 0 or self.trial_jitter < 0:
            raise ValueError("cocontraction_gamma and trial_jitter must be nonnegative")
        if self.trials < 1:
            raise ValueError("need at least one trial")

    @property
    def n_channels(self) -> int:
        return self.envelopes.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "subject": self.subject,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "sample_rate_hz": self.sample_rate,
            "trials": self.trials,
            "emg_band": list(self.emg_band),
            "interference_amp": self.interference_amp,
            "baseline_noise": self.baseline_noise,
            "combine_gain": self.combine_gain,
            "cocontraction_gamma": self.cocontraction_gamma,
            "trial_jitter": self.trial_jitter,
            "basics": [lab.name for lab in self.vocabulary.basics],
            "combineds": [
                {
                    "name": lab.name,
                    "constituents": [self.vocabulary.label(c).name for c in lab.constituents],
                }
                for lab in self.vocabulary.combineds
            ],
            "envelopes": self.envelopes.tolist(),
        }


def ring_envelopes(n_basic: int, n_channels: int, width: float = 1.2) -> np.ndarray:
    """Gaussian activation bumps spread around the electrode ring.

    Bump m peaks at 1.0 on electrode floor(n_channels * m / n_basic); the
    circular distance between electrodes sets the falloff.  Deterministic:
    no randomness enters the envelope construction.
    """
    env = np.empty((n_basic, n_channels))
    channels = np.arange(n_channels)
    for m in range(n_basic):
        center = (n_channels * m) // n_basic
        dist = np.abs(channels - center)
        dist = np.minimum(dist, n_channels - dist)
        env[m] = np.exp(-(dist.astype(np.float64) ** 2) / (2.0 * width**2))
    return env


def default_spec(vocab: MotionVocabulary, seed: int, n_channels: int = 8) -> SimulatorSpec:
    """Spec with ring envelopes and interference at 20% of the mean envelope."""
    if vocab.n_basic < 2:
        raise ValueError("need at least two basic motions for distinct envelopes")
    envelopes = ring_envelopes(vocab.n_basic, n_channels)
    return SimulatorSpec(
        vocabulary=vocab,
        envelopes=envelopes,
        seed=seed,
        interference_amp=0.2 * float(envelopes.mean()),
    )


def amplitude_vector(spec: SimulatorSpec, motion: int) -> np.ndarray:
    """Per-channel amplitude for a motion: the envelope for basics, the
    gain-scaled constituent sum plus the co-contraction term for combineds."""
    label = spec.vocabulary.label(motion)
    if label.kind == BASIC:
        return spec.envelopes[label.id].copy()
    parts = spec.envelopes[list(label.constituents)]
    a = spec.combine_gain * parts.sum(axis=0)
    if spec.cocontraction_gamma > 0:
        a = a + spec.cocontraction_gamma * np.prod(parts, axis=0) ** (1.0 / len(parts))
    return a


def _recording_rng(spec: SimulatorSpec, motion: int, trial: int) -> np.random.Generator:
    ss = np.random.SeedSequence((spec.seed, motion, trial))
    return np.random.Generator(np.random.Philox(ss))


def _band_carrier(rng: np.random.Generator, n: int, band: tuple[float, float], fs: float) -> np.ndarray:
    """Unit-RMS band-limited noise; shared across channels of one recording."""
    pad = int(fs // 2)
    white = rng.standard_normal(n + pad)
    sos = sps.butter(4, band, btype="bandpass", fs=fs, output="sos")
    carrier = sps.sosfilt(sos, white)[pad:]
    return carrier / np.sqrt(np.mean(carrier**2))


def simulate_recording(
    spec: SimulatorSpec,
    motion: int,
    trial: int,
    rng: np.random.Generator | None = None,
) -> Recording:
    """Generate one recording; deterministic given (spec.seed, motion, trial).

    Pass an explicit ``rng`` only to manage streams externally; by default
    each (motion, trial) pair gets its own counter-based stream.
    """
    if not 0 <= motion < spec.vocabulary.n_total:
        raise ValueError(f"unknown motion id {motion}")
    if not 0 <= trial < spec.trials:
        raise ValueError(f"trial {trial} outside 0..{spec.trials - 1}")
    if rng is None:
        rng = _recording_rng(spec, motion, trial)

    n = int(round(spec.duration_s * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    jitter = 1.0 + spec.trial_jitter * rng.standard_normal()
    phase = rng.uniform(0.0, 2.0 * np.pi)
    carrier = _band_carrier(rng, n, spec.emg_band, spec.sample_rate)

    amplitude = amplitude_vector(spec, motion) * jitter
    samples = np.outer(carrier, amplitude)
    samples += spec.interference_amp * np.sin(2.0 * np.pi * POWERLINE_HZ * t + phase)[:, np.newaxis]
    if spec.baseline_noise > 0:
        samples += spec.baseline_noise * rng.standard_normal((n, spec.n_channels))
    return Recording(
        subject=spec.subject,
        trial=trial,
        motion=motion,
        sample_rate=spec.sample_rate,
        samples=samples,
    )


def simulate_session(spec: SimulatorSpec, out_dir: str | Path) -> Path:
    """Write a full session (all motions x all trials) and return the
    manifest path.  The emitted files round-trip through the session loader."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ",".join(f"ch{i + 1}" for i in range(spec.n_channels))

    entries = []
    for label in spec.vocabulary.labels():
        for trial in range(spec.trials):
            rec = simulate_recording(spec, label.id, trial)
            fname = f"{label.name}_t{trial + 1}.csv"
            np.savetxt(
                out_dir / fname,
                rec.samples,
                delimiter=",",
                fmt="%.8g",
                header=header,
                comments="",
            )
            entries.append({"path": fname, "motion": label.name, "trial": trial + 1})

    manifest = {
        "subject": spec.subject,
        "sample_rate_hz": spec.sample_rate,
        "n_channels": spec.n_channels,
        "basics": [lab.name for lab in spec.vocabulary.basics],
        "combineds": [
            {
                "name": lab.name,
                "constituents": [spec.vocabulary.label(c).name for c in lab.constituents],
            }
            for lab in spec.vocabulary.combineds
        ],
        "recordings": entries,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with open(out_dir / "sim_spec.json", "w") as fh:
        json.dump(spec.to_json_dict(), fh, indent=2, sort_keys=True)
    return manifest_path
