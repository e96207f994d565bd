"""Motion vocabulary, recording data model, session manifests, and trial splits.

A session holds multichannel EMG recordings for a set of *basic* motions
(single movements) and *combined* motions (two or more basics executed
concurrently).  Motions are indexed densely: basics first (0..n_basic-1),
combineds after (n_basic..n_basic+n_combined-1).  Trial indices are 1-based
in manifest files and 0-based everywhere in memory.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BASIC = "basic"
COMBINED = "combined"


@dataclass(frozen=True)
class MotionLabel:
    """One motion class: a basic movement or a combination of basics."""

    id: int
    name: str
    kind: str
    constituents: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in (BASIC, COMBINED):
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.kind == BASIC and self.constituents != (self.id,):
            raise ValueError(f"basic motion {self.name!r} must be its own constituent")
        if self.kind == COMBINED:
            if len(self.constituents) < 2:
                raise ValueError(f"combined motion {self.name!r} needs >= 2 constituents")
            if len(set(self.constituents)) != len(self.constituents):
                raise ValueError(f"combined motion {self.name!r} has duplicate constituents")


@dataclass(frozen=True)
class MotionVocabulary:
    """Densely indexed set of basic and combined motion classes."""

    basics: tuple[MotionLabel, ...]
    combineds: tuple[MotionLabel, ...]

    @property
    def n_basic(self) -> int:
        return len(self.basics)

    @property
    def n_combined(self) -> int:
        return len(self.combineds)

    @property
    def n_total(self) -> int:
        return len(self.basics) + len(self.combineds)

    def labels(self) -> tuple[MotionLabel, ...]:
        return self.basics + self.combineds

    def label(self, motion_id: int) -> MotionLabel:
        labels = self.labels()
        if not 0 <= motion_id < len(labels):
            raise KeyError(f"motion id {motion_id} out of range")
        return labels[motion_id]

    def id_of(self, name: str) -> int:
        for lab in self.labels():
            if lab.name == name:
                return lab.id
        raise KeyError(f"unknown motion name {name!r}")


def build_vocabulary(
    basic_names: Sequence[str],
    combined_defs: Sequence[tuple[str, Sequence[str]]],
) -> MotionVocabulary:
    """Build a vocabulary from basic-motion names and combined-motion definitions.

    ``combined_defs`` is a sequence of ``(name, [constituent basic names])``
    pairs.  Indices are assigned densely in the order given.
    """
    names_seen: set[str] = set()
    basics = []
    for i, name in enumerate(basic_names):
        if name in names_seen:
            raise ValueError(f"duplicate motion name {name!r}")
        names_seen.add(name)
        basics.append(MotionLabel(id=i, name=name, kind=BASIC, constituents=(i,)))

    basic_index = {lab.name: lab.id for lab in basics}
    combineds = []
    for j, (name, parts) in enumerate(combined_defs):
        if name in names_seen:
            raise ValueError(f"duplicate motion name {name!r}")
        names_seen.add(name)
        ids = []
        for part in parts:
            if part not in basic_index:
                raise ValueError(f"combined motion {name!r} references unknown basic {part!r}")
            ids.append(basic_index[part])
        if len(set(ids)) != len(ids):
            raise ValueError(f"combined motion {name!r} constituents are not distinct")
        combineds.append(
            MotionLabel(id=len(basics) + j, name=name, kind=COMBINED, constituents=tuple(ids))
        )
    return MotionVocabulary(basics=tuple(basics), combineds=tuple(combineds))


# Basic motions S1-S6 (opening, grasping, extension, flexion, pronation,
# supination) and the twelve two-way combinations C1-C12 used throughout
# the default experiments.
DEFAULT_BASICS = ("S1", "S2", "S3", "S4", "S5", "S6")
DEFAULT_COMBINEDS = (
    ("C1", ("S1", "S5")),
    ("C2", ("S2", "S5")),
    ("C3", ("S3", "S5")),
    ("C4", ("S4", "S5")),
    ("C5", ("S1", "S6")),
    ("C6", ("S2", "S6")),
    ("C7", ("S3", "S6")),
    ("C8", ("S4", "S6")),
    ("C9", ("S1", "S3")),
    ("C10", ("S2", "S3")),
    ("C11", ("S1", "S4")),
    ("C12", ("S2", "S4")),
)


def default_vocabulary() -> MotionVocabulary:
    """Six basic motions plus the twelve standard pairwise combinations."""
    return build_vocabulary(DEFAULT_BASICS, DEFAULT_COMBINEDS)


@dataclass(frozen=True)
class Recording:
    """Raw multichannel EMG for one (motion, trial), in millivolts.

    ``samples`` has shape (n_samples, n_channels); ``trial`` is 0-based.
    """

    subject: str
    trial: int
    motion: int
    sample_rate: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise ValueError("samples must be a nonempty (n_samples, n_channels) matrix")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class Pattern:
    """One simplex-normalized feature vector: nonnegative, sums to 1."""

    x: np.ndarray
    motion: int
    trial: int
    frame_index: int


@dataclass(frozen=True)
class FoldSpec:
    """One train/test partition over trial indices (0-based)."""

    train_trials: frozenset[int]
    test_trials: frozenset[int]

    def __post_init__(self):
        if not self.train_trials or not self.test_trials:
            raise ValueError("train and test trial sets must be nonempty")
        if self.train_trials & self.test_trials:
            raise ValueError("train and test trial sets must be disjoint")


def enumerate_folds(n_trials: int, n_train: int) -> list[FoldSpec]:
    """All C(n_trials, n_train) folds in lexicographic order of train set."""
    if not 0 < n_train < n_trials:
        raise ValueError(f"need 0 < n_train < n_trials, got n_train={n_train}, n_trials={n_trials}")
    all_trials = frozenset(range(n_trials))
    folds = []
    for combo in itertools.combinations(range(n_trials), n_train):
        train = frozenset(combo)
        folds.append(FoldSpec(train_trials=train, test_trials=all_trials - train))
    return folds


@dataclass(frozen=True)
class Split:
    """Recordings selected for one fold.

    ``train_basic`` holds basic-motion recordings from the training trials.
    ``test`` holds basic recordings from the test trials plus combined
    recordings from trials outside the training set; combined recordings
    whose trial is a training trial are excluded entirely.
    """

    train_basic: tuple[Recording, ...]
    test: tuple[Recording, ...]


def make_split(
    recordings: Sequence[Recording],
    fold: FoldSpec,
    vocab: MotionVocabulary,
) -> Split:
    """Partition session recordings for one fold, dropping combined
    recordings that share a trial with the training set."""
    fold_trials = fold.train_trials | fold.test_trials
    present = {(r.motion, r.trial) for r in recordings}
    for lab in vocab.labels():
        for t in sorted(fold_trials):
            if (lab.id, t) not in present:
                raise ValueError(f"missing recording for motion {lab.name!r}, trial {t}")

    train_basic = []
    test = []
    for rec in recordings:
        kind = vocab.label(rec.motion).kind
        if kind == BASIC:
            if rec.trial in fold.train_trials:
                train_basic.append(rec)
            elif rec.trial in fold.test_trials:
                test.append(rec)
        else:
            if rec.trial not in fold.train_trials and rec.trial in fold.test_trials:
                test.append(rec)
    return Split(train_basic=tuple(train_basic), test=tuple(test))


def _read_recording_csv(path: Path, n_channels: int) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"recording file not found: {path}")
    with open(path, "r") as fh:
        header = fh.readline().strip()
    expected = ",".join(f"ch{i + 1}" for i in range(n_channels))
    cols = header.split(",")
    if len(cols) != n_channels:
        raise ValueError(
            f"{path}: expected {n_channels} channels, found {len(cols)} (header {header!r})"
        )
    if header != expected:
        raise ValueError(f"{path}: malformed header {header!r}, expected {expected!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    if data.shape[1] != n_channels:
        raise ValueError(f"{path}: {data.shape[1]} columns of data, expected {n_channels}")
    if data.shape[0] == 0:
        raise ValueError(f"{path}: recording is empty")
    return data


def load_session(manifest_path: str | Path) -> tuple[MotionVocabulary, list[Recording]]:
    """Load a session manifest and every recording it references.

    The manifest is JSON with fields ``subject``, ``sample_rate_hz``,
    ``n_channels``, ``basics``, ``combineds`` and ``recordings``; recording
    paths are resolved relative to the manifest's directory and trial
    numbers are converted from 1-based (file) to 0-based (memory).
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path, "r") as fh:
        manifest = json.load(fh)

    for key in ("subject", "sample_rate_hz", "n_channels", "basics", "combineds", "recordings"):
        if key not in manifest:
            raise ValueError(f"manifest missing field {key!r}")

    vocab = build_vocabulary(
        manifest["basics"],
        [(c["name"], c["constituents"]) for c in manifest["combineds"]],
    )
    sample_rate = float(manifest["sample_rate_hz"])
    n_channels = int(manifest["n_channels"])
    subject = str(manifest["subject"])
    entries = manifest["recordings"]
    if not entries:
        raise ValueError("manifest lists no recordings")

    base = manifest_path.parent
    recordings = []
    for entry in entries:
        motion_id = vocab.id_of(entry["motion"])
        trial = int(entry["trial"])
        if trial < 1:
            raise ValueError(f"trial numbers in manifests are 1-based, got {trial}")
        samples = _read_recording_csv(base / entry["path"], n_channels)
        recordings.append(
            Recording(
                subject=subject,
                trial=trial - 1,
                motion=motion_id,
                sample_rate=sample_rate,
                samples=samples,
            )
        )
    return vocab, recordings


def patterns_to_matrix(patterns: Iterable[Pattern]) -> tuple[np.ndarray, np.ndarray]:
    """Stack patterns into an (n, n_channels) matrix plus a motion-id vector."""
    pats = list(patterns)
    if not pats:
        raise ValueError("no patterns given")
    x = np.stack([p.x for p in pats])
    y = np.array([p.motion for p in pats], dtype=np.int64)
    return x, y
