"""Synthetic combined-motion data via convex combinations of basic patterns.

A synthetic sample for a combined class mixes one representation from each
constituent basic class with weights drawn from a symmetric Dirichlet
distribution; the same weights mix the constituent one-hot labels into a
soft label, keeping feature and label spaces consistent.  Mixing can happen
at the input (layer 0) or at any hidden layer of the classifier, where the
sources are first mapped through the lower part of the network.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import MotionVocabulary
from .network import Mlp, forward_to


@dataclass(frozen=True)
class SynthesisConfig:
    """How much synthetic data to make, where, and how concentrated."""

    layer_n: int = 0
    alpha: float = 50.0
    total_count: int = 0

    def __post_init__(self):
        if self.layer_n < 0:
            raise ValueError("layer_n must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.total_count < 0:
            raise ValueError("total_count must be >= 0")


def allocate_counts(total_count: int, n_classes: int) -> list[int]:
    """Split a total as evenly as possible; remainder goes to the lowest
    class indices.  A positive total must cover every class."""
    if total_count < 0:
        raise ValueError("total_count must be >= 0")
    if n_classes == 0 or total_count == 0:
        return [0] * n_classes
    if total_count < n_classes:
        raise ValueError(f"total_count {total_count} cannot cover {n_classes} classes")
    base, rem = divmod(total_count, n_classes)
    return [base + (1 if i < rem else 0) for i in range(n_classes)]


def _dirichlet_matrix(alpha: float, n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """n rows of symmetric Dirichlet(alpha) weights via normalized gammas."""
    gammas = rng.gamma(alpha, 1.0, size=(n, k))
    sums = gammas.sum(axis=1)
    while np.any(sums == 0.0):  # gamma underflow, only reachable for tiny alpha
        bad = np.flatnonzero(sums == 0.0)
        gammas[bad] = rng.gamma(alpha, 1.0, size=(bad.size, k))
        sums = gammas.sum(axis=1)
    return gammas / sums[:, np.newaxis]


def sample_mixing_ratios(alpha: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """One weight vector on the k-simplex from a symmetric Dirichlet(alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    return _dirichlet_matrix(alpha, 1, k, rng)[0]


def mix_at_layer(representations: Sequence[np.ndarray], lam: np.ndarray) -> np.ndarray:
    """Convex combination sum_k lam_k * representations[k]."""
    reps = np.stack([np.asarray(r, dtype=np.float64) for r in representations])
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (reps.shape[0],):
        raise ValueError(f"{reps.shape[0]} representations but {lam.shape} weights")
    return lam @ reps


def mix_labels(one_hot_labels: Sequence[np.ndarray], lam: np.ndarray) -> np.ndarray:
    """Convex combination of one-hot labels with distinct hot indices."""
    labels = np.stack([np.asarray(l, dtype=np.float64) for l in one_hot_labels])
    hot = labels.argmax(axis=1)
    if len(set(hot.tolist())) != labels.shape[0]:
        raise ValueError("one-hot labels must have distinct hot indices")
    return mix_at_layer(labels, lam)


@dataclass(frozen=True)
class MixedSample:
    """One synthetic sample: layer-n representation, soft label, and the
    shared mixing weights that produced both."""

    z: np.ndarray
    y_soft: np.ndarray
    lam: np.ndarray
    sources: tuple[tuple[int, int], ...]  # (basic class id, index within its pool)
    combined_class: int

    def __post_init__(self):
        if abs(float(self.lam.sum()) - 1.0) > 1e-12 or np.any(self.lam < 0) or np.any(self.lam > 1):
            raise ValueError("mixing weights must lie on the simplex")
        if abs(float(self.y_soft.sum()) - 1.0) > 1e-12:
            raise ValueError("soft label must sum to 1")


def _class_pools(
    vocab: MotionVocabulary,
    pools: Mapping[int, np.ndarray],
) -> None:
    for label in vocab.combineds:
        for cid in label.constituents:
            if cid not in pools or len(pools[cid]) == 0:
                raise ValueError(
                    f"no training patterns for basic class {vocab.label(cid).name!r} "
                    f"needed by {label.name!r}"
                )


def _synthesize_class(
    reps_by_class: Mapping[int, np.ndarray],
    constituents: tuple[int, ...],
    count: int,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draws for one combined class: (source index matrix, lambdas, z)."""
    k = len(constituents)
    src = np.empty((count, k), dtype=np.int64)
    for j, cid in enumerate(constituents):
        src[:, j] = rng.integers(0, reps_by_class[cid].shape[0], size=count)
    lam = _dirichlet_matrix(alpha, count, k, rng)
    width = next(iter(reps_by_class.values())).shape[1]
    z = np.zeros((count, width))
    for j, cid in enumerate(constituents):
        z += lam[:, j : j + 1] * reps_by_class[cid][src[:, j]]
    return src, lam, z


def synthesize_arrays(
    model: Mlp,
    x: np.ndarray,
    y_ids: np.ndarray,
    vocab: MotionVocabulary,
    config: SynthesisConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Bulk synthetic set as arrays: (z matrix, soft-label matrix).

    ``x`` and ``y_ids`` are the basic training patterns and their class
    ids; sources are drawn uniformly with replacement within each
    constituent class.  Representations are taken at ``config.layer_n``
    from the current model (identity at layer 0).
    """
    counts = allocate_counts(config.total_count, vocab.n_combined)
    width = model.config.layer_width(config.layer_n)
    if config.total_count == 0 or vocab.n_combined == 0:
        return np.zeros((0, width)), np.zeros((0, model.config.output_dim))

    reps = x if config.layer_n == 0 else forward_to(model, config.layer_n, x)
    pools = {lab.id: reps[y_ids == lab.id] for lab in vocab.basics}
    _class_pools(vocab, pools)

    z_parts, y_parts = [], []
    for label, count in zip(vocab.combineds, counts):
        if count == 0:
            continue
        _, lam, z = _synthesize_class(pools, label.constituents, count, config.alpha, rng)
        y_soft = np.zeros((count, model.config.output_dim))
        for j, cid in enumerate(label.constituents):
            y_soft[:, cid] = lam[:, j]
        z_parts.append(z)
        y_parts.append(y_soft)
    return np.concatenate(z_parts), np.concatenate(y_parts)


def build_synthetic_set(
    model: Mlp | None,
    layer_n: int,
    train_patterns_by_basic_class: Mapping[int, np.ndarray],
    vocab: MotionVocabulary,
    config: SynthesisConfig,
    rng: np.random.Generator,
) -> list[MixedSample]:
    """Synthetic samples for every combined class, allocated as evenly as
    possible across classes.

    ``train_patterns_by_basic_class`` maps basic class id to an (n, d)
    matrix of input-space patterns.  ``model`` may be None for layer 0.
    Given the same pools and generator state this produces exactly the
    samples of ``synthesize_arrays``.
    """
    if layer_n < 0:
        raise ValueError("layer index must be >= 0")
    if layer_n >= 1 and model is None:
        raise ValueError("hidden-layer synthesis requires a model")
    counts = allocate_counts(config.total_count, vocab.n_combined)
    if config.total_count == 0 or vocab.n_combined == 0:
        return []
    pools_in = {cid: np.asarray(p, dtype=np.float64) for cid, p in train_patterns_by_basic_class.items()}
    _class_pools(vocab, pools_in)
    if layer_n == 0:
        pools = pools_in
    else:
        pools = {cid: forward_to(model, layer_n, p) for cid, p in pools_in.items()}

    n_basic = vocab.n_basic
    samples: list[MixedSample] = []
    for label, count in zip(vocab.combineds, counts):
        if count == 0:
            continue
        src, lam, z = _synthesize_class(pools, label.constituents, count, config.alpha, rng)
        for i in range(count):
            y_soft = np.zeros(n_basic)
            for j, cid in enumerate(label.constituents):
                y_soft[cid] = lam[i, j]
            samples.append(
                MixedSample(
                    z=z[i],
                    y_soft=y_soft,
                    lam=lam[i],
                    sources=tuple((cid, int(src[i, j])) for j, cid in enumerate(label.constituents)),
                    combined_class=label.id,
                )
            )
    return samples


def dump_synthetic_csv(samples: Sequence[MixedSample], layer_n: int, path: str | Path) -> None:
    """Input-space synthetic patterns as CSV: motion,trial,frame,x1..xD plus
    the mixing weights.  Only meaningful at layer 0."""
    if layer_n != 0:
        raise ValueError("synthetic dumps are defined for input-layer synthesis only")
    if not samples:
        raise ValueError("no samples to dump")
    d = samples[0].z.shape[0]
    k = samples[0].lam.shape[0]
    header = (
        "motion,trial,frame,"
        + ",".join(f"x{i + 1}" for i in range(d))
        + ","
        + ",".join(f"lambda{i + 1}" for i in range(k))
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i, s in enumerate(samples):
            xs = ",".join(repr(float(v)) for v in s.z)
            ls = ",".join(repr(float(v)) for v in s.lam)
            fh.write(f"{s.combined_class},-1,{i},{xs},{ls}\n")
