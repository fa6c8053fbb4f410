"""Synthetic long-tailed multi-label datasets and the class-balancing oversampler.

Samples are generated against a taxonomy and its embedding table: a Zipf-
distributed primary class is drawn, optional co-occurring positives sharing
the primary's object are added (interactions with one object tend to appear
together), and the feature is the normalized sum of the positive classes'
embeddings plus isotropic noise.  Labels are sign vectors in {+1, -1}^C.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .embeddings import EmbeddingTable, unit_rows
from .taxonomy import Taxonomy

DEFAULT_COOCCUR_PROB = 0.5

# Reference corpus size for desk-scale min_count scaling.
FULL_SCALE_SAMPLES = 38116
FULL_SCALE_MIN_COUNT = 40
MIN_COUNT_FLOOR = 4


@dataclass(frozen=True)
class DatasetSpec:
    """Generation parameters.

    Class popularity is proportional to rank^(-zipf_exponent), where rank is
    class_id + 1; build_taxonomy's uniform pairing randomizes class order, so
    the head of the popularity law lands on random verb-object pairs.
    """

    n_samples: int
    zipf_exponent: float = 1.0
    cooccur_max: int = 1
    feature_noise: float = 0.0
    dim: int = 64
    cooccur_prob: float = DEFAULT_COOCCUR_PROB

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.zipf_exponent <= 0:
            raise ValueError("zipf_exponent must be positive")
        if self.cooccur_max < 1:
            raise ValueError("cooccur_max must be at least 1")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be nonnegative")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if not 0.0 <= self.cooccur_prob <= 1.0:
            raise ValueError("cooccur_prob must be in [0, 1]")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (N, D), sign-label matrix (N, C), per-class positive counts."""

    features: np.ndarray
    labels: np.ndarray
    train_counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if features.ndim != 2 or labels.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise ValueError(
                f"inconsistent shapes: features {features.shape}, labels {labels.shape}"
            )
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if not np.all(np.abs(labels) == 1):
            raise ValueError("labels must be +1 or -1")
        if np.any((labels == 1).sum(axis=1) < 1):
            raise ValueError("every sample needs at least one positive label")
        counts = (labels == 1).sum(axis=0).astype(np.int64)
        if self.train_counts is None:
            object.__setattr__(self, "train_counts", counts)
        else:
            given = np.asarray(self.train_counts, dtype=np.int64)
            if not np.array_equal(given, counts):
                raise ValueError("train_counts disagree with a recount of the labels")
            object.__setattr__(self, "train_counts", given)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int):
        return self.features[i], self.labels[i]

    def positive_ids(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels[i] == 1)


def zipf_popularity(n_classes: int, exponent: float) -> np.ndarray:
    """Normalized popularity over class ids: p_i proportional to (i+1)^(-exponent)."""
    ranks = np.arange(1, n_classes + 1, dtype=np.float64)
    weights = ranks**-exponent
    return weights / weights.sum()


def generate_dataset(
    spec: DatasetSpec,
    taxonomy: Taxonomy,
    embeddings: EmbeddingTable,
    seed: int = 0,
) -> Dataset:
    """Draw a long-tailed multi-label dataset tied to the embedding geometry.

    Per sample: a primary class from the Zipf law; then up to
    ``cooccur_max - 1`` extra positives, each added with probability
    ``cooccur_prob`` and chosen uniformly among classes sharing the primary's
    object; feature = normalize(sum of positive embeddings + noise).
    Deterministic for a fixed seed.
    """
    if embeddings.n_classes != taxonomy.n_classes:
        raise ValueError(
            f"embedding table covers {embeddings.n_classes} classes, "
            f"taxonomy has {taxonomy.n_classes}"
        )
    if spec.dim != embeddings.dim:
        raise ValueError(f"spec dim {spec.dim} does not match embedding dim {embeddings.dim}")

    n_classes = taxonomy.n_classes
    rng = np.random.default_rng(seed)
    popularity = zipf_popularity(n_classes, spec.zipf_exponent)
    primaries = rng.choice(n_classes, size=spec.n_samples, p=popularity)

    object_groups = {
        o.object_id: np.array(taxonomy.classes_with_object(o.object_id))
        for o in taxonomy.objects
    }
    object_of = np.array([c.object_id for c in taxonomy.classes])

    labels = np.full((spec.n_samples, n_classes), -1, dtype=np.int8)
    features = np.empty((spec.n_samples, spec.dim), dtype=np.float64)
    vectors = embeddings.vectors

    for i in range(spec.n_samples):
        primary = int(primaries[i])
        positives = [primary]
        if spec.cooccur_max > 1:
            group = object_groups[int(object_of[primary])]
            for _ in range(spec.cooccur_max - 1):
                if rng.random() >= spec.cooccur_prob:
                    continue
                remaining = np.setdiff1d(group, positives, assume_unique=True)
                if remaining.size == 0:
                    break
                positives.append(int(rng.choice(remaining)))
        labels[i, positives] = 1
        raw = vectors[positives].sum(axis=0)
        if spec.feature_noise > 0:
            raw = raw + spec.feature_noise * rng.standard_normal(spec.dim)
        features[i] = unit_rows(raw[None, :])[0]

    return Dataset(features, labels)


def scaled_min_count(n_samples: int) -> int:
    """Desk-scale default for the per-epoch class floor: 40 scaled by corpus
    size, never below 4."""
    return max(MIN_COUNT_FLOOR, round(FULL_SCALE_MIN_COUNT * n_samples / FULL_SCALE_SAMPLES))


def oversample_epoch(dataset: Dataset, min_count: int, seed: int = 0) -> np.ndarray:
    """One epoch's sample indices with rare classes duplicated.

    Counting each index toward all of its positive classes, every class with
    at least one sample ends up with at least ``min_count`` appearances.
    Duplicates are taken round-robin over the class's samples, every original
    index appears at least once, and the final order is a seeded shuffle.
    The multiset depends only on (dataset, min_count); the seed affects order
    only.
    """
    if min_count < 0:
        raise ValueError("min_count must be nonnegative")
    positive = dataset.labels == 1
    counts = dataset.train_counts.astype(np.int64).copy()
    indices = list(range(dataset.n_samples))
    for c in range(dataset.n_classes):
        if counts[c] == 0 or counts[c] >= min_count:
            continue
        class_samples = np.flatnonzero(positive[:, c])
        k = 0
        while counts[c] < min_count:
            idx = int(class_samples[k % class_samples.size])
            indices.append(idx)
            counts += positive[idx]
            k += 1
    out = np.array(indices, dtype=np.int64)
    np.random.default_rng(seed).shuffle(out)
    return out


def save_dataset(dataset: Dataset, stream: IO[str]) -> None:
    """Text format: header ``N C D``; per sample a feature line (D repr
    floats) and a line of positive class ids."""
    stream.write(f"{dataset.n_samples} {dataset.n_classes} {dataset.dim}\n")
    for i in range(dataset.n_samples):
        stream.write(" ".join(repr(float(v)) for v in dataset.features[i]) + "\n")
        stream.write(" ".join(str(int(c)) for c in dataset.positive_ids(i)) + "\n")


def load_dataset(source: IO[str] | str | Path) -> Dataset:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty dataset file")
    n, c, d = (int(v) for v in lines[0].split())
    if len(lines) < 1 + 2 * n:
        raise ValueError(f"expected {2 * n} body lines, got {len(lines) - 1}")
    features = np.empty((n, d), dtype=np.float64)
    labels = np.full((n, c), -1, dtype=np.int8)
    for i in range(n):
        feat = np.array([float(v) for v in lines[1 + 2 * i].split()])
        if feat.shape != (d,):
            raise ValueError(f"sample {i} has {feat.shape[0]} components, expected {d}")
        features[i] = feat
        pos = [int(v) for v in lines[2 + 2 * i].split()]
        if not pos:
            raise ValueError(f"sample {i} has no positive labels")
        labels[i, pos] = 1
    return Dataset(features, labels)


def serialize_dataset(dataset: Dataset) -> str:
    buf = io.StringIO()
    save_dataset(dataset, buf)
    return buf.getvalue()
