"""Linear classification head: weight initialization and scaled logits.

The logit for class i is ``gamma * <x, w_i> + b_i``.  Weight rows may be
initialized from unit-norm semantic embeddings (bias zero), in which case each
row acts as the feature-space proxy of its class, or from a variance-scaled
random scheme as the conventional baseline.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .embeddings import EmbeddingTable

INIT_STRATEGIES = ("embedding", "random")


@dataclass
class LinearClassifier:
    """Weights (C, D), bias (C,), and the positive logit scale gamma.

    Mutable: training updates weights and bias in place.
    """

    weights: np.ndarray
    bias: np.ndarray
    gamma: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} classes"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("classifier parameters must be finite")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearClassifier":
        return LinearClassifier(self.weights.copy(), self.bias.copy(), self.gamma)


def init_classifier(
    n_classes: int,
    dim: int,
    strategy: str = "embedding",
    embeddings: EmbeddingTable | None = None,
    seed: int = 0,
    gamma: float = 100.0,
) -> LinearClassifier:
    """Build a classifier head.

    ``embedding``: rows are copied from the unit-norm table, bias is zero.
    ``random``: entries are uniform with variance 2 / (dim + n_classes)
    (fan-based scaling), bias is zero.
    """
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}; use one of {INIT_STRATEGIES}")
    if strategy == "embedding":
        if embeddings is None:
            raise ValueError("embedding initialization requires an embedding table")
        if embeddings.vectors.shape != (n_classes, dim):
            raise ValueError(
                f"embedding table shape {embeddings.vectors.shape} does not match "
                f"({n_classes}, {dim})"
            )
        weights = embeddings.vectors.copy()
    else:
        rng = np.random.default_rng(seed)
        bound = np.sqrt(6.0 / (dim + n_classes))
        weights = rng.uniform(-bound, bound, size=(n_classes, dim))
    return LinearClassifier(weights, np.zeros(n_classes), gamma)


def forward_logits(classifier: LinearClassifier, x) -> np.ndarray:
    """Logits ``gamma * W x + b`` for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (classifier.dim,):
        raise ValueError(f"feature shape {x.shape} does not match dim {classifier.dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature vector must be finite")
    return classifier.gamma * (classifier.weights @ x) + classifier.bias


def forward_logits_matrix(classifier: LinearClassifier, features: np.ndarray) -> np.ndarray:
    """Batched logits: (N, D) features to (N, C) logits."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != classifier.dim:
        raise ValueError(
            f"feature matrix shape {features.shape} does not match dim {classifier.dim}"
        )
    return classifier.gamma * (features @ classifier.weights.T) + classifier.bias


def save_classifier(classifier: LinearClassifier, labels: list[str], stream: IO[str]) -> None:
    """Checkpoint format: a gamma header, the embedding-style label/row matrix,
    and a final bias line.  Floats use ``repr`` for exact round-trips."""
    if len(labels) != classifier.n_classes:
        raise ValueError(f"expected {classifier.n_classes} labels, got {len(labels)}")
    stream.write(f"gamma {repr(float(classifier.gamma))}\n")
    stream.write(f"{classifier.n_classes} {classifier.dim}\n")
    for label, row in zip(labels, classifier.weights):
        stream.write(label + "\t" + " ".join(repr(float(v)) for v in row) + "\n")
    stream.write("bias " + " ".join(repr(float(v)) for v in classifier.bias) + "\n")


def load_classifier(source: IO[str] | str | Path, labels: list[str]) -> LinearClassifier:
    """Load a checkpoint, reordering rows to match ``labels``."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or not lines[0].startswith("gamma "):
        raise ValueError("malformed checkpoint: expected a 'gamma <value>' header")
    gamma = float(lines[0].split()[1])
    n_rows, dim = (int(v) for v in lines[1].split())
    if len(lines) != 2 + n_rows + 1:
        raise ValueError(f"expected {n_rows} weight rows plus a bias line")
    rows: dict[str, np.ndarray] = {}
    for ln in lines[2 : 2 + n_rows]:
        label, values = ln.split("\t", 1)
        vec = np.array([float(p) for p in values.split()], dtype=np.float64)
        if vec.shape != (dim,):
            raise ValueError(f"row {label!r} has {vec.shape[0]} components, expected {dim}")
        rows[label] = vec
    bias_line = lines[2 + n_rows].split()
    if bias_line[0] != "bias" or len(bias_line) != 1 + n_rows:
        raise ValueError("malformed bias line")
    missing = [lb for lb in labels if lb not in rows]
    if missing or len(labels) != n_rows:
        raise ValueError(f"label coverage mismatch: missing {missing[:5]}")
    order = {lb: i for i, lb in enumerate(rows)}
    bias_by_label = {lb: float(bias_line[1 + order[lb]]) for lb in rows}
    weights = np.stack([rows[lb] for lb in labels])
    bias = np.array([bias_by_label[lb] for lb in labels])
    return LinearClassifier(weights, bias, gamma)


def serialize_classifier(classifier: LinearClassifier, labels: list[str]) -> str:
    buf = io.StringIO()
    save_classifier(classifier, labels, buf)
    return buf.getvalue()
