"""Per-class semantic vectors used to initialize the classifier.

Two sources: a compositional synthesizer that mimics the clustered geometry
of language-model embeddings (classes sharing a verb or an object lie close),
and a loader for externally produced embedding files.  All tables hold
unit-norm rows.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .taxonomy import Taxonomy

_UNIT_NORM_TOL = 1e-9


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Divide each row by its Euclidean norm.  Zero rows are rejected."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero row")
    return matrix / norms


@dataclass(frozen=True)
class EmbeddingTable:
    """C unit-norm D-dimensional vectors, one per class, in class-id order."""

    vectors: np.ndarray
    provenance: str  # "synthetic" or "external"

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", vectors)
        if vectors.ndim != 2:
            raise ValueError(f"expected a 2-D table, got shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding table contains non-finite components")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
            worst = float(np.abs(norms - 1.0).max())
            raise ValueError(f"rows must be unit-norm within {_UNIT_NORM_TOL}; worst deviation {worst:g}")
        if self.provenance not in ("synthetic", "external"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def n_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def normalize_rows(table: EmbeddingTable) -> EmbeddingTable:
    """Re-normalize every row to unit norm.  Idempotent."""
    return EmbeddingTable(unit_rows(table.vectors), table.provenance)


def compositional_embeddings(
    taxonomy: Taxonomy,
    dim: int,
    noise_scale: float = 0.1,
    seed: int = 0,
    verb_weight: float = 1.0,
    object_weight: float = 1.0,
) -> EmbeddingTable:
    """Synthesize class embeddings from shared verb and object latents.

    One latent unit vector is drawn per verb and per object (isotropic
    directions).  A class embedding is the normalized sum of its verb latent,
    its object latent, and per-component Gaussian noise scaled by
    ``noise_scale``.  Classes sharing a verb or an object therefore cluster,
    which is the geometric property the classifier initialization exploits.
    """
    if dim < 2:
        raise ValueError("embedding dimension must be at least 2")
    if noise_scale < 0:
        raise ValueError("noise_scale must be nonnegative")
    rng = np.random.default_rng(seed)
    verb_latents = unit_rows(rng.standard_normal((taxonomy.n_verbs, dim)))
    object_latents = unit_rows(rng.standard_normal((taxonomy.n_objects, dim)))
    verb_ids = np.array([c.verb_id for c in taxonomy.classes])
    object_ids = np.array([c.object_id for c in taxonomy.classes])
    raw = verb_weight * verb_latents[verb_ids] + object_weight * object_latents[object_ids]
    if noise_scale > 0:
        raw = raw + noise_scale * rng.standard_normal(raw.shape)
    return EmbeddingTable(unit_rows(raw), "synthetic")


def save_embeddings(table: EmbeddingTable, labels: list[str], stream: IO[str]) -> None:
    """Write the text format: header ``C D``, then one
    ``label<TAB>v1 v2 ... vD`` line per class in class-id order.

    Components are written with ``repr`` so a reload reproduces every float
    exactly.
    """
    if len(labels) != table.n_classes:
        raise ValueError(f"expected {table.n_classes} labels, got {len(labels)}")
    stream.write(f"{table.n_classes} {table.dim}\n")
    for label, row in zip(labels, table.vectors):
        stream.write(label + "\t" + " ".join(repr(float(v)) for v in row) + "\n")


def load_embeddings(
    source: IO[str] | IO[bytes] | str | Path,
    taxonomy: Taxonomy,
    normalize: bool = False,
) -> EmbeddingTable:
    """Load an embedding file and order rows by taxonomy class id.

    The file must cover exactly the taxonomy's classes (matched by label);
    missing or extra labels, per-row dimension mismatches, and non-finite
    components are rejected.  With ``normalize`` set, rows are rescaled to
    unit norm; otherwise they must already be unit-norm.
    """
    text = _read_text(source)
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"expected header 'C D', got {lines[0]!r}")
    n_rows, dim = int(header[0]), int(header[1])
    if n_rows != taxonomy.n_classes:
        raise ValueError(
            f"file declares {n_rows} classes but the taxonomy has {taxonomy.n_classes}"
        )
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n_rows:
        raise ValueError(f"header declares {n_rows} rows but file has {len(body)}")

    by_label: dict[str, np.ndarray] = {}
    for ln in body:
        if "\t" not in ln:
            raise ValueError(f"malformed row (no tab separator): {ln!r}")
        label, values = ln.split("\t", 1)
        parts = values.split()
        if len(parts) != dim:
            raise ValueError(
                f"row {label!r} has {len(parts)} components, header declares {dim}"
            )
        if label in by_label:
            raise ValueError(f"duplicate class label {label!r}")
        by_label[label] = np.array([float(p) for p in parts], dtype=np.float64)

    expected = taxonomy.labels()
    missing = [lb for lb in expected if lb not in by_label]
    extra = [lb for lb in by_label if lb not in set(expected)]
    if missing or extra:
        raise ValueError(
            f"label coverage mismatch: missing {missing[:5]}, unexpected {extra[:5]}"
        )

    matrix = np.stack([by_label[lb] for lb in expected])
    if not np.all(np.isfinite(matrix)):
        raise ValueError("embedding file contains non-finite components")
    if normalize:
        matrix = unit_rows(matrix)
    return EmbeddingTable(matrix, "external")


def _read_text(source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def serialize_embeddings(table: EmbeddingTable, labels: list[str]) -> str:
    buf = io.StringIO()
    save_embeddings(table, labels, buf)
    return buf.getvalue()
