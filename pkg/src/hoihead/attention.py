"""Box-derived attention masking over a patch grid, plus detection-score fusion.

The CLS row of a single attention layer is restricted to patches that overlap
a set of boxes: masked columns are removed from the softmax normalization
entirely, so their post-softmax weight is exactly zero rather than merely
small.  Only the CLS row is defined here; other rows are untouched by design.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .evaluation import Box
from .taxonomy import Taxonomy


@dataclass(frozen=True)
class PatchGrid:
    """Pixel image tiled by square patches; edge patches may be partial."""

    image_width: int
    image_height: int
    patch_size: int

    def __post_init__(self):
        if self.image_width < 1 or self.image_height < 1 or self.patch_size < 1:
            raise ValueError("image dimensions and patch size must be positive")

    @property
    def rows(self) -> int:
        return ceil(self.image_height / self.patch_size)

    @property
    def cols(self) -> int:
        return ceil(self.image_width / self.patch_size)

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def patch_rect(self, index: int) -> tuple[float, float, float, float]:
        """Pixel rectangle (x0, y0, x1, y1) of patch ``index`` in row-major order."""
        if not 0 <= index < self.n_patches:
            raise IndexError(f"patch index {index} out of range 0..{self.n_patches - 1}")
        r, c = divmod(index, self.cols)
        p = self.patch_size
        return (c * p, r * p, (c + 1) * p, (r + 1) * p)


@dataclass(frozen=True)
class PatchMask:
    """Per-patch in-region flags; True where the CLS token may attend."""

    grid: PatchGrid
    in_region: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.in_region, dtype=bool)
        object.__setattr__(self, "in_region", flags)
        if flags.shape != (self.grid.n_patches,):
            raise ValueError(
                f"mask has {flags.shape} flags, grid has {self.grid.n_patches} patches"
            )


@dataclass(frozen=True)
class AttentionInput:
    """Token-major Q, K, V matrices; token 0 is CLS, tokens 1..P are patches."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        k = np.asarray(self.k, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise ValueError("Q, K, V must be 2-D token-major matrices")
        if q.shape != k.shape:
            raise ValueError(f"Q shape {q.shape} must match K shape {k.shape}")
        if v.shape[0] != q.shape[0]:
            raise ValueError(f"V has {v.shape[0]} tokens, Q has {q.shape[0]}")
        if q.shape[1] < 1:
            raise ValueError("key dimension must be at least 1")

    @property
    def n_tokens(self) -> int:
        return self.q.shape[0]

    @property
    def d_k(self) -> int:
        return self.q.shape[1]


def patch_mask(boxes: Sequence[Box], grid: PatchGrid) -> PatchMask:
    """Flag every patch whose pixel rectangle overlaps any box.

    Overlap means positive intersection area (any-overlap rule), so a box
    straddling a patch boundary flags both patches.  Boxes are clamped to the
    image; a box entirely outside contributes nothing.
    """
    if not boxes:
        raise ValueError("need at least one box")
    flags = np.zeros(grid.n_patches, dtype=bool)
    for box in boxes:
        x0 = max(0.0, min(box.x_min, float(grid.image_width)))
        y0 = max(0.0, min(box.y_min, float(grid.image_height)))
        x1 = max(0.0, min(box.x_max, float(grid.image_width)))
        y1 = max(0.0, min(box.y_max, float(grid.image_height)))
        if x1 <= x0 or y1 <= y0:
            continue
        p = grid.patch_size
        c_lo, c_hi = int(x0 // p), min(grid.cols - 1, int(np.ceil(x1 / p)) - 1)
        r_lo, r_hi = int(y0 // p), min(grid.rows - 1, int(np.ceil(y1 / p)) - 1)
        for r in range(r_lo, r_hi + 1):
            flags[r * grid.cols + c_lo : r * grid.cols + c_hi + 1] = True
    return PatchMask(grid, flags)


def masked_cls_attention(attention: AttentionInput, mask: PatchMask):
    """CLS-row attention restricted to in-region patches.

    Returns (weights, output): weights is the full P+1 vector with exact
    zeros on out-of-region patch columns (they are dropped from the softmax
    normalization, not offset by a large negative constant), and output is
    the weighted combination of V rows.  CLS itself is never masked: the
    restriction applies to patches only.
    """
    n_patches = mask.in_region.size
    if attention.n_tokens != n_patches + 1:
        raise ValueError(
            f"attention has {attention.n_tokens} tokens, mask implies {n_patches + 1}"
        )
    logits = (attention.k @ attention.q[0]) / np.sqrt(attention.d_k)
    allowed = np.concatenate(([True], mask.in_region))
    weights = np.zeros(attention.n_tokens)
    visible = logits[allowed]
    shifted = np.exp(visible - visible.max())
    weights[allowed] = shifted / shifted.sum()
    return weights, weights @ attention.v


def combine_detection_scores(
    hoi_scores,
    detection: tuple[int, float],
    taxonomy: Taxonomy,
) -> list[tuple[int, float]]:
    """Fuse classification scores with one object detection.

    Only classes whose object matches the detected object class are emitted,
    each scored as classification score times detection confidence.
    """
    hoi_scores = np.asarray(hoi_scores, dtype=np.float64)
    if hoi_scores.shape != (taxonomy.n_classes,):
        raise ValueError(
            f"expected {taxonomy.n_classes} scores, got shape {hoi_scores.shape}"
        )
    object_id, confidence = detection
    if not 0 <= int(object_id) < taxonomy.n_objects:
        raise ValueError(f"unknown object class id {object_id}")
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence must be in [0, 1], got {confidence}")
    return [
        (class_id, float(hoi_scores[class_id] * confidence))
        for class_id in taxonomy.classes_with_object(int(object_id))
    ]


def read_boxes(source: IO[str] | str | Path) -> list[Box]:
    """Parse a text list of boxes, one ``x_min y_min x_max y_max`` per line.

    Blank lines and lines starting with ``#`` are skipped.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    boxes = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"expected 4 coordinates per line, got {ln!r}")
        boxes.append(Box(*(float(p) for p in parts)))
    return boxes
