"""Compositional verb-object class structure with prompts and frequency bands.

Every class is a unique (verb, object) pair.  Classes sharing a verb or an
object are semantically related, and downstream modules (embedding synthesis,
detection-score combination) rely on that sharing structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

PAIRING_POLICIES = ("uniform", "full-cross-product")


@dataclass(frozen=True)
class VerbRecord:
    verb_id: int
    base: str
    gerund: str


@dataclass(frozen=True)
class ObjectRecord:
    object_id: int
    noun: str


@dataclass(frozen=True)
class HoiClass:
    class_id: int
    verb_id: int
    object_id: int


@dataclass(frozen=True)
class Taxonomy:
    """Immutable class structure: verbs, objects, and their paired classes.

    Invariants, enforced at construction: every (verb_id, object_id) pair is
    unique, every class references a valid verb and object, and
    1 <= n_classes <= n_verbs * n_objects.
    """

    verbs: tuple[VerbRecord, ...]
    objects: tuple[ObjectRecord, ...]
    classes: tuple[HoiClass, ...]

    def __post_init__(self):
        if not self.verbs or not self.objects:
            raise ValueError("taxonomy requires at least one verb and one object")
        if not self.classes:
            raise ValueError("taxonomy requires at least one class")
        if len(self.classes) > len(self.verbs) * len(self.objects):
            raise ValueError(
                f"{len(self.classes)} classes exceed the "
                f"{len(self.verbs)}x{len(self.objects)} verb-object capacity"
            )
        for i, v in enumerate(self.verbs):
            if v.verb_id != i:
                raise ValueError(f"verb record {i} has id {v.verb_id}")
        for i, o in enumerate(self.objects):
            if o.object_id != i:
                raise ValueError(f"object record {i} has id {o.object_id}")
        seen: set[tuple[int, int]] = set()
        for i, c in enumerate(self.classes):
            if c.class_id != i:
                raise ValueError(f"class record {i} has id {c.class_id}")
            if not 0 <= c.verb_id < len(self.verbs):
                raise ValueError(f"class {i} references unknown verb {c.verb_id}")
            if not 0 <= c.object_id < len(self.objects):
                raise ValueError(f"class {i} references unknown object {c.object_id}")
            pair = (c.verb_id, c.object_id)
            if pair in seen:
                raise ValueError(f"duplicate verb-object pair {pair}")
            seen.add(pair)

    @property
    def n_verbs(self) -> int:
        return len(self.verbs)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def verb_of(self, class_id: int) -> VerbRecord:
        return self.verbs[self.classes[class_id].verb_id]

    def object_of(self, class_id: int) -> ObjectRecord:
        return self.objects[self.classes[class_id].object_id]

    def label(self, class_id: int) -> str:
        """Canonical text label of a class, e.g. ``ride:bicycle``.

        Used to cross-reference external embedding files and checkpoints.
        """
        c = self.classes[class_id]
        return f"{self.verbs[c.verb_id].base}:{self.objects[c.object_id].noun}"

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.n_classes)]

    def classes_with_object(self, object_id: int) -> list[int]:
        """Class ids sharing the given object, ascending."""
        if not 0 <= object_id < self.n_objects:
            raise ValueError(f"unknown object id {object_id}")
        return [c.class_id for c in self.classes if c.object_id == object_id]

    def classes_with_verb(self, verb_id: int) -> list[int]:
        if not 0 <= verb_id < self.n_verbs:
            raise ValueError(f"unknown verb id {verb_id}")
        return [c.class_id for c in self.classes if c.verb_id == verb_id]


@dataclass(frozen=True)
class FrequencyBands:
    """Nested few-shot bands: band(t) holds class ids with train count <= t."""

    thresholds: tuple[int, ...]
    membership: dict[int, frozenset[int]]

    def band(self, threshold: int) -> frozenset[int]:
        return self.membership[threshold]


def build_taxonomy(
    n_verbs: int,
    n_objects: int,
    n_classes: int,
    pairing: str = "uniform",
    seed: int = 0,
    verbs: Sequence[tuple[str, str]] | None = None,
    objects: Sequence[str] | None = None,
) -> Taxonomy:
    """Construct a taxonomy by pairing verbs with objects.

    Verb and object vocabularies default to placeholder names
    (``verbK`` with gerund ``verbK-ing``, ``objM``); real words may be
    supplied as ``verbs=[(base, gerund), ...]`` and ``objects=[noun, ...]``.

    ``pairing="uniform"`` samples ``n_classes`` distinct pairs uniformly
    without replacement from the full grid; class order is the (seeded) draw
    order, so class ids carry no verb or object structure.
    ``pairing="full-cross-product"`` enumerates every pair and requires
    ``n_classes == n_verbs * n_objects``.
    """
    if n_verbs < 1 or n_objects < 1:
        raise ValueError("n_verbs and n_objects must be positive")
    if n_classes < 1:
        raise ValueError("n_classes must be positive")
    if n_classes > n_verbs * n_objects:
        raise ValueError(
            f"cannot form {n_classes} unique classes from "
            f"{n_verbs} verbs x {n_objects} objects"
        )
    if pairing not in PAIRING_POLICIES:
        raise ValueError(f"unknown pairing policy {pairing!r}; use one of {PAIRING_POLICIES}")

    if verbs is None:
        verbs = [(f"verb{k}", f"verb{k}-ing") for k in range(n_verbs)]
    if objects is None:
        objects = [f"obj{m}" for m in range(n_objects)]
    if len(verbs) != n_verbs:
        raise ValueError(f"expected {n_verbs} verb entries, got {len(verbs)}")
    if len(objects) != n_objects:
        raise ValueError(f"expected {n_objects} object entries, got {len(objects)}")

    verb_records = tuple(VerbRecord(k, base, gerund) for k, (base, gerund) in enumerate(verbs))
    object_records = tuple(ObjectRecord(m, noun) for m, noun in enumerate(objects))

    if pairing == "full-cross-product":
        if n_classes != n_verbs * n_objects:
            raise ValueError(
                "full-cross-product pairing requires n_classes == n_verbs * n_objects"
            )
        codes = np.arange(n_classes)
    else:
        rng = np.random.default_rng(seed)
        codes = rng.choice(n_verbs * n_objects, size=n_classes, replace=False)

    classes = tuple(
        HoiClass(i, int(code) // n_objects, int(code) % n_objects)
        for i, code in enumerate(codes)
    )
    return Taxonomy(verb_records, object_records, classes)


def prompt_for(taxonomy: Taxonomy, class_id: int) -> str:
    """Prompt string for one class: ``a person {gerund} a {noun}``.

    The article is always "a"; prompts feed an external embedding step or the
    synthetic generator, where article choice has no effect.
    """
    if not 0 <= class_id < taxonomy.n_classes:
        raise IndexError(f"class id {class_id} out of range 0..{taxonomy.n_classes - 1}")
    return f"a person {taxonomy.verb_of(class_id).gerund} a {taxonomy.object_of(class_id).noun}"


def tag_frequency_bands(
    taxonomy: Taxonomy,
    train_counts: Iterable[int],
    thresholds: Sequence[int],
) -> FrequencyBands:
    """Tag classes into cumulative few-shot bands.

    band(t) = { class id : train count <= t }, so bands nest as thresholds
    grow.  Thresholds must be positive and strictly increasing.
    """
    counts = np.asarray(list(train_counts), dtype=np.int64)
    if counts.shape != (taxonomy.n_classes,):
        raise ValueError(
            f"expected {taxonomy.n_classes} per-class counts, got shape {counts.shape}"
        )
    thresholds = tuple(int(t) for t in thresholds)
    if not thresholds:
        raise ValueError("need at least one threshold")
    if any(t < 1 for t in thresholds):
        raise ValueError("thresholds must be positive")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    membership = {
        t: frozenset(int(i) for i in np.flatnonzero(counts <= t)) for t in thresholds
    }
    return FrequencyBands(thresholds, membership)


def save_taxonomy(taxonomy: Taxonomy, stream: IO[str]) -> None:
    """Write the structured text form: verb/object vocabularies, then one
    record per class (class_id, verb, gerund, object, label)."""
    stream.write(f"verbs {taxonomy.n_verbs}\n")
    for v in taxonomy.verbs:
        stream.write(f"{v.verb_id}\t{v.base}\t{v.gerund}\n")
    stream.write(f"objects {taxonomy.n_objects}\n")
    for o in taxonomy.objects:
        stream.write(f"{o.object_id}\t{o.noun}\n")
    stream.write(f"classes {taxonomy.n_classes}\n")
    for c in taxonomy.classes:
        verb = taxonomy.verbs[c.verb_id]
        obj = taxonomy.objects[c.object_id]
        stream.write(
            f"{c.class_id}\t{verb.base}\t{verb.gerund}\t{obj.noun}\t{taxonomy.label(c.class_id)}\n"
        )


def load_taxonomy(stream: IO[str]) -> Taxonomy:
    lines = [ln.rstrip("\n") for ln in stream]
    pos = 0

    def section(name: str) -> int:
        nonlocal pos
        head = lines[pos].split()
        if len(head) != 2 or head[0] != name:
            raise ValueError(f"expected '{name} <count>' header, got {lines[pos]!r}")
        pos += 1
        return int(head[1])

    n_verbs = section("verbs")
    verbs = []
    for _ in range(n_verbs):
        vid, base, gerund = lines[pos].split("\t")
        verbs.append(VerbRecord(int(vid), base, gerund))
        pos += 1
    n_objects = section("objects")
    objects = []
    for _ in range(n_objects):
        oid, noun = lines[pos].split("\t")
        objects.append(ObjectRecord(int(oid), noun))
        pos += 1
    n_classes = section("classes")
    verb_by_base = {v.base: v.verb_id for v in verbs}
    object_by_noun = {o.noun: o.object_id for o in objects}
    classes = []
    for _ in range(n_classes):
        cid, base, _gerund, noun, _label = lines[pos].split("\t")
        classes.append(HoiClass(int(cid), verb_by_base[base], object_by_noun[noun]))
        pos += 1
    return Taxonomy(tuple(verbs), tuple(objects), tuple(classes))


def serialize_taxonomy(taxonomy: Taxonomy) -> str:
    import io

    buf = io.StringIO()
    save_taxonomy(taxonomy, buf)
    return buf.getvalue()
