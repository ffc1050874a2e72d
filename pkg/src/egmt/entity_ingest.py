"""Entity annotations: parsing, validation, dedup, label mapping.

An annotation file is JSON of the form

    {"image_id": "scene_0007",
     "entities": [{"text": "car", "source": "ir", "embedding": [768 floats]},
                  {"text": "lamp", "source": "vi",
                   "embedding_ref": {"file": "embs.egt", "row": 3}}]}

``embedding_ref`` points into a rank-2 tensor sidecar (row-per-embedding)
next to the annotation file.  Parsing resolves refs to inline vectors, so
downstream code only ever sees :class:`EntityRecord` with a concrete
embedding.  Serialization always writes inline embeddings with sorted
keys, which makes parse -> serialize idempotent byte for byte.

Text normalization is simple Unicode lowercasing (str.lower), chosen over
casefold so that independent tooling in other languages can reproduce the
dedup decisions exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .numerics.serialize import read_tensor

__all__ = [
    "EMBED_DIM",
    "AnnotationError",
    "EntityRecord",
    "Annotation",
    "Vocabulary",
    "parse_annotation",
    "serialize_annotation",
    "dedupe_entities",
    "canonical_entity_order",
    "stack_entity_features",
    "entities_to_labels",
    "load_vocabulary",
]

EMBED_DIM = 768
_SOURCES = ("ir", "vi")


class AnnotationError(ValueError):
    """Malformed annotation or vocabulary data."""


@dataclass(eq=False)
class EntityRecord:
    text: str
    source: str
    embedding: np.ndarray

    def key(self) -> str:
        """Dedup / ordering key: trimmed, lowercased text."""
        return self.text.strip().lower()


@dataclass(eq=False)
class Annotation:
    image_id: str
    entities: list[EntityRecord] = field(default_factory=list)


@dataclass
class Vocabulary:
    """Category names plus surface-form synonyms, matched case-insensitively."""

    categories: list[str]
    synonyms: dict[str, list[str]]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lowered = [c.strip().lower() for c in self.categories]
        if len(set(lowered)) != len(lowered):
            raise AnnotationError("duplicate category names in vocabulary")
        index: dict[str, int] = {c: i for i, c in enumerate(lowered)}
        for cat, words in self.synonyms.items():
            cat_l = cat.strip().lower()
            if cat_l not in index:
                raise AnnotationError(f"synonyms listed for unknown category {cat!r}")
            for word in words:
                word_l = word.strip().lower()
                owner = index.get(word_l)
                if owner is not None and owner != index[cat_l]:
                    raise AnnotationError(
                        f"surface form {word!r} maps to both "
                        f"{self.categories[owner]!r} and {cat!r}"
                    )
                index[word_l] = index[cat_l]
        self._index = index

    @property
    def num_labels(self) -> int:
        return len(self.categories)

    def category_of(self, text: str) -> int | None:
        return self._index.get(text.strip().lower())


def _require(cond: bool, msg: str):
    if not cond:
        raise AnnotationError(msg)


def _parse_embedding(entry: dict, where: str, base_dir: str, cache: dict) -> np.ndarray:
    has_inline = "embedding" in entry
    has_ref = "embedding_ref" in entry
    _require(
        has_inline != has_ref,
        f"{where}: exactly one of 'embedding' or 'embedding_ref' is required",
    )
    if has_inline:
        raw = entry["embedding"]
        _require(isinstance(raw, list), f"{where}: embedding must be a list")
        _require(
            len(raw) == EMBED_DIM,
            f"{where}: embedding has {len(raw)} values, expected {EMBED_DIM}",
        )
        _require(
            all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw),
            f"{where}: embedding values must be numbers",
        )
        vec = np.asarray(raw, dtype=np.float64)
    else:
        ref = entry["embedding_ref"]
        _require(isinstance(ref, dict), f"{where}: embedding_ref must be an object")
        _require(
            isinstance(ref.get("file"), str) and isinstance(ref.get("row"), int),
            f"{where}: embedding_ref needs a 'file' string and a 'row' integer",
        )
        path = os.path.join(base_dir, ref["file"])
        if path not in cache:
            try:
                table = read_tensor(path)
            except (OSError, ValueError) as exc:
                raise AnnotationError(f"{where}: cannot read sidecar {path}: {exc}") from exc
            _require(
                table.ndim == 2 and table.shape[1] == EMBED_DIM,
                f"{where}: sidecar {path} must be rank-2 with {EMBED_DIM} columns",
            )
            cache[path] = table
        table = cache[path]
        row = ref["row"]
        _require(0 <= row < table.shape[0], f"{where}: sidecar row {row} out of range")
        vec = table[row].astype(np.float64)
    _require(bool(np.all(np.isfinite(vec))), f"{where}: embedding has non-finite values")
    return vec


def parse_annotation(source, base_dir: str | None = None) -> Annotation:
    """Parse and validate one annotation from a path, JSON string, or dict."""
    if isinstance(source, dict):
        doc = source
        base = base_dir or "."
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(os.fspath(source)):
        path = os.fspath(source)
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{path}: invalid JSON: {exc}") from exc
        base = base_dir or os.path.dirname(path) or "."
    else:
        try:
            doc = json.loads(source)
        except (TypeError, json.JSONDecodeError) as exc:
            raise AnnotationError(f"invalid annotation JSON: {exc}") from exc
        base = base_dir or "."

    _require(isinstance(doc, dict), "annotation must be a JSON object")
    image_id = doc.get("image_id")
    _require(isinstance(image_id, str) and image_id.strip() != "", "missing image_id")
    raw_entities = doc.get("entities")
    _require(isinstance(raw_entities, list), "entities must be a list")

    cache: dict = {}
    entities = []
    for i, entry in enumerate(raw_entities):
        where = f"entities[{i}]"
        _require(isinstance(entry, dict), f"{where}: must be an object")
        text = entry.get("text")
        _require(isinstance(text, str) and text.strip() != "", f"{where}: empty text")
        src = entry.get("source")
        _require(src in _SOURCES, f"{where}: source must be one of {_SOURCES}")
        vec = _parse_embedding(entry, where, base, cache)
        entities.append(EntityRecord(text=text.strip(), source=src, embedding=vec))
    return Annotation(image_id=image_id, entities=entities)


def serialize_annotation(ann: Annotation) -> str:
    """Canonical JSON: sorted keys, inline embeddings, 2-space indent."""
    doc = {
        "image_id": ann.image_id,
        "entities": [
            {
                "text": e.text,
                "source": e.source,
                "embedding": [float(v) for v in e.embedding],
            }
            for e in ann.entities
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def dedupe_entities(entities: list[EntityRecord]) -> list[EntityRecord]:
    """Drop case-insensitive duplicate texts, keeping the first occurrence."""
    seen: set[str] = set()
    out = []
    for e in entities:
        k = e.key()
        if k not in seen:
            seen.add(k)
            out.append(e)
    return out


def canonical_entity_order(entities: list[EntityRecord]) -> list[EntityRecord]:
    """Sort by dedup key.

    After dedup the key is unique, so the order is independent of the
    input permutation; the model sorts before any arithmetic touches the
    embeddings, which is what makes fusion output bitwise insensitive to
    annotation file ordering.
    """
    return sorted(entities, key=lambda e: (e.key(), e.source))


def stack_entity_features(entities: list[EntityRecord], dtype=np.float64) -> np.ndarray:
    """Stack embeddings into an [E, 768] matrix, row i = entities[i]."""
    if not entities:
        return np.zeros((0, EMBED_DIM), dtype=dtype)
    return np.stack([e.embedding for e in entities]).astype(dtype)


def entities_to_labels(entities: list[EntityRecord], vocab: Vocabulary) -> np.ndarray:
    """Multi-hot [num_labels] vector; entities outside the vocabulary are ignored."""
    labels = np.zeros(vocab.num_labels, dtype=np.float64)
    for e in entities:
        idx = vocab.category_of(e.text)
        if idx is not None:
            labels[idx] = 1.0
    return labels


def load_vocabulary(source) -> Vocabulary:
    """Load a vocabulary from a path, JSON string, or dict."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(os.fspath(source)):
        with open(os.fspath(source), "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{source}: invalid JSON: {exc}") from exc
    else:
        try:
            doc = json.loads(source)
        except (TypeError, json.JSONDecodeError) as exc:
            raise AnnotationError(f"invalid vocabulary JSON: {exc}") from exc
    _require(isinstance(doc, dict), "vocabulary must be a JSON object")
    cats = doc.get("categories")
    _require(
        isinstance(cats, list) and cats and all(isinstance(c, str) and c.strip() for c in cats),
        "vocabulary needs a non-empty 'categories' list of strings",
    )
    syn = doc.get("synonyms", {})
    _require(isinstance(syn, dict), "'synonyms' must be an object")
    for k, v in syn.items():
        _require(
            isinstance(v, list) and all(isinstance(w, str) for w in v),
            f"synonyms for {k!r} must be a list of strings",
        )
    return Vocabulary(categories=list(cats), synonyms={k: list(v) for k, v in syn.items()})
