"""Annotation parsing, dedup, labels, and the serialization fixed point."""

import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egmt.entity_ingest import (
    EMBED_DIM,
    Annotation,
    AnnotationError,
    EntityRecord,
    canonical_entity_order,
    dedupe_entities,
    entities_to_labels,
    load_vocabulary,
    parse_annotation,
    serialize_annotation,
    stack_entity_features,
)
from egmt.numerics.serialize import write_tensor

HERE = os.path.dirname(__file__)
CASES = os.path.join(HERE, "fixtures", "dedupe_cases.json")
VECTORS = os.path.join(HERE, "fixtures", "dedupe_vectors.json")

RNG = np.random.default_rng(7)


def _vec(seed=0):
    return np.random.default_rng(seed).normal(size=EMBED_DIM).tolist()


def _doc(entities):
    return {"image_id": "img_001", "entities": entities}


def test_parse_valid_annotation():
    doc = _doc(
        [
            {"text": "  car ", "source": "ir", "embedding": _vec(1)},
            {"text": "lamp", "source": "vi", "embedding": _vec(2)},
        ]
    )
    ann = parse_annotation(doc)
    assert ann.image_id == "img_001"
    assert [e.text for e in ann.entities] == ["car", "lamp"]
    assert ann.entities[0].embedding.shape == (EMBED_DIM,)
    assert ann.entities[0].embedding.dtype == np.float64


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("image_id"),
        lambda d: d.update(image_id="  "),
        lambda d: d.update(entities="nope"),
        lambda d: d["entities"][0].update(source="thermal"),
        lambda d: d["entities"][0].update(text="   "),
        lambda d: d["entities"][0].update(embedding=[1.0, 2.0]),
        lambda d: d["entities"][0].update(embedding=["x"] * EMBED_DIM),
        lambda d: d["entities"][0].pop("embedding"),
        lambda d: d["entities"][0].update(embedding_ref={"file": "f", "row": 0}),
    ],
)
def test_parse_rejects_malformed(mutate):
    doc = _doc([{"text": "car", "source": "ir", "embedding": _vec()}])
    mutate(doc)
    with pytest.raises(AnnotationError):
        parse_annotation(doc)


def test_parse_rejects_nonfinite_embedding():
    vec = _vec()
    vec[5] = float("nan")
    with pytest.raises(AnnotationError):
        parse_annotation(_doc([{"text": "car", "source": "ir", "embedding": vec}]))


def test_embedding_ref_resolves_sidecar(tmp_path):
    table = RNG.normal(size=(4, EMBED_DIM)).astype(np.float32)
    write_tensor(tmp_path / "embs.egt", table)
    doc = _doc(
        [
            {"text": "car", "source": "ir", "embedding_ref": {"file": "embs.egt", "row": 2}},
            {"text": "bus", "source": "vi", "embedding_ref": {"file": "embs.egt", "row": 0}},
        ]
    )
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(doc))
    ann = parse_annotation(path)
    np.testing.assert_array_equal(ann.entities[0].embedding, table[2].astype(np.float64))
    np.testing.assert_array_equal(ann.entities[1].embedding, table[0].astype(np.float64))


def test_embedding_ref_row_out_of_range(tmp_path):
    write_tensor(tmp_path / "embs.egt", np.zeros((2, EMBED_DIM), dtype=np.float32))
    doc = _doc([{"text": "car", "source": "ir", "embedding_ref": {"file": "embs.egt", "row": 5}}])
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(AnnotationError):
        parse_annotation(path)


def test_embedding_ref_missing_file(tmp_path):
    doc = _doc([{"text": "car", "source": "ir", "embedding_ref": {"file": "gone.egt", "row": 0}}])
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(AnnotationError):
        parse_annotation(path)


def test_serialize_parse_fixed_point():
    ann = parse_annotation(
        _doc(
            [
                {"text": "Car", "source": "ir", "embedding": _vec(3)},
                {"text": "tree", "source": "vi", "embedding": _vec(4)},
            ]
        )
    )
    once = serialize_annotation(ann)
    twice = serialize_annotation(parse_annotation(once))
    assert once == twice


def test_serialize_inlines_refs(tmp_path):
    table = RNG.normal(size=(1, EMBED_DIM)).astype(np.float32)
    write_tensor(tmp_path / "e.egt", table)
    doc = _doc([{"text": "car", "source": "ir", "embedding_ref": {"file": "e.egt", "row": 0}}])
    (tmp_path / "a.json").write_text(json.dumps(doc))
    out = serialize_annotation(parse_annotation(tmp_path / "a.json"))
    parsed = json.loads(out)
    assert "embedding" in parsed["entities"][0]
    assert len(parsed["entities"][0]["embedding"]) == EMBED_DIM


# ---------------------------------------------------------------------------
# dedup


def _records(texts):
    return [EntityRecord(text=t, source="ir", embedding=np.zeros(EMBED_DIM)) for t in texts]


def test_dedupe_conformance_cases():
    with open(CASES, "r", encoding="utf-8") as fh:
        vectors = json.load(fh)
    assert vectors["cases"], "empty vector file"
    for case in vectors["cases"]:
        records = _records(case["input"])
        # Records store trimmed text; dedup then removes case-duplicates.
        got = [e.text.strip() for e in dedupe_entities(records)]
        assert got == case["expected"], case["name"]


def test_dedupe_full_record_vectors():
    with open(VECTORS, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    parsed = parse_annotation({"image_id": "v", "entities": doc["input"]})
    kept = [{"text": e.text, "source": e.source} for e in dedupe_entities(parsed.entities)]
    assert kept == doc["expected"]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(alphabet=st.characters(codec="utf-8"), max_size=8), max_size=12))
def test_dedupe_properties(texts):
    texts = [t for t in texts if t.strip()]
    out = dedupe_entities(_records(texts))
    keys = [e.key() for e in out]
    # Unique keys, order-preserving subsequence, idempotent.
    assert len(keys) == len(set(keys))
    it = iter(texts)
    assert all(any(t == e.text for t in it) for e in out)
    assert [e.text for e in dedupe_entities(out)] == [e.text for e in out]


def test_canonical_order_ignores_permutation():
    records = _records(["zebra", "Apple", "mango"])
    a = canonical_entity_order(records)
    b = canonical_entity_order(records[::-1])
    assert [e.text for e in a] == [e.text for e in b] == ["Apple", "mango", "zebra"]


# ---------------------------------------------------------------------------
# features and labels


def test_stack_preserves_norms():
    anns = [
        EntityRecord("car", "ir", RNG.normal(size=EMBED_DIM)),
        EntityRecord("bus", "vi", RNG.normal(size=EMBED_DIM)),
    ]
    mat = stack_entity_features(anns)
    assert mat.shape == (2, EMBED_DIM)
    for row, rec in zip(mat, anns):
        assert np.linalg.norm(row) == np.linalg.norm(rec.embedding)


def test_stack_empty():
    assert stack_entity_features([]).shape == (0, EMBED_DIM)


VOCAB = {
    "categories": ["person", "car", "lamp"],
    "synonyms": {"person": ["pedestrian", "man"], "car": ["sedan"]},
}


def test_labels_from_categories_and_synonyms():
    vocab = load_vocabulary(VOCAB)
    ents = _records(["Pedestrian", "sedan", "unknown thing", "LAMP"])
    labels = entities_to_labels(ents, vocab)
    np.testing.assert_array_equal(labels, [1.0, 1.0, 1.0])


def test_labels_unmatched_all_zero():
    vocab = load_vocabulary(VOCAB)
    labels = entities_to_labels(_records(["spaceship"]), vocab)
    np.testing.assert_array_equal(labels, [0.0, 0.0, 0.0])


def test_vocabulary_rejects_duplicate_categories():
    with pytest.raises(AnnotationError):
        load_vocabulary({"categories": ["car", "Car"], "synonyms": {}})


def test_vocabulary_rejects_cross_category_synonym():
    with pytest.raises(AnnotationError):
        load_vocabulary(
            {"categories": ["car", "bus"], "synonyms": {"car": ["coach"], "bus": ["coach"]}}
        )


def test_vocabulary_rejects_unknown_synonym_key():
    with pytest.raises(AnnotationError):
        load_vocabulary({"categories": ["car"], "synonyms": {"plane": ["jet"]}})
