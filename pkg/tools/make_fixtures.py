"""Regenerate the committed test fixtures under tests/fixtures/.

Everything is derived from fixed seeds so reruns are byte-identical:
eight infrared/visible pairs (six 32x32, two 448x448) with structured
content (hot blobs in the infrared channel, gradients, boxes and texture
in the visible channel), one annotation per pair with two or three
entities, a nine-category vocabulary, and the shared deduplication
vectors consumed by both the fusion package tests and the extractor
package tests.

The last pair stores its embeddings in a tensor sidecar instead of
inline JSON so both reference styles stay covered.

Run from the repository root:

    python3 tools/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np

from egmt.data_pipeline import save_image
from egmt.entity_ingest import dedupe_entities, parse_annotation
from egmt.numerics.serialize import write_tensor

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"

CATEGORIES = [
    "person",
    "car",
    "bus",
    "truck",
    "motorcycle",
    "bicycle",
    "lamp",
    "building",
    "tree",
]

SYNONYMS = {
    "person": ["pedestrian", "people", "man", "woman"],
    "car": ["automobile", "sedan", "vehicle"],
    "bicycle": ["bike", "cyclist"],
    "lamp": ["street lamp", "streetlight", "light pole"],
}

# Text-level dedup contract shared across language implementations: trim,
# simple Unicode lowercasing (not casefolding), first occurrence wins,
# input order preserved.
DEDUPE_CASES = {
    "description": (
        "Shared conformance vectors for entity text dedup: trim whitespace, "
        "lowercase (simple Unicode lowercasing, not casefolding), keep the "
        "first occurrence, preserve order. Inputs are raw texts; expected "
        "outputs are the surviving trimmed texts in order."
    ),
    "cases": [
        {
            "name": "ascii case and trim",
            "input": ["Car", " car ", "lamp", "CAR", "Lamp"],
            "expected": ["Car", "lamp"],
        },
        {
            "name": "order preserved",
            "input": ["tree", "bus", "person", "BUS", "tree"],
            "expected": ["tree", "bus", "person"],
        },
        {
            "name": "accents are significant",
            "input": ["café", "cafe", "Café"],
            "expected": ["café", "cafe"],
        },
        {
            "name": "lowercase not casefold",
            "input": ["Straße", "STRASSE", "strasse"],
            "expected": ["Straße", "STRASSE"],
        },
        {
            "name": "inner whitespace kept",
            "input": ["traffic light", "Traffic  Light", "TRAFFIC LIGHT"],
            "expected": ["traffic light", "Traffic  Light"],
        },
        {
            "name": "single entity",
            "input": ["person"],
            "expected": ["person"],
        },
    ],
}

# (size, entity texts) per pair; sources alternate vi/ir
PAIRS = [
    (32, ["car", "person"]),
    (32, ["person", "lamp", "tree"]),
    (32, ["bus", "building"]),
    (32, ["car", "bicycle"]),
    (32, ["truck", "lamp"]),
    (32, ["person", "car", "building"]),
    (448, ["car", "person", "lamp"]),
    (448, ["bus", "tree"]),
]


def blob(size, cy, cx, sigma):
    y, x = np.mgrid[0:size, 0:size]
    return np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * sigma**2))


def make_pair_images(size, rng):
    """One scene rendered twice: both modalities share geometry (blobs,
    boxes, sky gradient) but weight it differently, the way warm objects
    dominate an infrared view while surfaces and texture dominate the
    visible one.  Shared structure keeps the pair fusable: a single image
    can agree with both sources almost everywhere.
    """
    y, x = np.mgrid[0:size, 0:size] / size
    sky = 0.25 + 0.5 * y

    blobs = np.zeros((size, size))
    for _ in range(2 + rng.integers(3)):
        cy, cx = rng.uniform(0.15, 0.85, 2) * size
        blobs += rng.uniform(0.5, 0.9) * blob(size, cy, cx, rng.uniform(0.06, 0.15) * size)

    boxes = np.zeros((size, size))
    for _ in range(2 + rng.integers(2)):
        y0, x0 = rng.uniform(0.1, 0.6, 2)
        h, w = rng.uniform(0.15, 0.3, 2)
        boxes = np.where(
            (y >= y0) & (y < y0 + h) & (x >= x0) & (x < x0 + w),
            rng.uniform(0.4, 0.7),
            boxes,
        )

    stripes = 0.04 * np.sin(x * rng.uniform(15, 40) + rng.uniform(0, 6))

    ir = 0.15 + 0.1 * sky + blobs + 0.25 * boxes + 0.3 * stripes
    ir += 0.005 * rng.standard_normal((size, size))
    ir = np.clip(ir, 0.0, 1.0)

    base = sky + boxes + 0.35 * blobs + stripes
    base += 0.005 * rng.standard_normal((size, size))
    base = np.clip(base, 0.0, 1.0)
    tint = rng.uniform(-0.06, 0.06, 3)
    vi = np.clip(np.stack([base + t * (0.3 + 0.7 * y) for t in tint]), 0.0, 1.0)
    return ir, vi


def embedding(rng):
    v = rng.standard_normal(768)
    return v / np.linalg.norm(v) * 3.0


def main():
    dataset = FIXTURES / "dataset"
    dataset.mkdir(parents=True, exist_ok=True)

    (FIXTURES / "vocab.json").write_text(
        json.dumps({"categories": CATEGORIES, "synonyms": SYNONYMS}, indent=2) + "\n",
        encoding="utf-8",
    )

    entries = []
    sidecar_rows = []
    for i, (size, texts) in enumerate(PAIRS):
        rng = np.random.default_rng(100 + i)
        ir, vi = make_pair_images(size, rng)
        save_image(dataset / f"pair{i}_ir.png", ir)
        save_image(dataset / f"pair{i}_vi.png", vi)
        use_sidecar = i == len(PAIRS) - 1
        ents = []
        for j, text in enumerate(texts):
            vec = embedding(rng)
            ent = {"text": text, "source": ["vi", "ir"][j % 2]}
            if use_sidecar:
                ent["embedding_ref"] = {"file": "embeddings.egt1", "row": len(sidecar_rows)}
                sidecar_rows.append(vec)
            else:
                ent["embedding"] = [round(float(v), 6) for v in vec]
            ents.append(ent)
        ann = {"image_id": f"pair{i}", "entities": ents}
        (dataset / f"pair{i}.json").write_text(
            json.dumps(ann, indent=2) + "\n", encoding="utf-8"
        )
        entries.append(
            {
                "ir_path": f"dataset/pair{i}_ir.png",
                "vi_path": f"dataset/pair{i}_vi.png",
                "annotation_path": f"dataset/pair{i}.json",
            }
        )
    write_tensor(dataset / "embeddings.egt1", np.stack(sidecar_rows))
    (FIXTURES / "manifest.json").write_text(
        json.dumps({"split": "train", "entries": entries}, indent=2) + "\n",
        encoding="utf-8",
    )

    (FIXTURES / "dedupe_cases.json").write_text(
        json.dumps(DEDUPE_CASES, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )

    # full-record variant with sources and embeddings; expected output is
    # what the primary dedup function keeps, in input order
    rng = np.random.default_rng(777)
    raw = []
    for text, source in [
        ("Car", "vi"),
        ("person", "ir"),
        ("car", "vi"),
        ("LAMP", "ir"),
        ("person", "vi"),
        ("tree", "vi"),
        ("lamp", "ir"),
        ("Tree", "ir"),
    ]:
        raw.append(
            {
                "text": text,
                "source": source,
                "embedding": [round(float(v), 6) for v in embedding(rng)],
            }
        )
    parsed = parse_annotation({"image_id": "dedupe", "entities": raw})
    kept = dedupe_entities(parsed.entities)
    doc = {
        "input": raw,
        "expected": [{"text": e.text, "source": e.source} for e in kept],
    }
    (FIXTURES / "dedupe_vectors.json").write_text(
        json.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(PAIRS)} pairs, vocab, dedupe cases and vectors under {FIXTURES}")


if __name__ == "__main__":
    main()
