"""Dataset assembly: decoding, luminance split, cropping, batching.

The network consumes single-channel luminance; color visible images are
split into Y (fused) and CbCr (reattached at output) using full-range
ITU-R BT.601 coefficients.  Cropping produces aligned patches with a
flush window at each edge so every source pixel is covered regardless
of stride.  Batch order is a pure function of (seed, epoch).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .entity_ingest import Annotation, Vocabulary, entities_to_labels, parse_annotation
from .numerics import Rng, Tensor

__all__ = [
    "ImagePairSample",
    "DatasetManifest",
    "DataError",
    "load_pair",
    "crop_sliding",
    "batch_iter",
    "recolor",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "save_image",
    "load_gray",
]


class DataError(ValueError):
    """Unreadable, inconsistent, or missing dataset content."""


# Full-range BT.601: Cb/Cr written in their defining difference form so
# analysis and synthesis are exact inverses in floating point (the usual
# six-decimal matrix constants are rounded versions of these).
_KR, _KG, _KB = 0.299, 0.587, 0.114


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    """[3,H,W] RGB in [0,1] -> [3,H,W] YCbCr with chroma centered at 0.5."""
    r, g, b = rgb[0], rgb[1], rgb[2]
    y = _KR * r + _KG * g + _KB * b
    cb = 0.5 + (b - y) / (2.0 * (1.0 - _KB))
    cr = 0.5 + (r - y) / (2.0 * (1.0 - _KR))
    return np.stack([y, cb, cr])


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[0], ycc[1] - 0.5, ycc[2] - 0.5
    r = y + 2.0 * (1.0 - _KR) * cr
    b = y + 2.0 * (1.0 - _KB) * cb
    g = (y - _KR * r - _KB * b) / _KG
    return np.clip(np.stack([r, g, b]), 0.0, 1.0)


@dataclass
class ImagePairSample:
    id: str
    ir: Tensor
    vi_y: Tensor
    vi_cbcr: np.ndarray | None
    annotation: Annotation | None
    label: np.ndarray


def _decode(path: Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
        return img
    except Exception as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc


def load_gray(path) -> np.ndarray:
    """8-bit image file -> [H,W] float64 in [0,1], via BT.601 if colored."""
    img = _decode(Path(path))
    if img.mode in ("L", "I;16", "I"):
        arr = np.asarray(img.convert("L"), dtype=np.float64)
        return arr / 255.0
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0
    return rgb_to_ycbcr(rgb)[0]


def load_pair(
    entry: dict,
    base: Path | str = ".",
    vocab: Vocabulary | None = None,
    dtype=np.float64,
) -> ImagePairSample:
    """Manifest entry -> decoded sample; paths resolve relative to ``base``."""
    base = Path(base)
    for key in ("ir_path", "vi_path"):
        if key not in entry:
            raise DataError(f"manifest entry missing {key!r}: {entry}")
    ir_path = base / entry["ir_path"]
    vi_path = base / entry["vi_path"]

    ir = load_gray(ir_path)

    vi_img = _decode(vi_path)
    rgb = np.asarray(vi_img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0
    ycc = rgb_to_ycbcr(rgb)
    vi_y, vi_cbcr = ycc[0], ycc[1:]

    if ir.shape != vi_y.shape:
        raise DataError(
            f"extent mismatch: {ir_path.name} is {ir.shape}, {vi_path.name} is {vi_y.shape}"
        )

    annotation = None
    label = np.zeros(9, dtype=np.float64)
    if entry.get("annotation_path"):
        annotation = parse_annotation(base / entry["annotation_path"])
        if vocab is not None:
            label = entities_to_labels(annotation.entities, vocab)

    return ImagePairSample(
        id=ir_path.stem,
        ir=Tensor(ir[None].astype(dtype)),
        vi_y=Tensor(vi_y[None].astype(dtype)),
        vi_cbcr=vi_cbcr,
        annotation=annotation,
        label=label,
    )


@dataclass
class DatasetManifest:
    entries: list
    split: str
    base: Path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        if not isinstance(doc, dict) or "entries" not in doc or "split" not in doc:
            raise DataError(f"manifest {path} needs 'entries' and 'split'")
        if doc["split"] not in ("train", "test"):
            raise DataError(f"manifest split must be train|test, got {doc['split']!r}")
        base = path.parent
        stems = set()
        for entry in doc["entries"]:
            for key in ("ir_path", "vi_path"):
                if key not in entry:
                    raise DataError(f"manifest entry missing {key!r}")
                if not (base / entry[key]).exists():
                    raise DataError(f"manifest references missing file {entry[key]}")
            ann = entry.get("annotation_path")
            if ann and not (base / ann).exists():
                raise DataError(f"manifest references missing file {ann}")
            stem = Path(entry["ir_path"]).stem
            if stem in stems:
                raise DataError(f"duplicate stem {stem!r} in manifest")
            stems.add(stem)
        return cls(entries=list(doc["entries"]), split=doc["split"], base=base)

    def load_samples(self, vocab: Vocabulary | None = None, dtype=np.float64) -> list:
        return [load_pair(e, self.base, vocab, dtype) for e in self.entries]


def _axis_offsets(extent: int, size: int, stride: int) -> list:
    offsets = list(range(0, extent - size + 1, stride))
    if offsets[-1] != extent - size:
        offsets.append(extent - size)
    return offsets


def _pad_reflect_to(arr: np.ndarray, size: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    ph, pw = max(0, size - h), max(0, size - w)
    if ph == 0 and pw == 0:
        return arr
    if ph > h - 1 or pw > w - 1:
        raise DataError(f"image {h}x{w} too small to reflect-pad to {size}")
    pads = [(0, 0)] * (arr.ndim - 2) + [(ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)]
    return np.pad(arr, pads, mode="reflect")


def crop_sliding(sample: ImagePairSample, size: int = 448, stride: int = 224) -> list:
    """All aligned size x size windows at {0, stride, ...} plus a window
    flush with each edge; sub-size images are reflect-padded to a single
    patch.  Patches inherit the parent annotation and label.
    """
    if size % 16 != 0:
        raise ValueError(f"crop size {size} must be a multiple of 16")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ir = sample.ir.data
    vi = sample.vi_y.data
    cbcr = sample.vi_cbcr
    h, w = ir.shape[-2:]
    if h < size or w < size:
        ir = _pad_reflect_to(ir, size)
        vi = _pad_reflect_to(vi, size)
        cbcr = _pad_reflect_to(cbcr, size) if cbcr is not None else None
        h, w = ir.shape[-2:]
    out = []
    for oy in _axis_offsets(h, size, stride):
        for ox in _axis_offsets(w, size, stride):
            sl = (slice(None), slice(oy, oy + size), slice(ox, ox + size))
            out.append(
                replace(
                    sample,
                    id=f"{sample.id}_y{oy}_x{ox}",
                    ir=Tensor(ir[sl].copy()),
                    vi_y=Tensor(vi[sl].copy()),
                    vi_cbcr=cbcr[sl].copy() if cbcr is not None else None,
                )
            )
    return out


def batch_iter(samples: list, batch: int, seed: int, epoch: int):
    """Deterministic shuffled batches; the last partial batch is kept."""
    if not samples:
        raise DataError("empty dataset")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    order = Rng(seed).child("shuffle", epoch).permutation(len(samples))
    for lo in range(0, len(samples), batch):
        yield [samples[i] for i in order[lo : lo + batch]]


def recolor(fused_y, vi_cbcr: np.ndarray | None) -> np.ndarray:
    """Fused luminance + source chroma -> [3,H,W] RGB in [0,1].

    Without chroma the result is the luminance replicated (neutral
    chroma), i.e. a grayscale image in RGB form.
    """
    y = fused_y.data if isinstance(fused_y, Tensor) else np.asarray(fused_y)
    y = y.reshape(y.shape[-2], y.shape[-1])
    if vi_cbcr is None:
        g = np.clip(y, 0.0, 1.0)
        return np.stack([g, g, g])
    if vi_cbcr.shape[-2:] != y.shape:
        raise ValueError(f"chroma extents {vi_cbcr.shape[-2:]} != luma {y.shape}")
    return ycbcr_to_rgb(np.stack([y, vi_cbcr[0], vi_cbcr[1]]))


def save_image(path, array: np.ndarray) -> None:
    """[H,W] or [3,H,W] float in [0,1] -> 8-bit PNG."""
    arr = np.asarray(array)
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if data.ndim == 3 and data.shape[0] in (1, 3):
        data = data.transpose(1, 2, 0)
        if data.shape[-1] == 1:
            data = data[..., 0]
    img = Image.fromarray(data)
    img.save(Path(path))
