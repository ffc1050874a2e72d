"""Per-directory metric evaluation and table assembly.

The fusion report walks matching stems across three directories and
computes the eight quality metrics per image plus their arithmetic
means; rows are ordered by sorted stem so output files are
deterministic.  Fused filenames may carry a ``_fused`` suffix, which is
stripped when matching stems, and source stems carrying an ``_ir`` or
``_vi`` modality suffix also match their suffix-free form, so both
source arguments can point at one directory of tagged files (the
preprocess layout) or at two directories of bare names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data_pipeline import DataError, load_gray
from .classification import classification_metrics
from .fusion import FUSION_METRICS

__all__ = [
    "FUSION_COLUMNS",
    "MetricReport",
    "evaluate_directory",
    "evaluate_classification",
    "write_report",
]

FUSION_COLUMNS = ["PC", "SSIM", "MI", "Q_abf", "PSNR", "FMI_w", "N_abf", "NCIE"]

_IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg")


@dataclass
class MetricReport:
    """Per-image metric rows plus their means, in fixed column order."""

    rows: dict[str, dict[str, float]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    columns: list[str] = field(default_factory=lambda: list(FUSION_COLUMNS))

    def to_csv(self) -> str:
        lines = ["image," + ",".join(self.columns)]
        for stem in sorted(self.rows):
            row = self.rows[stem]
            lines.append(stem + "," + ",".join(f"{row[c]:.6f}" for c in self.columns))
        if self.rows:
            lines.append("MEAN," + ",".join(f"{self.means[c]:.6f}" for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "columns": self.columns,
            "rows": {k: self.rows[k] for k in sorted(self.rows)},
            "mean": self.means,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _strip_modality(stem: str) -> str:
    for tag in ("_ir", "_vi"):
        if stem.endswith(tag):
            return stem[: -len(tag)]
    return stem


def _index_dir(directory: Path, tag: str | None = None, strip_fused: bool = False) -> dict[str, Path]:
    # with a modality tag, a tagged stem indexes under its bare form too,
    # so "x_ir.png" answers lookups for both "x_ir" and "x"
    index: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        stem = path.stem
        if strip_fused and stem.endswith("_fused"):
            stem = stem[: -len("_fused")]
        keys = [stem]
        if tag and stem.endswith(tag):
            keys.append(stem[: -len(tag)])
        for key in keys:
            if key in index:
                raise DataError(f"duplicate stem {key!r} in {directory}")
            index[key] = path
    return index


def evaluate_directory(fused_dir, ir_dir, vis_dir) -> MetricReport:
    """Metric rows for every fused image, matched to sources by stem.

    A fused file ``<stem>_fused.png`` pairs with ``<stem>`` in each source
    directory, where a trailing ``_ir``/``_vi`` on either side is treated
    as a modality tag rather than part of the name.
    """
    fused_dir, ir_dir, vis_dir = Path(fused_dir), Path(ir_dir), Path(vis_dir)
    for d in (fused_dir, ir_dir, vis_dir):
        if not d.is_dir():
            raise DataError(f"not a directory: {d}")
    fused_index = _index_dir(fused_dir, strip_fused=True)
    ir_index = _index_dir(ir_dir, tag="_ir")
    vis_index = _index_dir(vis_dir, tag="_vi")
    report = MetricReport()
    for stem in sorted(fused_index):
        base = _strip_modality(stem)
        ir_path = ir_index.get(base, ir_index.get(stem))
        vis_path = vis_index.get(base, vis_index.get(stem))
        if ir_path is None or vis_path is None:
            raise DataError(f"no source counterpart for stem {stem!r}")
        fused = load_gray(fused_index[stem])
        ir = load_gray(ir_path)
        vis = load_gray(vis_path)
        if fused.shape != ir.shape or fused.shape != vis.shape:
            raise DataError(f"extent mismatch for stem {stem!r}")
        report.rows[stem] = {
            name: float(fn(fused, ir, vis)) for name, fn in FUSION_METRICS.items()
        }
    if report.rows:
        report.means = {
            c: float(np.mean([row[c] for row in report.rows.values()]))
            for c in FUSION_COLUMNS
        }
    return report


def evaluate_classification(checkpoint_path, manifest, vocab, threshold: float = 0.5):
    """Run the classifier over a manifest; returns (metrics, per-sample scores)."""
    from ..model import forward_full
    from ..trainer import load_checkpoint

    state, model_cfg, _ = load_checkpoint(checkpoint_path)
    scores, labels, ids = [], [], []
    for sample in manifest.load_samples(vocab, dtype=model_cfg.np_dtype):
        trace = forward_full(sample, state.params, model_cfg, training=False)
        scores.append(trace.probs.data.copy())
        labels.append(sample.label)
        ids.append(sample.id)
    metrics = classification_metrics(scores, labels, threshold)
    per_sample = {i: s.tolist() for i, s in zip(ids, scores)}
    return metrics, per_sample


def write_report(report: MetricReport, csv_path, json_path=None) -> None:
    Path(csv_path).write_text(report.to_csv(), encoding="utf-8")
    if json_path is not None:
        Path(json_path).write_text(report.to_json(), encoding="utf-8")
