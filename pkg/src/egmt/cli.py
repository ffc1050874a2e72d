"""Command line interface.

One executable, one subcommand per pipeline stage.  Every subcommand
prints its resolved configuration before doing anything, writes outputs
only under ``--out``, and maps failures to stable exit codes:

    0  success
    1  usage error (unknown flags, missing arguments)
    2  data error (missing or malformed files)
    3  numeric failure (non-finite values during optimization)

``EGMT_THREADS`` caps the thread count of the underlying numeric
libraries; it must take effect before numpy is first imported, which is
why the cap is applied at the top of this module.
"""

from __future__ import annotations

import os

if os.environ.get("EGMT_THREADS"):
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(_var, os.environ["EGMT_THREADS"])

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from .data_pipeline import DataError, DatasetManifest, crop_sliding, recolor, save_image
from .entity_ingest import AnnotationError, load_vocabulary, parse_annotation
from .model import ModelConfig
from .numerics.serialize import FormatError
from .trainer import NumericError, TrainConfig, fuse_inference, train

__all__ = ["main", "run"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_ABLATION_FLAGS = {
    "ca": "use_ca",
    "ta": "use_ta",
    "cgha": "use_cgha",
    "mt": "use_mt",
    "ti": "use_text",
}


class _Parser(argparse.ArgumentParser):
    """argparse that exits with the usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="egmt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=Path, help="JSON file overriding defaults")
        p.add_argument("--out", type=Path, required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the training seed")
        p.add_argument(
            "--ablation",
            default="",
            help="comma list of stages to disable: " + ",".join(_ABLATION_FLAGS),
        )
        p.add_argument("--vocab", type=Path, help="vocabulary JSON")

    p = sub.add_parser("preprocess", help="crop pairs into training patches")
    p.add_argument("manifest", type=Path)
    p.add_argument("--stride", type=int, default=224)
    p.add_argument("--size", type=int, default=448)
    common(p)

    p = sub.add_parser("train", help="optimize a model over a patch manifest")
    p.add_argument("manifest", type=Path)
    common(p)

    p = sub.add_parser("fuse", help="fuse every pair in a manifest")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("--gray", action="store_true", help="skip chroma reattachment")
    common(p)

    p = sub.add_parser("eval-fusion", help="fusion quality metrics over directories")
    p.add_argument("fused_dir", type=Path)
    p.add_argument("ir_dir", type=Path)
    p.add_argument("vis_dir", type=Path)
    common(p)

    p = sub.add_parser("eval-cls", help="classification metrics for a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("manifest", type=Path)
    common(p)

    p = sub.add_parser("validate-annotations", help="check annotation documents")
    p.add_argument("directory", type=Path)
    common(p, out_required=False)

    p = sub.add_parser("report", help="merge per-run metric CSVs into one table")
    p.add_argument("csvs", type=Path, nargs="+")
    common(p)
    return parser


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"config {path} must be a JSON object")
    unknown = set(doc) - {"model", "train"}
    if unknown:
        raise DataError(f"unknown config sections: {sorted(unknown)}")
    return doc


def _resolve_configs(args) -> tuple[ModelConfig, TrainConfig]:
    doc = _load_config_file(getattr(args, "config", None))
    try:
        model_cfg = ModelConfig.from_dict(doc.get("model", {}))
        train_doc = dict(doc.get("train", {}))
        if getattr(args, "seed", None) is not None:
            train_doc["seed"] = args.seed
        ablation = getattr(args, "ablation", "") or ""
        for token in filter(None, (t.strip() for t in ablation.split(","))):
            if token not in _ABLATION_FLAGS:
                raise DataError(
                    f"unknown ablation {token!r}; expected one of {sorted(_ABLATION_FLAGS)}"
                )
            train_doc[_ABLATION_FLAGS[token]] = False
        train_cfg = TrainConfig.from_dict(train_doc)
    except DataError:
        raise
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid configuration: {exc}") from exc
    return train_cfg.apply_ablations(model_cfg), train_cfg


def _print_config(args, model_cfg: ModelConfig | None, train_cfg: TrainConfig | None):
    resolved = {"subcommand": args.subcommand}
    if model_cfg is not None:
        resolved["model"] = model_cfg.to_dict()
    if train_cfg is not None:
        resolved["train"] = train_cfg.to_dict()
    for name in ("stride", "size", "vocab", "out"):
        if getattr(args, name, None) is not None:
            resolved[name] = str(getattr(args, name))
    print("resolved configuration:")
    print(json.dumps(resolved, indent=2, sort_keys=True))


def _vocab(args):
    if getattr(args, "vocab", None) is None:
        return None
    return load_vocabulary(args.vocab)


def _cmd_preprocess(args) -> int:
    model_cfg, train_cfg = _resolve_configs(args)
    _print_config(args, model_cfg, train_cfg)
    manifest = DatasetManifest.load(args.manifest)
    out: Path = args.out
    (out / "patches").mkdir(parents=True, exist_ok=True)
    entries = []
    for entry, sample in zip(manifest.entries, manifest.load_samples(_vocab(args))):
        annotation_name = None
        if entry.get("annotation_path"):
            src = manifest.base / entry["annotation_path"]
            annotation_name = f"patches/{Path(entry['annotation_path']).name}"
            shutil.copyfile(src, out / annotation_name)
            # annotations may reference embedding tables by relative path
            doc_ann = json.loads(src.read_text(encoding="utf-8"))
            for ent in doc_ann.get("entities", []):
                ref = ent.get("embedding_ref")
                if isinstance(ref, dict) and isinstance(ref.get("file"), str):
                    ref_src = src.parent / ref["file"]
                    ref_dst = out / "patches" / ref["file"]
                    if ref_src.exists() and not ref_dst.exists():
                        ref_dst.parent.mkdir(parents=True, exist_ok=True)
                        shutil.copyfile(ref_src, ref_dst)
        for patch in crop_sliding(sample, size=args.size, stride=args.stride):
            ir_name = f"patches/{patch.id}_ir.png"
            vi_name = f"patches/{patch.id}_vi.png"
            save_image(out / ir_name, patch.ir.data[0])
            save_image(out / vi_name, recolor(patch.vi_y, patch.vi_cbcr))
            row = {"ir_path": ir_name, "vi_path": vi_name}
            if annotation_name:
                row["annotation_path"] = annotation_name
            entries.append(row)
    doc = {"split": manifest.split, "entries": entries}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    print(f"wrote {len(entries)} patches from {len(manifest.entries)} pairs")
    return EXIT_OK


def _cmd_train(args) -> int:
    model_cfg, train_cfg = _resolve_configs(args)
    _print_config(args, model_cfg, train_cfg)
    manifest = DatasetManifest.load(args.manifest)
    checkpoint, log = train(manifest, model_cfg, train_cfg, args.out, vocab=_vocab(args))
    print(f"checkpoint: {checkpoint}")
    print(f"loss log: {log}")
    return EXIT_OK


def _cmd_fuse(args) -> int:
    model_cfg, train_cfg = _resolve_configs(args)
    _print_config(args, None, None)
    manifest = DatasetManifest.load(args.manifest)
    written = fuse_inference(
        args.checkpoint, manifest, args.out, vocab=_vocab(args), color=not args.gray
    )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_eval_fusion(args) -> int:
    from .metrics import evaluate_directory, write_report

    _print_config(args, None, None)
    report = evaluate_directory(args.fused_dir, args.ir_dir, args.vis_dir)
    args.out.mkdir(parents=True, exist_ok=True)
    write_report(report, args.out / "fusion_metrics.csv", args.out / "fusion_metrics.json")
    print(report.to_csv(), end="")
    print(f"evaluated {len(report.rows)} images")
    return EXIT_OK


def _cmd_eval_cls(args) -> int:
    from .metrics import CLASSIFICATION_METRICS, evaluate_classification

    _print_config(args, None, None)
    if args.vocab is None:
        raise DataError("eval-cls needs --vocab to derive labels")
    manifest = DatasetManifest.load(args.manifest)
    try:
        metrics, per_sample = evaluate_classification(args.checkpoint, manifest, _vocab(args))
    except ValueError as exc:
        # degenerate label sets make the ranking metrics undefined
        raise DataError(str(exc)) from exc
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["metric,value"]
    for name in CLASSIFICATION_METRICS:
        lines.append(f"{name},{metrics[name]:.6f}")
        print(f"{name}: {metrics[name]:.6f}")
    (args.out / "cls_metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (args.out / "cls_scores.json").write_text(
        json.dumps(per_sample, indent=2, sort_keys=True), encoding="utf-8"
    )
    return EXIT_OK


def _cmd_validate_annotations(args) -> int:
    _print_config(args, None, None)
    directory: Path = args.directory
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    paths = sorted(directory.glob("*.json"))
    failures = []
    for path in paths:
        try:
            parse_annotation(path)
        except AnnotationError as exc:
            failures.append((path.name, str(exc)))
    for name, message in failures:
        print(f"invalid: {name}: {message}")
    print(f"{len(paths) - len(failures)} ok, {len(failures)} invalid")
    return EXIT_DATA if failures else EXIT_OK


def _cmd_report(args) -> int:
    _print_config(args, None, None)
    tables = []
    for path in args.csvs:
        try:
            lines = path.read_text(encoding="utf-8").strip().splitlines()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        if not lines:
            raise DataError(f"empty metric table {path}")
        header = lines[0].split(",")
        rows = {parts[0]: parts[1:] for parts in (ln.split(",") for ln in lines[1:])}
        tables.append((path.stem, header, rows))
    columns = tables[0][1]
    for name, header, _ in tables:
        if header != columns:
            raise DataError(f"column mismatch in {name}: {header} != {columns}")
    merged = [",".join(["run"] + columns[1:])]
    plot_lines = ["run,image,metric,value"]
    for name, _, rows in tables:
        mean = rows.get("MEAN")
        if mean is None:
            raise DataError(f"no MEAN row in {name}")
        merged.append(",".join([name] + mean))
        for image, values in rows.items():
            if image == "MEAN":
                continue
            for metric, value in zip(columns[1:], values):
                plot_lines.append(f"{name},{image},{metric},{value}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.csv").write_text("\n".join(merged) + "\n", encoding="utf-8")
    (args.out / "plot_data.csv").write_text("\n".join(plot_lines) + "\n", encoding="utf-8")
    print("\n".join(merged))
    return EXIT_OK


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "fuse": _cmd_fuse,
    "eval-fusion": _cmd_eval_fusion,
    "eval-cls": _cmd_eval_cls,
    "validate-annotations": _cmd_validate_annotations,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.subcommand](args)
    except (DataError, AnnotationError, FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
