"""Fusion quality and multi-label classification metrics."""

from .classification import CLASSIFICATION_METRICS, classification_metrics
from .fusion import (
    FUSION_METRICS,
    fmi_w,
    mi,
    mi_pair,
    nabf,
    ncie,
    pc_metric,
    psnr,
    psnr_fusion,
    qabf,
    ssim_metric,
    ssim_pair,
)
from .phasecong import PhaseCongConfig, pc_map, pc_moments
from .report import (
    FUSION_COLUMNS,
    MetricReport,
    evaluate_classification,
    evaluate_directory,
    write_report,
)

__all__ = [
    "CLASSIFICATION_METRICS",
    "FUSION_COLUMNS",
    "FUSION_METRICS",
    "MetricReport",
    "PhaseCongConfig",
    "classification_metrics",
    "evaluate_classification",
    "evaluate_directory",
    "fmi_w",
    "mi",
    "mi_pair",
    "nabf",
    "ncie",
    "pc_map",
    "pc_metric",
    "pc_moments",
    "psnr",
    "psnr_fusion",
    "qabf",
    "ssim_metric",
    "ssim_pair",
    "write_report",
]
