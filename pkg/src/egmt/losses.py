"""Training objectives.

The fusion objective pulls the fused image toward the brighter source
pixel, toward the stronger source edge (Laplacian magnitude), and toward
structural similarity with both sources.  The classification objective
is a focal binary cross-entropy in probability space.  The two tasks
are balanced by trainable uncertainty scalars passed through a negated
softmax, so the pair of weights always sums to one.

All functions return scalar Tensors and are differentiable end to end;
targets built from the source images (max selection, source edges) are
constants with respect to the fused image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .numerics import Tensor

__all__ = [
    "FusionLossConfig",
    "FocalConfig",
    "LossConfig",
    "intensity_loss",
    "edge_loss",
    "ssim_loss",
    "fusion_loss",
    "focal_loss",
    "task_weights",
    "total_loss",
    "class_weights_from_counts",
    "LAPLACIAN_KERNEL",
]

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

_PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class FusionLossConfig:
    alpha1: float = 1.0
    alpha2: float = 15.0
    alpha3: float = 5.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_c1: float = 0.01**2
    ssim_c2: float = 0.03**2

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.ssim_window % 2 != 1 or self.ssim_window < 3:
            raise ValueError("ssim_window must be odd and >= 3")
        if self.ssim_sigma <= 0:
            raise ValueError("ssim_sigma must be positive")


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    class_weights: tuple = tuple([0.5] * 9)
    focal_form: str = "standard"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        w = np.asarray(self.class_weights, dtype=np.float64)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0) or np.any(w > 1):
            raise ValueError("class weights must be finite reals in (0, 1]")
        if self.focal_form not in ("standard", "verbatim"):
            raise ValueError(f"unknown focal_form {self.focal_form!r}")


@dataclass(frozen=True)
class LossConfig:
    fusion: FusionLossConfig = field(default_factory=FusionLossConfig)
    focal: FocalConfig = field(default_factory=FocalConfig)
    tau: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def _check_triple(i_f: Tensor, i_ir: Tensor, i_vis: Tensor) -> None:
    if not (i_f.shape == i_ir.shape == i_vis.shape):
        raise ValueError(
            f"image shapes differ: {i_f.shape}, {i_ir.shape}, {i_vis.shape}"
        )


def intensity_loss(i_f: Tensor, i_ir: Tensor, i_vis: Tensor) -> Tensor:
    """Mean L1 distance to the per-pixel brighter source."""
    _check_triple(i_f, i_ir, i_vis)
    target = nm.maximum(i_ir, i_vis)
    return nm.absolute(i_f - target).mean()


def _laplacian_mag(img: Tensor) -> Tensor:
    k = Tensor(LAPLACIAN_KERNEL.reshape(1, 1, 3, 3).astype(img.data.dtype))
    return nm.absolute(nm.conv2d(img, k, padding="reflect"))


def edge_loss(i_f: Tensor, i_ir: Tensor, i_vis: Tensor) -> Tensor:
    """Mean L1 distance between edge magnitudes and the stronger source edge."""
    _check_triple(i_f, i_ir, i_vis)
    target = nm.maximum(_laplacian_mag(i_ir), _laplacian_mag(i_vis))
    return nm.absolute(_laplacian_mag(i_f) - target).mean()


def _gaussian_window(size: int, sigma: float, dtype) -> np.ndarray:
    half = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return (win / win.sum()).astype(dtype)


def _mean_ssim(x: Tensor, y: Tensor, cfg: FusionLossConfig) -> Tensor:
    win = Tensor(
        _gaussian_window(cfg.ssim_window, cfg.ssim_sigma, x.data.dtype).reshape(
            1, 1, cfg.ssim_window, cfg.ssim_window
        )
    )

    def smooth(t: Tensor) -> Tensor:
        return nm.conv2d(t, win, padding="none")

    mu_x = smooth(x)
    mu_y = smooth(y)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    var_x = smooth(x * x) - mu_xx
    var_y = smooth(y * y) - mu_yy
    cov = smooth(x * y) - mu_xy
    c1, c2 = cfg.ssim_c1, cfg.ssim_c2
    num = (mu_xy * 2.0 + c1) * (cov * 2.0 + c2)
    den = (mu_xx + mu_yy + c1) * (var_x + var_y + c2)
    return (num / den).mean()


def ssim_loss(i_f: Tensor, i_ir: Tensor, i_vis: Tensor, cfg: FusionLossConfig | None = None) -> Tensor:
    """(1 - SSIM(fused, ir)) + (1 - SSIM(fused, vis)), valid windows only."""
    cfg = cfg or FusionLossConfig()
    _check_triple(i_f, i_ir, i_vis)
    h, w = i_f.shape[-2], i_f.shape[-1]
    if h < cfg.ssim_window or w < cfg.ssim_window:
        raise ValueError(f"image {h}x{w} smaller than ssim window {cfg.ssim_window}")
    two = _mean_ssim(i_f, i_ir, cfg) + _mean_ssim(i_f, i_vis, cfg)
    return -two + 2.0


def fusion_loss(i_f: Tensor, i_ir: Tensor, i_vis: Tensor, cfg: FusionLossConfig | None = None):
    """Weighted sum of the three image objectives, with the breakdown."""
    cfg = cfg or FusionLossConfig()
    l_int = intensity_loss(i_f, i_ir, i_vis)
    l_edge = edge_loss(i_f, i_ir, i_vis)
    l_ssim = ssim_loss(i_f, i_ir, i_vis, cfg)
    total = l_int * cfg.alpha1 + l_edge * cfg.alpha2 + l_ssim * cfg.alpha3
    return total, {"L_int": l_int, "L_edge": l_edge, "L_ssim": l_ssim}


def focal_loss(probs: Tensor, labels: np.ndarray, cfg: FocalConfig | None = None) -> Tensor:
    """Class-weighted focal BCE over independent binary labels.

    ``standard`` form modulates by (1 - p_true)^gamma where p_true is the
    predicted probability of the observed label; ``verbatim`` modulates by
    (1 - p)^gamma regardless of the label.
    """
    cfg = cfg or FocalConfig()
    y = np.asarray(labels, dtype=probs.data.dtype).reshape(-1)
    if probs.ndim != 1 or probs.shape[0] != y.shape[0]:
        raise ValueError(f"probs {probs.shape} vs labels {y.shape}")
    if len(cfg.class_weights) != y.shape[0]:
        raise ValueError("class_weights length does not match label count")
    p = nm.clip(probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    yt = Tensor(y)
    p_true = p * yt + (-p + 1.0) * (-yt + 1.0)
    bce = -nm.log(p_true)
    if cfg.focal_form == "standard":
        mod = (-p_true + 1.0) ** cfg.gamma
    else:
        mod = (-p + 1.0) ** cfg.gamma
    alpha = Tensor(np.asarray(cfg.class_weights, dtype=probs.data.dtype))
    return (alpha * mod * bce).mean()


def class_weights_from_counts(labels: np.ndarray) -> tuple:
    """Per-class weights from a label matrix [n_samples, n_classes].

    Each weight is the negative-class fraction, clamped to [0.05, 0.95],
    so rare positive classes are up-weighted.
    """
    mat = np.asarray(labels, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValueError("expected a non-empty [n_samples, n_classes] matrix")
    neg_frac = 1.0 - mat.mean(axis=0)
    return tuple(np.clip(neg_frac, 0.05, 0.95))


def task_weights(w: Tensor, tau: float = 1.0) -> Tensor:
    """Two balance weights from trainable scalars: softmax of -w/tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if w.shape != (2,):
        raise ValueError("expected exactly two task scalars")
    return nm.softmax_rows((w / -tau).reshape(1, 2)).reshape(2)


def total_loss(trace, sample, params, cfg: LossConfig, multitask: bool = True):
    """Combined objective and its logging breakdown.

    With ``multitask`` false the balance is pinned to (1, 0) and the
    classification branch is not evaluated at all.
    """
    l_fus, parts = fusion_loss(trace.fused, sample.ir, sample.vi_y, cfg.fusion)
    w = params["task.w"]
    if multitask:
        lam = task_weights(w, cfg.tau)
        lam1, lam2 = lam[0], lam[1]
        l_cla = focal_loss(trace.probs, sample.label, cfg.focal)
        total = lam1 * l_fus + lam2 * l_cla
        l_cla_val = float(l_cla.data)
        lam1_val, lam2_val = float(lam1.data), float(lam2.data)
    else:
        total = l_fus
        l_cla_val = 0.0
        lam1_val, lam2_val = 1.0, 0.0
    breakdown = {
        "L_total": float(total.data),
        "L_fus": float(l_fus.data),
        "L_int": float(parts["L_int"].data),
        "L_edge": float(parts["L_edge"].data),
        "L_ssim": float(parts["L_ssim"].data),
        "L_cla": l_cla_val,
        "lambda1": lam1_val,
        "lambda2": lam2_val,
        "w1": float(w.data[0]),
        "w2": float(w.data[1]),
    }
    return total, breakdown
