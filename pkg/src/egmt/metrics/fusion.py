"""Reference-free fusion quality metrics.

Every function takes [H, W] float arrays in [0, 1] and returns a plain
float.  The source pair enters symmetrically wherever the metric
definition allows it.  The underlying formulations are pinned, with
constants, in each docstring; none of them involve randomness, so all
values are exactly reproducible.
"""

from __future__ import annotations

import numpy as np

from .phasecong import PhaseCongConfig, pc_map, pc_moments

__all__ = [
    "mi",
    "mi_pair",
    "psnr",
    "psnr_fusion",
    "ssim_pair",
    "ssim_metric",
    "qabf",
    "nabf",
    "ncie",
    "pc_metric",
    "fmi_w",
    "FUSION_METRICS",
]

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def _as_image(x) -> np.ndarray:
    arr = np.asarray(getattr(x, "data", x), dtype=np.float64)
    arr = arr.reshape(arr.shape[-2], arr.shape[-1])
    return arr


# ---------------------------------------------------------------------------
# mutual information


def _hist2d(a: np.ndarray, b: np.ndarray, bins: int) -> np.ndarray:
    joint, _, _ = np.histogram2d(
        a.reshape(-1), b.reshape(-1), bins=bins, range=[[0.0, 1.0], [0.0, 1.0]]
    )
    return joint / joint.sum()


def mi_pair(a, b, bins: int = 256) -> float:
    """Histogram mutual information in bits between two images."""
    p_ab = _hist2d(_as_image(a), _as_image(b), bins)
    p_a = p_ab.sum(axis=1)
    p_b = p_ab.sum(axis=0)
    nz = p_ab > 0
    denom = np.outer(p_a, p_b)[nz]
    return float(np.sum(p_ab[nz] * np.log2(p_ab[nz] / denom)))


def mi(fused, ir, vis, bins: int = 256) -> float:
    """MI(fused; ir) + MI(fused; vis)."""
    return mi_pair(fused, ir, bins) + mi_pair(fused, vis, bins)


# ---------------------------------------------------------------------------
# psnr


PSNR_SENTINEL = 100.0


def psnr(fused, ref) -> float:
    """10 log10(1 / MSE) for unit range; identical inputs hit the sentinel."""
    f, r = _as_image(fused), _as_image(ref)
    mse = float(np.mean((f - r) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return min(PSNR_SENTINEL, 10.0 * np.log10(1.0 / mse))


def psnr_fusion(fused, ir, vis) -> float:
    return 0.5 * (psnr(fused, ir) + psnr(fused, vis))


# ---------------------------------------------------------------------------
# ssim


def ssim_pair(a, b) -> float:
    """Mean SSIM with the shared 11x11 Gaussian kernel."""
    from ..losses import FusionLossConfig, _mean_ssim
    from ..numerics import Tensor

    ta = Tensor(_as_image(a)[None])
    tb = Tensor(_as_image(b)[None])
    return float(_mean_ssim(ta, tb, FusionLossConfig()).data)


def ssim_metric(fused, ir, vis) -> float:
    return 0.5 * (ssim_pair(fused, ir) + ssim_pair(fused, vis))


# ---------------------------------------------------------------------------
# gradient preservation (edge transfer) family


def _sobel(img: np.ndarray):
    padded = np.pad(img, 1, mode="symmetric")
    h, w = img.shape
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            window = padded[dy : dy + h, dx : dx + w]
            gx += _SOBEL_X[dy, dx] * window
            gy += _SOBEL_Y[dy, dx] * window
    return gx, gy


def _edge_model(img: np.ndarray):
    gx, gy = _sobel(img)
    strength = np.sqrt(gx * gx + gy * gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.arctan(gy / gx)
    alpha = np.nan_to_num(alpha, nan=0.0)
    return strength, alpha


def _perceptual_quality(
    g_src: np.ndarray,
    a_src: np.ndarray,
    g_f: np.ndarray,
    a_f: np.ndarray,
    kappa_g: float,
    sigma_g: float,
    kappa_a: float,
    sigma_a: float,
) -> np.ndarray:
    num = np.minimum(g_src, g_f)
    den = np.maximum(g_src, g_f)
    rel_strength = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    rel_orientation = 1.0 - np.abs(a_src - a_f) / (np.pi / 2.0)
    q_g = 1.0 / (1.0 + np.exp(kappa_g * (rel_strength - sigma_g)))
    q_a = 1.0 / (1.0 + np.exp(kappa_a * (rel_orientation - sigma_a)))
    return q_g * q_a


def _edge_preservation(fused, ir, vis):
    f = _as_image(fused)
    a = _as_image(ir)
    b = _as_image(vis)
    if min(f.shape) < 3:
        raise ValueError("edge metrics need extents of at least 3")
    g_f, al_f = _edge_model(f)
    g_a, al_a = _edge_model(a)
    g_b, al_b = _edge_model(b)
    kwargs = dict(kappa_g=-10.0, sigma_g=0.5, kappa_a=-20.0, sigma_a=0.75)
    q_af = _perceptual_quality(g_a, al_a, g_f, al_f, **kwargs)
    q_bf = _perceptual_quality(g_b, al_b, g_f, al_f, **kwargs)
    return q_af, q_bf, g_a, g_b, g_f


def qabf(fused, ir, vis) -> float:
    """Edge information preservation, sigmoid model on Sobel strength and
    orientation: kappa_g=-10, sigma_g=0.5, kappa_a=-20, sigma_a=0.75,
    unit overall gain, weights = source edge strength.
    """
    q_af, q_bf, g_a, g_b, _ = _edge_preservation(fused, ir, vis)
    weight_sum = float(np.sum(g_a + g_b))
    if weight_sum == 0.0:
        return 0.0
    return float(np.sum(q_af * g_a + q_bf * g_b) / weight_sum)


def nabf(fused, ir, vis) -> float:
    """Fusion artifact measure: complementary quality mass at locations
    where the fused edge is stronger than both source edges.
    """
    q_af, q_bf, g_a, g_b, g_f = _edge_preservation(fused, ir, vis)
    artifacts = (g_f > g_a) & (g_f > g_b)
    weight_sum = float(np.sum(g_a + g_b))
    if weight_sum == 0.0:
        return 0.0
    penalty = artifacts * ((1.0 - q_af) * g_a + (1.0 - q_bf) * g_b)
    return float(np.sum(penalty) / weight_sum)


# ---------------------------------------------------------------------------
# nonlinear correlation information entropy


def _rank_bins(img: np.ndarray, bins: int) -> np.ndarray:
    flat = img.reshape(-1)
    order = np.argsort(flat, kind="stable")
    ranks = np.empty_like(order)
    ranks[order] = np.arange(flat.size)
    return (ranks * bins) // flat.size


def _ncc_pair(bins_a: np.ndarray, bins_b: np.ndarray, bins: int) -> float:
    joint = np.zeros((bins, bins))
    np.add.at(joint, (bins_a, bins_b), 1.0)
    joint /= joint.sum()
    nz = joint > 0
    h_joint = -float(np.sum(joint[nz] * np.log(joint[nz]))) / np.log(bins)
    # rank marginals are only approximately uniform when the pixel count
    # is not a bin multiple; the cap keeps identical pairs at exactly 1
    return min(1.0, 2.0 - h_joint)


def ncie(fused, ir, vis, bins: int = 256) -> float:
    """Joint-entropy correlation over rank-transformed intensities.

    Each image's pixels are replaced by their ranks (uniform marginals),
    binned to ``bins`` levels; the pairwise nonlinear correlation is
    2 - H_joint with base-``bins`` logs, giving a 3x3 matrix with unit
    diagonal whose eigenvalue spectrum summarizes the triple:

        NCIE = 1 + sum_i (l_i / 3) log_bins (l_i / 3)

    Three identical images give 1; independent images approach the
    uniform-spectrum floor 1 - log_bins(3).
    """
    imgs = [_as_image(x) for x in (ir, vis, fused)]
    bins = min(bins, imgs[0].size)
    ranked = [_rank_bins(x, bins) for x in imgs]
    r = np.eye(3)
    for i in range(3):
        for j in range(i + 1, 3):
            r[i, j] = r[j, i] = _ncc_pair(ranked[i], ranked[j], bins)
    eigenvalues = np.linalg.eigvalsh(r)
    value = 1.0
    for lam in eigenvalues:
        share = lam / 3.0
        if share > 0:
            value += share * np.log(share) / np.log(bins)
    return float(value)


# ---------------------------------------------------------------------------
# phase congruency preservation


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a.reshape(-1) - a.mean()
    b = b.reshape(-1) - b.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denom == 0.0:
        return 0.0
    return float(np.sum(a * b) / denom)


def pc_metric(fused, ir, vis, cfg: PhaseCongConfig | None = None) -> float:
    """Product of correlations between fused and composite source maps:
    the phase congruency map and both principal moment maps, each
    correlated against the pixelwise maximum over the two sources and
    clamped at zero.  Perfect preservation of all three maps gives 1; a
    featureless fused image gives 0.
    """
    f_pc = pc_map(_as_image(fused), cfg)
    a_pc = pc_map(_as_image(ir), cfg)
    b_pc = pc_map(_as_image(vis), cfg)
    f_max, f_min = pc_moments(_as_image(fused), cfg)
    a_max, a_min = pc_moments(_as_image(ir), cfg)
    b_max, b_min = pc_moments(_as_image(vis), cfg)
    p = max(0.0, _corr(f_pc, np.maximum(a_pc, b_pc)))
    m_hi = max(0.0, _corr(f_max, np.maximum(a_max, b_max)))
    m_lo = max(0.0, _corr(f_min, np.maximum(a_min, b_min)))
    return p * m_hi * m_lo


# ---------------------------------------------------------------------------
# wavelet feature mutual information


def _haar_details(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    a = img[0::2, 0::2]
    b = img[0::2, 1::2]
    c = img[1::2, 0::2]
    d = img[1::2, 1::2]
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    # magnitudes: the feature should not depend on detail polarity
    return np.abs(np.concatenate([lh.reshape(-1), hl.reshape(-1), hh.reshape(-1)]))


def _normalize(x: np.ndarray) -> np.ndarray | None:
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return None
    return (x - lo) / (hi - lo)


def _feature_mi(da: np.ndarray, db: np.ndarray, bins: int) -> float:
    a = _normalize(da)
    b = _normalize(db)
    if a is None or b is None:
        return 0.0
    joint, _, _ = np.histogram2d(a, b, bins=bins, range=[[0.0, 1.0], [0.0, 1.0]])
    joint /= joint.sum()
    p_a, p_b = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    info = float(np.sum(joint[nz] * np.log2(joint[nz] / np.outer(p_a, p_b)[nz])))
    h_a = -float(np.sum(p_a[p_a > 0] * np.log2(p_a[p_a > 0])))
    h_b = -float(np.sum(p_b[p_b > 0] * np.log2(p_b[p_b > 0])))
    if h_a + h_b == 0.0:
        return 0.0
    return 2.0 * info / (h_a + h_b)


def fmi_w(fused, ir, vis, bins: int = 256) -> float:
    """Mean normalized mutual information between single-level Haar
    detail coefficients of the fused image and of each source.
    """
    d_f = _haar_details(_as_image(fused))
    d_a = _haar_details(_as_image(ir))
    d_b = _haar_details(_as_image(vis))
    return 0.5 * (_feature_mi(d_f, d_a, bins) + _feature_mi(d_f, d_b, bins))


FUSION_METRICS = {
    "PC": pc_metric,
    "SSIM": ssim_metric,
    "MI": mi,
    "Q_abf": qabf,
    "PSNR": psnr_fusion,
    "FMI_w": fmi_w,
    "N_abf": nabf,
    "NCIE": ncie,
}
