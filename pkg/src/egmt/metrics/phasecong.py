"""Phase congruency maps via a log-Gabor filter bank.

Frequency-domain implementation over the full FFT grid: a radial
log-Gabor profile per scale times a Gaussian angular spread per
orientation.  The angular window covers a single half-plane, so each
filtered response is an analytic-like complex signal whose real and
imaginary parts are the even and odd components.  Phase congruency per
orientation follows the standard energy formulation

    PC_o = sum_s (e_s me + o_s mo - |e_s mo - o_s me|) / (sum_s A_s + eps)

with (me, mo) the unit mean phase vector.  No noise-threshold
subtraction is applied, keeping the map a deterministic function of the
image alone; a constant image has zero amplitude everywhere and maps to
exactly zero.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PhaseCongConfig", "pc_map", "pc_orientation_maps", "pc_moments"]

_EPS = 1e-4


class PhaseCongConfig:
    """Filter bank geometry; defaults give 4 scales x 4 orientations."""

    def __init__(
        self,
        scales: int = 4,
        orientations: int = 4,
        min_wavelength: float = 3.0,
        mult: float = 2.1,
        sigma_onf: float = 0.55,
        d_theta_on_sigma: float = 1.5,
    ):
        if scales < 1 or orientations < 1:
            raise ValueError("need at least one scale and one orientation")
        self.scales = scales
        self.orientations = orientations
        self.min_wavelength = min_wavelength
        self.mult = mult
        self.sigma_onf = sigma_onf
        self.d_theta_on_sigma = d_theta_on_sigma


def _frequency_grid(h: int, w: int):
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    radius[0, 0] = 1.0  # avoid log(0) at DC; the filter is zeroed there anyway
    theta = np.arctan2(-fy, fx)
    return radius, theta


def _lowpass(h: int, w: int, cutoff: float = 0.45, order: int = 15) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.sqrt(fx * fx + fy * fy)
    return 1.0 / (1.0 + (r / cutoff) ** (2 * order))


def _bank(h: int, w: int, cfg: PhaseCongConfig) -> list[list[np.ndarray]]:
    """filters[o][s]: frequency-domain filter, real-valued."""
    radius, theta = _frequency_grid(h, w)
    lp = _lowpass(h, w)
    radials = []
    for s in range(cfg.scales):
        wavelength = cfg.min_wavelength * cfg.mult**s
        f0 = 1.0 / wavelength
        g = np.exp(-(np.log(radius / f0) ** 2) / (2.0 * np.log(cfg.sigma_onf) ** 2))
        g *= lp
        g[0, 0] = 0.0
        radials.append(g)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    theta_sigma = np.pi / cfg.orientations / cfg.d_theta_on_sigma
    filters = []
    for o in range(cfg.orientations):
        angle = o * np.pi / cfg.orientations
        # angular distance on the circle, one half-plane only
        ds = sin_t * np.cos(angle) - cos_t * np.sin(angle)
        dc = cos_t * np.cos(angle) + sin_t * np.sin(angle)
        dtheta = np.abs(np.arctan2(ds, dc))
        spread = np.exp(-(dtheta**2) / (2.0 * theta_sigma**2))
        filters.append([spread * radial for radial in radials])
    return filters


def pc_orientation_maps(img: np.ndarray, cfg: PhaseCongConfig | None = None):
    """Per-orientation phase congruency maps plus the combined map.

    Returns (pc_total [H,W], [pc_o ...], angles).  The combined map is
    total energy over total amplitude, both summed across orientations.
    """
    cfg = cfg or PhaseCongConfig()
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("phase congruency expects a single [H, W] channel")
    h, w = img.shape
    spectrum = np.fft.fft2(img)
    energy_total = np.zeros((h, w))
    amplitude_total = np.zeros((h, w))
    per_orientation = []
    angles = []
    for o, scale_filters in enumerate(_bank(h, w, cfg)):
        evens, odds, amps = [], [], []
        for filt in scale_filters:
            response = np.fft.ifft2(spectrum * filt)
            evens.append(response.real)
            odds.append(response.imag)
            amps.append(np.abs(response))
        sum_e = np.sum(evens, axis=0)
        sum_o = np.sum(odds, axis=0)
        sum_a = np.sum(amps, axis=0)
        norm = np.sqrt(sum_e**2 + sum_o**2) + _EPS
        me, mo = sum_e / norm, sum_o / norm
        energy = np.zeros((h, w))
        for e, od in zip(evens, odds):
            energy += e * me + od * mo - np.abs(e * mo - od * me)
        energy = np.maximum(energy, 0.0)
        per_orientation.append(energy / (sum_a + _EPS))
        energy_total += energy
        amplitude_total += sum_a
        angles.append(o * np.pi / cfg.orientations)
    pc_total = energy_total / (amplitude_total + _EPS)
    return pc_total, per_orientation, angles


def pc_map(img: np.ndarray, cfg: PhaseCongConfig | None = None) -> np.ndarray:
    return pc_orientation_maps(img, cfg)[0]


def pc_moments(img: np.ndarray, cfg: PhaseCongConfig | None = None):
    """Maximum and minimum moment maps of the orientation-wise PC.

    The classical covariance construction: with PC_o the map at angle
    t_o, a = sum (PC_o cos t_o)^2, c = sum (PC_o sin t_o)^2 and
    b = 2 sum (PC_o cos t_o)(PC_o sin t_o), the principal moments are
    (c + a +- sqrt(b^2 + (a - c)^2)) / 2.
    """
    _, maps, angles = pc_orientation_maps(img, cfg)
    a = np.zeros_like(maps[0])
    b = np.zeros_like(maps[0])
    c = np.zeros_like(maps[0])
    for pc_o, angle in zip(maps, angles):
        pcc = pc_o * np.cos(angle)
        pcs = pc_o * np.sin(angle)
        a += pcc * pcc
        b += 2.0 * pcc * pcs
        c += pcs * pcs
    root = np.sqrt(b * b + (a - c) ** 2)
    moment_max = (c + a + root) / 2.0
    moment_min = (c + a - root) / 2.0
    return moment_max, moment_min
