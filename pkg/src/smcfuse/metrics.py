"""Reference-free fusion quality metrics on [0, 1] grayscale images.

F is the fused image, A and B the sources. Multi-channel inputs are reduced
to their channel mean first.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import correlate2d

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11


def _gray(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x.mean(axis=0)
    return x


def entropy(x, bins: int = 256) -> float:
    q = _quantize(_gray(x), bins)
    p = np.bincount(q.ravel(), minlength=bins) / q.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _quantize(x: np.ndarray, bins: int) -> np.ndarray:
    return np.clip(np.rint(x * (bins - 1)), 0, bins - 1).astype(np.int64)


def mutual_information(x, y, bins: int = 256) -> float:
    """Histogram MI in nats; empty cells contribute 0."""
    qx, qy = _quantize(_gray(x), bins), _quantize(_gray(y), bins)
    joint = np.bincount((qx * bins + qy).ravel(), minlength=bins * bins).reshape(bins, bins)
    pxy = joint / joint.sum()
    px, py = pxy.sum(axis=1), pxy.sum(axis=0)
    nz = pxy > 0
    return float((pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz])).sum())


def metric_mi(f, a, b, bins: int = 256) -> float:
    return mutual_information(f, a, bins) + mutual_information(f, b, bins)


def metric_sf(f) -> float:
    f = _gray(f)
    rf = np.sqrt(np.mean(np.diff(f, axis=1) ** 2)) if f.shape[1] > 1 else 0.0
    cf = np.sqrt(np.mean(np.diff(f, axis=0) ** 2)) if f.shape[0] > 1 else 0.0
    return float(np.hypot(rf, cf))


def metric_ag(f) -> float:
    f = _gray(f)
    dx = f[:-1, 1:] - f[:-1, :-1]
    dy = f[1:, :-1] - f[:-1, :-1]
    return float(np.mean(np.sqrt((dx ** 2 + dy ** 2) / 2)))


def pearson(x, y) -> float:
    """Pearson correlation; 0 when either side has zero variance."""
    x = _gray(x).ravel()
    y = _gray(y).ravel()
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / den if den > 0 else 0.0


def metric_cc(f, a, b) -> float:
    return 0.5 * (pearson(f, a) + pearson(f, b))


def metric_scd(f, a, b) -> float:
    f, a, b = _gray(f), _gray(a), _gray(b)
    return pearson(f - b, a) + pearson(f - a, b)


def _gaussian(size: int = SSIM_WINDOW, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_components(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> tuple[float, float]:
    """Mean SSIM and mean contrast-structure term over valid Gaussian windows."""
    win = _gaussian()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    filt = lambda z: correlate2d(z, win, mode="valid")  # noqa: E731
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def msssim_scales(shape: tuple[int, int], max_scales: int = 5) -> int:
    """Largest scale count whose coarsest level still fits an 11x11 window."""
    side = min(shape)
    if side < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}px on a side, got {shape}")
    k = 1
    while k < max_scales and side // 2 ** k >= SSIM_WINDOW:
        k += 1
    return k


def _downsample(x: np.ndarray) -> np.ndarray:
    H, W = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:H, :W]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def msssim(x, y) -> float:
    """Multi-scale SSIM; exponents are renormalised when fewer than 5 scales fit.

    Negative per-scale terms are clamped to 0 before the fractional powers.
    """
    x, y = _gray(x), _gray(y)
    k = msssim_scales(x.shape)
    w = np.array(MSSSIM_WEIGHTS[:k])
    w = w / w.sum()
    value = 1.0
    for level in range(k):
        s, cs = ssim_components(x, y)
        term = s if level == k - 1 else cs
        value *= max(term, 0.0) ** w[level]
        x, y = _downsample(x), _downsample(y)
    return float(value)


def metric_msssim(f, a, b) -> float:
    return 0.5 * (msssim(f, a) + msssim(f, b))


@dataclass
class MetricReport:
    MI: float
    SF: float
    AG: float
    CC: float
    SCD: float
    MS_SSIM: float
    fused: str = ""
    source_a: str = ""
    source_b: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(f, a, b, names: tuple[str, str, str] = ("", "", "")) -> MetricReport:
    return MetricReport(metric_mi(f, a, b), metric_sf(f), metric_ag(f), metric_cc(f, a, b),
                        metric_scd(f, a, b), metric_msssim(f, a, b), *names)
