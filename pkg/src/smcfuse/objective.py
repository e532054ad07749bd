"""SSIM and intensity losses and the weighted total training objective."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .bscl import loss_fcl, loss_pcl
from .mccm import combine_mccm, loss_cons, loss_div, loss_wb
from .numerics import Tensor, absolute, as_tensor, filter2d_valid

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _luminance(x: Tensor) -> Tensor:
    if x.ndim == 3:
        return x.mean(axis=0)
    return x


def ssim(x, y, data_range: float = 1.0) -> Tensor:
    """Mean SSIM over valid 11x11 Gaussian windows; multi-channel inputs use the channel mean."""
    x, y = _luminance(as_tensor(x)), _luminance(as_tensor(y))
    if x.shape != y.shape:
        raise ValueError(f"ssim inputs differ in shape: {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}px on each side, got {x.shape}")
    win = gaussian_window()
    c1, c2 = (SSIM_K1 * data_range) ** 2, (SSIM_K2 * data_range) ** 2
    mx, my = filter2d_valid(x, win), filter2d_valid(y, win)
    sxx = filter2d_valid(x * x, win) - mx * mx
    syy = filter2d_valid(y * y, win) - my * my
    sxy = filter2d_valid(x * y, win) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return (num / den).mean()


def loss_ssim(i_mf, i_m1, i_m2) -> Tensor:
    return 0.5 * (1.0 - ssim(i_mf, i_m1)) + 0.5 * (1.0 - ssim(i_mf, i_m2))


def loss_int(i_mf, i_m1, i_m2) -> Tensor:
    """Mean absolute deviation from the element-wise brighter source."""
    i_mf, i_m1, i_m2 = map(as_tensor, (i_mf, i_m1, i_m2))
    if not (i_mf.shape == i_m1.shape == i_m2.shape):
        raise ValueError(f"image shapes differ: {i_mf.shape}, {i_m1.shape}, {i_m2.shape}")
    target = np.maximum(i_m1.data, i_m2.data)
    return absolute(i_mf - target).mean()


@dataclass
class LossWeights:
    fcl: float = 0.8
    pcl: float = 0.4
    mccm: float = 1.0
    ssim: float = 1.0
    int: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be non-negative")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.fcl, self.pcl, self.mccm, self.ssim, self.int)


COMPONENTS = ("fcl", "pcl", "mccm", "ssim", "int")


@dataclass
class LossBreakdown:
    total: Tensor
    parts: dict[str, Tensor]

    def values(self) -> dict[str, float]:
        out = {name: t.item() for name, t in self.parts.items()}
        out["total"] = self.total.item()
        return out


def weighted_total(parts: dict[str, Tensor], weights: LossWeights) -> Tensor:
    total = None
    for name in COMPONENTS:
        term = getattr(weights, name) * as_tensor(parts[name])
        total = term if total is None else total + term
    return total


def loss_total(f_mf, f_m1, f_m2, i_mf, i_m1, i_m2, gate_weights, expert_outputs: list,
               t: float, T: float, weights: LossWeights | None = None) -> LossBreakdown:
    """All five weighted terms; ``parts`` also carries the three MCCM sub-terms."""
    weights = weights or LossWeights()
    outputs = [o for o in expert_outputs if o is not None]
    wb, div, cons = loss_wb(gate_weights), loss_div(outputs), loss_cons(outputs, gate_weights)
    parts = {
        "fcl": loss_fcl(f_mf, f_m1, f_m2),
        "pcl": loss_pcl(i_mf, i_m1, i_m2),
        "mccm": combine_mccm(wb, div, cons, t, T),
        "ssim": loss_ssim(i_mf, i_m1, i_m2),
        "int": loss_int(i_mf, i_m1, i_m2),
    }
    total = weighted_total(parts, weights)
    parts.update({"wb": wb, "div": div, "cons": cons})
    return LossBreakdown(total, parts)
