"""Modality-agnostic feature enhancement block.

Shallow stem, then three parallel views of the stem features concatenated on
channels: a gated local branch (width C), a spatial-channel SSM branch (C/2)
and a frequency-domain SSM branch (C/2). Output width is 2C.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import (Module, Parameter, Tensor, amp_phase, as_tensor, concat, conv2d, fft2,
                       gelu, hermitian_part, ifft2, layer_norm, recompose, silu, softplus)
from .scan import channel_order, frequency_rotational, spatial_raster
from .ssm import BiSsm

POOL_GRID = 2  # channel-pass descriptors are means over a POOL_GRID x POOL_GRID grid


def conv_weight(rng: np.random.Generator, out_ch: int, in_ch: int, k: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(in_ch * k * k)
    return rng.uniform(-bound, bound, (out_ch, in_ch, k, k))


def to_tokens(x: Tensor) -> Tensor:
    """[C, H, W] -> [H*W, C], pixels in row-major order."""
    C = x.shape[0]
    return x.reshape(C, -1).T


def from_tokens(t: Tensor, H: int, W: int) -> Tensor:
    return t.T.reshape(t.shape[1], H, W)


def tokenize_quadrants(x: Tensor) -> Tensor:
    """[C, H, W] -> [4, C, H/2, W/2]; quadrant order TL, TR, BL, BR."""
    C, H, W = x.shape
    return x.reshape(C, 2, H // 2, 2, W // 2).transpose(1, 3, 0, 2, 4).reshape(4, C, H // 2, W // 2)


def merge_quadrants(q: Tensor) -> Tensor:
    _, C, h, w = q.shape
    return q.reshape(2, 2, C, h, w).transpose(2, 0, 3, 1, 4).reshape(C, 2 * h, 2 * w)


def check_even(H: int, W: int) -> None:
    if H % 2 or W % 2:
        raise ValueError(f"spatial extent {H}x{W} must be even; resize or crop to "
                         f"{H - H % 2}x{W - W % 2}")


class Stem(Module):
    """3x3 convolution followed by channel layer norm."""

    def __init__(self, in_ch: int, width: int, rng: np.random.Generator):
        self.in_ch, self.width = in_ch, width
        self.w = Parameter(conv_weight(rng, width, in_ch, 3))
        self.b = Parameter(np.zeros(width))
        self.ln_g = Parameter(np.ones(width))
        self.ln_b = Parameter(np.zeros(width))

    def __call__(self, image) -> Tensor:
        image = as_tensor(image)
        if image.ndim != 3 or image.shape[0] != self.in_ch:
            raise ValueError(f"stem expects [{self.in_ch}, H, W] input, got {image.shape}")
        check_even(*image.shape[1:])
        x = conv2d(image, self.w, "full-3x3", self.b)
        return layer_norm(x, self.ln_g, self.ln_b, axis=0)


class MafeBlock(Module):
    def __init__(self, in_ch: int, width: int, state: int = 8, rng: np.random.Generator | None = None,
                 bidirectional: bool = True):
        if width % 2:
            raise ValueError(f"MAFE width must be even, got {width}")
        rng = rng or np.random.default_rng(0)
        C, half = width, width // 2
        self.in_ch, self.width = in_ch, width
        self.stem = Stem(in_ch, C, rng)
        # local branch
        self.local_dw = Parameter(conv_weight(rng, C, 1, 3))
        self.local_dw_b = Parameter(np.zeros(C))
        self.gate_w = Parameter(conv_weight(rng, C, C, 1))
        self.gate_b = Parameter(np.zeros(C))
        # spatial-channel branch
        self.spa_proj = Parameter(conv_weight(rng, half, C, 1))
        self.spa_dw = Parameter(conv_weight(rng, half, 1, 3))
        self.spa_ssm = BiSsm(half, state, rng, bidirectional)
        self.chan_ssm = BiSsm(POOL_GRID * POOL_GRID, state, rng, bidirectional)
        self.spa_ln_g = Parameter(np.ones(half))
        self.spa_ln_b = Parameter(np.zeros(half))
        # frequency branch
        self.fre_proj = Parameter(conv_weight(rng, half, C, 1))
        self.amp_dw = Parameter(conv_weight(rng, half, 1, 3))
        self.pha_dw = Parameter(conv_weight(rng, half, 1, 3))
        self.amp_ssm = BiSsm(half, state, rng, bidirectional)
        self.pha_ssm = BiSsm(half, state, rng, bidirectional)

    @property
    def out_width(self) -> int:
        return 2 * self.width

    def __call__(self, image) -> Tensor:
        return mafe_forward(image, self)


def shallow_stem(image, p: MafeBlock | Stem) -> Tensor:
    return (p.stem if isinstance(p, MafeBlock) else p)(image)


def local_branch(f_sk, p: MafeBlock) -> Tensor:
    f_sk = as_tensor(f_sk)
    check_even(*f_sk.shape[1:])
    patches = tokenize_quadrants(f_sk)
    d = conv2d(patches, p.local_dw, "depthwise-3x3", p.local_dw_b)
    gate = gelu(conv2d(d, p.gate_w, "pointwise-1x1", p.gate_b))
    return merge_quadrants(gate * d)


def channel_pass(u: Tensor, ssm: BiSsm) -> Tensor:
    """Scan along channels over pooled per-channel descriptors; broadcast back over space."""
    C, H, W = u.shape
    g = POOL_GRID
    desc = u.reshape(C, g, H // g, g, W // g).mean(axis=(2, 4)).reshape(C, g * g)
    out = ssm(desc, channel_order(C))
    ones = np.ones((1, 1, H // g, 1, W // g))
    return (out.reshape(C, g, 1, g, 1) * ones).reshape(C, H, W)


def global_spatial(f_sk, p: MafeBlock) -> Tensor:
    f_sk = as_tensor(f_sk)
    _, H, W = f_sk.shape
    proj = conv2d(f_sk, p.spa_proj, "pointwise-1x1")
    u = silu(conv2d(proj, p.spa_dw, "depthwise-3x3"))
    spatial = from_tokens(p.spa_ssm(to_tokens(u), spatial_raster(H, W)), H, W)
    sc = spatial + channel_pass(u, p.chan_ssm)
    return layer_norm(sc, p.spa_ln_g, p.spa_ln_b, axis=0) * silu(proj)


def spectral_synthesis(amp, phase) -> Tensor:
    """Real image from amplitude and phase maps (inverse DFT of the Hermitian part)."""
    return ifft2(hermitian_part(recompose(amp, phase)), max_imag=1e-9)


def frequency_scan(spec_map: Tensor, kernel: Parameter, ssm: BiSsm) -> Tensor:
    C, H, W = spec_map.shape
    u = silu(conv2d(spec_map, kernel, "depthwise-3x3"))
    return from_tokens(ssm(to_tokens(u), frequency_rotational(H, W)), H, W)


def global_frequency(f_sk, p: MafeBlock) -> Tensor:
    f_sk = as_tensor(f_sk)
    _, H, W = f_sk.shape
    # amplitudes are scanned in orthonormal units so their size does not grow with H*W
    scale = math.sqrt(H * W)
    proj = conv2d(f_sk, p.fre_proj, "pointwise-1x1")
    amp, phase = amp_phase(fft2(proj))
    amp_s = softplus(frequency_scan(amp / scale, p.amp_dw, p.amp_ssm)) * scale
    phase_s = frequency_scan(phase, p.pha_dw, p.pha_ssm)
    return spectral_synthesis(amp_s, phase_s) * silu(proj)


def mafe_forward(image, p: MafeBlock) -> Tensor:
    f_sk = shallow_stem(image, p)
    return concat([local_branch(f_sk, p), global_spatial(f_sk, p), global_frequency(f_sk, p)], axis=0)
