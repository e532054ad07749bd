"""Neural-network vocabulary: convolutions, layer norm and activations."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d, correlate2d
from scipy.special import erf, expit

from .tensor import Tensor, as_tensor

CONV_KINDS = ("full-3x3", "depthwise-3x3", "pointwise-1x1")


def _check_kernel(kind: str, k: np.ndarray, channels: int) -> None:
    if kind == "full-3x3":
        ok = k.ndim == 4 and k.shape[1] == channels and k.shape[2:] == (3, 3)
        want = "(out, %d, 3, 3)" % channels
    elif kind == "depthwise-3x3":
        ok = k.shape == (channels, 1, 3, 3)
        want = "(%d, 1, 3, 3)" % channels
    elif kind == "pointwise-1x1":
        ok = k.ndim == 4 and k.shape[1] == channels and k.shape[2:] == (1, 1)
        want = "(out, %d, 1, 1)" % channels
    else:
        raise ValueError(f"unknown conv kind {kind!r}; expected one of {CONV_KINDS}")
    if not ok:
        raise ValueError(f"{kind} kernel of shape {k.shape} does not fit input channels "
                         f"{channels}; expected {want}")


def conv2d(x, kernel, kind: str, bias=None) -> Tensor:
    """Stride-1 2-D cross-correlation with zero padding that keeps H and W.

    ``x`` is ``[C, H, W]`` or batched ``[N, C, H, W]``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim not in (3, 4):
        raise ValueError(f"conv2d expects [C,H,W] or [N,C,H,W] input, got shape {x.shape}")
    xd = x.data if x.ndim == 4 else x.data[None]
    k = kernel.data
    _check_kernel(kind, k, xd.shape[1])
    H, W = xd.shape[2:]

    if kind == "pointwise-1x1":
        w = k[:, :, 0, 0]
        out = np.einsum("oc,nchw->nohw", w, xd)
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (1, 1), (1, 1)))
        if kind == "full-3x3":
            out = np.zeros((xd.shape[0], k.shape[0], H, W))
            for i in range(3):
                for j in range(3):
                    out += np.einsum("oc,nchw->nohw", k[:, :, i, j], xp[:, :, i:i + H, j:j + W])
        else:
            out = np.zeros_like(xd)
            for i in range(3):
                for j in range(3):
                    out += k[None, :, 0, i, j, None, None] * xp[:, :, i:i + H, j:j + W]
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def grad_fn(g):
        g4 = g if x.ndim == 4 else g[None]
        if kind == "pointwise-1x1":
            gx = np.einsum("oc,nohw->nchw", w, g4)
            gk = np.einsum("nohw,nchw->oc", g4, xd)[:, :, None, None]
        else:
            gxp = np.zeros_like(xp)
            gk = np.zeros_like(k)
            for i in range(3):
                for j in range(3):
                    win = xp[:, :, i:i + H, j:j + W]
                    if kind == "full-3x3":
                        gxp[:, :, i:i + H, j:j + W] += np.einsum("oc,nohw->nchw", k[:, :, i, j], g4)
                        gk[:, :, i, j] = np.einsum("nohw,nchw->oc", g4, win)
                    else:
                        gxp[:, :, i:i + H, j:j + W] += k[None, :, 0, i, j, None, None] * g4
                        gk[:, 0, i, j] = np.einsum("nchw,nchw->c", g4, win)
            gx = gxp[:, :, 1:-1, 1:-1]
        grads = [gx if x.ndim == 4 else gx[0], gk]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return grads

    return Tensor(out if x.ndim == 4 else out[0], parents, grad_fn)


def layer_norm(x, gain, offset, axis: int = 0, eps: float = 1e-5) -> Tensor:
    """Normalise along ``axis`` (channels for feature maps), then apply gain/offset."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    x, gain, offset = as_tensor(x), as_tensor(gain), as_tensor(offset)
    axis = axis % x.ndim
    n = x.shape[axis]
    if gain.shape != (n,) or offset.shape != (n,):
        raise ValueError(f"gain/offset must have shape ({n},), got {gain.shape} and {offset.shape}")
    bshape = [1] * x.ndim
    bshape[axis] = n
    g_b, b_b = gain.data.reshape(bshape), offset.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=axis, keepdims=True) + eps)
    xhat = xc * inv
    other = tuple(a for a in range(x.ndim) if a != axis)

    def grad_fn(g):
        gxhat = g * g_b
        gx = inv * (gxhat - gxhat.mean(axis=axis, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=axis, keepdims=True))
        return gx, (g * xhat).sum(axis=other), g.sum(axis=other)

    return Tensor(xhat * g_b + b_b, (x, gain, offset), grad_fn)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return Tensor(s, (x,), lambda g: (g * s * (1.0 - s),))


def silu(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return Tensor(x.data * s, (x,), lambda g: (g * s * (1.0 + x.data * (1.0 - s)),))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    return Tensor(np.logaddexp(0.0, x.data), (x,), lambda g: (g * expit(x.data),))


def gelu(x) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data ** 2) / math.sqrt(2.0 * math.pi)
    return Tensor(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; ``mask`` (0/1, not differentiated) zeroes entries exactly."""
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        z = np.where(mask > 0, z, -np.inf)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return Tensor(p, (x,), grad_fn)


def activation(x, kind: str) -> Tensor:
    table = {"gelu": gelu, "silu": silu, "softplus": softplus, "softmax-lastaxis": softmax,
             "sigmoid": sigmoid}
    if kind not in table:
        raise ValueError(f"unknown activation {kind!r}")
    if kind == "softmax-lastaxis" and as_tensor(x).ndim < 1:
        raise ValueError("softmax needs rank >= 1")
    return table[kind](x)


def filter2d_valid(x, kernel: np.ndarray) -> Tensor:
    """Valid-mode 2-D correlation of each ``[..., H, W]`` plane with a fixed kernel."""
    x = as_tensor(x)
    lead = x.shape[:-2]
    planes = x.data.reshape((-1,) + x.shape[-2:])
    out = np.stack([correlate2d(p, kernel, mode="valid") for p in planes])
    out = out.reshape(lead + out.shape[-2:])

    def grad_fn(g):
        gp = g.reshape((-1,) + g.shape[-2:])
        gx = np.stack([convolve2d(q, kernel, mode="full") for q in gp])
        return (gx.reshape(x.shape),)

    return Tensor(out, (x,), grad_fn)
