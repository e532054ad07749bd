"""Consensus-regularized mixture of cross-modal SSM experts with noisy top-k gating.

Routing is per image from globally pooled features. In training every expert
runs (so the diversity and consensus losses see all of them) but only the
top-k carry weight; at inference only the selected experts execute.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .mafe import conv_weight, from_tokens, to_tokens
from .numerics import (Module, Parameter, Tensor, amax, as_tensor, concat, conv2d, layer_norm,
                       matmul, silu, softmax, softplus, sqrt, stack, tsum)
from .scan import cross_modal_interleave, spatial_raster
from .ssm import BiSsm


@dataclass
class GateDecision:
    weights: Tensor          # [N], on the simplex, exactly k nonzeros
    selected: tuple[int, ...]
    logits: np.ndarray       # clean logits F_g . W_g
    noise: np.ndarray        # realised noise term added to the logits

    @property
    def weight_values(self) -> np.ndarray:
        return self.weights.data.copy()


class CmExpert(Module):
    """One cross-modal SSM expert mapping two ``in_width`` maps to ``width`` channels."""

    def __init__(self, in_width: int, width: int, state: int, rng: np.random.Generator,
                 bidirectional: bool = True):
        self.in_width, self.width = in_width, width
        for m in (1, 2):
            setattr(self, f"ln{m}_g", Parameter(np.ones(in_width)))
            setattr(self, f"ln{m}_b", Parameter(np.zeros(in_width)))
            setattr(self, f"lin{m}_w", Parameter(conv_weight(rng, width, in_width, 1)))
            setattr(self, f"lin{m}_b", Parameter(np.zeros(width)))
            setattr(self, f"conv{m}_w", Parameter(conv_weight(rng, width, width, 1)))
            setattr(self, f"conv{m}_b", Parameter(np.zeros(width)))
        self.ssm = BiSsm(width, state, rng, bidirectional)

    def make_symmetric(self) -> None:
        """Copy every modality-1 weight onto its modality-2 twin."""
        for stem in ("ln{}_g", "ln{}_b", "lin{}_w", "lin{}_b", "conv{}_w", "conv{}_b"):
            getattr(self, stem.format(2)).assign(getattr(self, stem.format(1)).data)

    def __call__(self, f_m1, f_m2) -> Tensor:
        return cm_expert(f_m1, f_m2, self)


def cm_scan(first: Tensor, second: Tensor, ssm: BiSsm, H: int, W: int) -> Tensor:
    """Scan the token-level interleaving of two modalities; return the first one's tokens."""
    n = first.shape[0]
    order = cross_modal_interleave(spatial_raster(H, W), spatial_raster(H, W))
    return ssm(concat([first, second], axis=0), order)[:n]


def cm_expert(f_m1, f_m2, e: CmExpert) -> Tensor:
    f_m1, f_m2 = as_tensor(f_m1), as_tensor(f_m2)
    if f_m1.shape != f_m2.shape:
        raise ValueError(f"modality features differ in shape: {f_m1.shape} vs {f_m2.shape}")
    _, H, W = f_m1.shape
    ln1 = conv2d(layer_norm(f_m1, e.ln1_g, e.ln1_b), e.lin1_w, "pointwise-1x1", e.lin1_b)
    ln2 = conv2d(layer_norm(f_m2, e.ln2_g, e.ln2_b), e.lin2_w, "pointwise-1x1", e.lin2_b)
    t1 = to_tokens(silu(conv2d(ln1, e.conv1_w, "pointwise-1x1", e.conv1_b)))
    t2 = to_tokens(silu(conv2d(ln2, e.conv2_w, "pointwise-1x1", e.conv2_b)))
    cm1 = from_tokens(cm_scan(t1, t2, e.ssm, H, W), H, W)
    cm2 = from_tokens(cm_scan(t2, t1, e.ssm, H, W), H, W)
    return cm1 * silu(ln2) + cm2 * silu(ln1)


class MccmState(Module):
    def __init__(self, in_width: int, width: int, state: int = 8, experts: int = 4, top_k: int = 2,
                 rng: np.random.Generator | None = None, bidirectional: bool = True,
                 horizon: int = 1):
        if not 1 <= top_k <= experts:
            raise ValueError(f"top-k must satisfy 1 <= k <= N, got k={top_k}, N={experts}")
        if horizon < 1:
            raise ValueError("epoch horizon T must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.top_k = top_k
        self.experts = [CmExpert(in_width, width, state, rng, bidirectional) for _ in range(experts)]
        gate_in = 2 * in_width
        # zero gate weights: early routing is decided by the noise alone
        self.W_g = Parameter(np.zeros((gate_in, experts)))
        self.W_noise = Parameter(np.zeros((gate_in, experts)))
        self.epoch = 0
        self.horizon = horizon

    @property
    def n_experts(self) -> int:
        return len(self.experts)


def top_k_indices(scores: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest scores; ties go to the lower index."""
    return tuple(sorted(np.argsort(-scores, kind="stable")[:k].tolist()))


def gate(f_mc, state: MccmState, rng: np.random.Generator | None, mode: str = "train") -> GateDecision:
    f_mc = as_tensor(f_mc)
    f_g = f_mc.mean(axis=(1, 2)) + amax(f_mc, axis=(1, 2))
    clean = matmul(f_g, state.W_g)
    if mode == "train":
        if rng is None:
            raise ValueError("train-mode gating needs an rng for the noise draw")
        n = rng.standard_normal(state.n_experts)
        noise = softplus(matmul(f_g, state.W_noise)) * n
        logits = clean + noise
    elif mode == "infer":
        noise = Tensor(np.zeros(state.n_experts))
        logits = clean
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    selected = top_k_indices(logits.data, state.top_k)
    mask = np.zeros(state.n_experts)
    mask[list(selected)] = 1.0
    return GateDecision(softmax(logits, mask), selected, clean.data.copy(), noise.data.copy())


def mix_experts(weights: Tensor, outputs: list, indices) -> Tensor:
    total = None
    for i in indices:
        term = weights[i] * outputs[i]
        total = term if total is None else total + term
    return total


def mccm_forward(f_m1, f_m2, state: MccmState, rng: np.random.Generator | None, mode: str = "train",
                 decision: GateDecision | None = None):
    """Returns ``(F_mf, decision, expert_outputs)``; unexecuted experts are ``None``.

    ``decision`` overrides the gate (ablations and tests).
    """
    f_m1, f_m2 = as_tensor(f_m1), as_tensor(f_m2)
    if decision is None:
        decision = gate(concat([f_m1, f_m2], axis=0), state, rng, mode)
    if mode == "train":
        run = range(state.n_experts)
    else:
        run = decision.selected
    outputs = [None] * state.n_experts
    for i in run:
        outputs[i] = state.experts[i](f_m1, f_m2)
    # unselected experts have weight exactly 0, so the two modes agree bit-for-bit
    f_mf = mix_experts(decision.weights, outputs, run)
    return f_mf, decision, outputs


# ------------------------------------------------------------------- losses


def loss_wb(weights) -> Tensor:
    """Squared coefficient of variation of the expert weights (population std)."""
    w = as_tensor(weights)
    mu = w.mean()
    var = ((w - mu) ** 2).mean()
    return var / (mu * mu)


def loss_div(outputs: list) -> Tensor:
    """Mean pairwise cosine similarity over ordered pairs; zero vectors have cosine 0."""
    n = len(outputs)
    if n < 2:
        return Tensor(0.0)
    X = stack([as_tensor(o).reshape(-1) for o in outputs])
    gram = matmul(X, X.T)
    sq = np.diag(gram.data)
    live = sq > 0
    norms = sqrt(tsum(X * X, axis=1) + np.where(live, 0.0, 1.0))
    cosine = gram / (norms.reshape(n, 1) * norms.reshape(1, n))
    off = 1.0 - np.eye(n)
    return (cosine * off).sum() / (n * (n - 1))


def loss_cons(outputs: list, weights) -> Tensor:
    """Weight-averaged squared deviation (element mean) from the weighted consensus."""
    w = as_tensor(weights)
    idx = range(len(outputs))
    consensus = mix_experts(w, outputs, idx)
    total = None
    for i in idx:
        term = w[i] * ((outputs[i] - consensus) ** 2).mean()
        total = term if total is None else total + term
    return total


def diversity_weight(t: float, T: float) -> float:
    """lambda(t) = cos(t/T * pi/2); 1 at the start, 0 at the horizon."""
    if T <= 0:
        raise ValueError("horizon T must be positive")
    if t > T:
        warnings.warn(f"epoch {t} beyond horizon {T}; clamped", stacklevel=2)
        t = T
    if t < 0:
        raise ValueError(f"epoch must be non-negative, got {t}")
    if t == T:
        return 0.0
    return math.cos(t / T * math.pi / 2)


def combine_mccm(wb, div, cons, t: float, T: float) -> Tensor:
    lam = diversity_weight(t, T)
    return as_tensor(wb) + lam * as_tensor(div) + (1.0 - lam) * as_tensor(cons)


def loss_mccm(weights, outputs: list, t: float, T: float) -> Tensor:
    return combine_mccm(loss_wb(weights), loss_div(outputs), loss_cons(outputs, weights), t, T)
