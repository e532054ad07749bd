"""Selective state-space scan with input-dependent discretisation.

Per channel d and state s, visiting tokens in scan order::

    h[t] = exp(delta[t,d] * A[d,s]) * h[t-1] + delta[t,d] * B[t,s] * x[t,d]
    y[t,d] = sum_s C[t,s] * h[t,s] + skip[d] * x[t,d]

with ``delta = softplus(x @ W_delta + b_delta)``, ``B = x @ W_B``,
``C = x @ W_C`` and ``A = -exp(A_log)``. The recurrence itself runs in a
compiled kernel with a hand-written reverse pass; the projections around it
are ordinary graph operations.
"""

from __future__ import annotations

import numba
import numpy as np

from .numerics import Module, Parameter, Tensor, as_tensor, exp, getitem, matmul, softplus
from .scan import ScanOrder, reverse


@numba.njit(cache=True)
def _scan_forward(x, delta, A, B, C, skip):
    L, D = x.shape
    S = A.shape[1]
    hs = np.zeros((L, D, S))
    y = np.zeros((L, D))
    h = np.zeros((D, S))
    for t in range(L):
        for d in range(D):
            dt = delta[t, d]
            xt = x[t, d]
            acc = 0.0
            for s in range(S):
                h[d, s] = np.exp(dt * A[d, s]) * h[d, s] + dt * B[t, s] * xt
                acc += C[t, s] * h[d, s]
            y[t, d] = acc + skip[d] * xt
        hs[t] = h
    return y, hs


@numba.njit(cache=True)
def _scan_backward(gy, x, delta, A, B, C, skip, hs):
    L, D = x.shape
    S = A.shape[1]
    gx = np.zeros((L, D))
    gdelta = np.zeros((L, D))
    gA = np.zeros((D, S))
    gB = np.zeros((L, S))
    gC = np.zeros((L, S))
    gskip = np.zeros(D)
    gh = np.zeros((D, S))
    for t in range(L - 1, -1, -1):
        for d in range(D):
            g = gy[t, d]
            xt = x[t, d]
            dt = delta[t, d]
            gskip[d] += g * xt
            gxt = g * skip[d]
            gdt = 0.0
            for s in range(S):
                gh[d, s] += g * C[t, s]
                gC[t, s] += g * hs[t, d, s]
                a = np.exp(dt * A[d, s])
                hprev = hs[t - 1, d, s] if t > 0 else 0.0
                ga = gh[d, s] * hprev * a
                gdt += ga * A[d, s] + gh[d, s] * B[t, s] * xt
                gA[d, s] += ga * dt
                gB[t, s] += gh[d, s] * dt * xt
                gxt += gh[d, s] * dt * B[t, s]
                gh[d, s] *= a
            gx[t, d] = gxt
            gdelta[t, d] = gdt
    return gx, gdelta, gA, gB, gC, gskip


def scan_recurrence(x, delta, A, B, C, skip) -> Tensor:
    """Run the recurrence over tokens already in visiting order."""
    x, delta, A, B, C, skip = map(as_tensor, (x, delta, A, B, C, skip))
    arrays = [np.ascontiguousarray(t.data) for t in (x, delta, A, B, C, skip)]
    y, hs = _scan_forward(*arrays)

    def grad_fn(g):
        return _scan_backward(np.ascontiguousarray(g), *arrays, hs)

    return Tensor(y, (x, delta, A, B, C, skip), grad_fn)


class SsmParams(Module):
    """One selective-scan kernel for ``dim``-wide tokens and a ``state``-wide hidden state."""

    def __init__(self, dim: int, state: int = 8, rng: np.random.Generator | None = None,
                 init_scale: float = 0.1):
        rng = rng or np.random.default_rng(0)
        self.dim, self.state = dim, state
        self.A_log = Parameter(np.tile(np.log(np.arange(1, state + 1, dtype=float)), (dim, 1)))
        self.W_delta = Parameter(rng.uniform(-init_scale, init_scale, (dim, dim)))
        self.b_delta = Parameter(np.zeros(dim))
        self.W_B = Parameter(rng.uniform(-init_scale, init_scale, (dim, state)))
        self.W_C = Parameter(rng.uniform(-init_scale, init_scale, (dim, state)))
        self.skip = Parameter(np.ones(dim))

    def step_sizes(self, tokens) -> Tensor:
        return softplus(matmul(tokens, self.W_delta) + self.b_delta)


def selective_scan(tokens, params: SsmParams, order: ScanOrder) -> Tensor:
    """Scan ``tokens`` ([L, D]) in ``order``; outputs stay at the tokens' storage positions."""
    tokens = as_tensor(tokens)
    if tokens.ndim != 2 or tokens.shape[1] != params.dim:
        raise ValueError(f"tokens of shape {tokens.shape} do not match SSM width {params.dim}")
    if tokens.shape[0] != order.length:
        raise ValueError(f"{tokens.shape[0]} tokens but scan order has length {order.length}")
    pos = order.positions()
    x = getitem(tokens, pos)
    A = -exp(params.A_log)
    y = scan_recurrence(x, params.step_sizes(x), A, matmul(x, params.W_B),
                        matmul(x, params.W_C), params.skip)
    return getitem(y, np.argsort(pos))


def bidirectional_scan(tokens, params_fwd: SsmParams, params_bwd: SsmParams | None,
                       order: ScanOrder) -> Tensor:
    """Mean of a forward scan and a scan along the reversed order.

    ``params_bwd=None`` gives the single-direction variant.
    """
    fwd = selective_scan(tokens, params_fwd, order)
    if params_bwd is None:
        return fwd
    if (params_bwd.dim, params_bwd.state) != (params_fwd.dim, params_fwd.state):
        raise ValueError("forward and backward SSM parameters must share (dim, state)")
    return 0.5 * (fwd + selective_scan(tokens, params_bwd, reverse(order)))


class BiSsm(Module):
    """A forward/backward pair of SSM kernels (backward omitted when single-direction)."""

    def __init__(self, dim: int, state: int, rng: np.random.Generator, bidirectional: bool = True):
        self.fwd = SsmParams(dim, state, rng)
        self.bwd = SsmParams(dim, state, rng) if bidirectional else None

    def __call__(self, tokens, order: ScanOrder) -> Tensor:
        return bidirectional_scan(tokens, self.fwd, self.bwd, order)
