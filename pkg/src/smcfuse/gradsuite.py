"""Named finite-difference gradient suites: ops, mafe, mccm, bscl, full."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nx
from .bscl import lift_merge, lift_split, loss_fcl, loss_pcl
from .fusenet import FusionConfig, FusionModel, fuse_forward
from .mafe import MafeBlock, global_frequency, global_spatial, local_branch
from .mccm import CmExpert, MccmState, loss_cons, loss_div, loss_mccm, loss_wb, mccm_forward
from .numerics import Parameter, Tensor, grad_check
from .objective import loss_int, loss_ssim, loss_total
from .scan import cross_modal_interleave, frequency_rotational, spatial_raster
from .ssm import SsmParams, bidirectional_scan, selective_scan

SCOPES = ("ops", "mafe", "mccm", "bscl", "full")
TOLERANCE = {"ops": 1e-4, "mafe": 1e-4, "mccm": 1e-4, "bscl": 1e-4, "full": 1e-3}

Case = tuple[str, Callable[[], Tensor], list[Parameter]]


def _param(rng, shape, name, lo=-1.0, hi=1.0) -> Parameter:
    return Parameter(rng.uniform(lo, hi, shape), name)


def _op_cases(seed: int) -> list[Case]:
    rng = np.random.default_rng(seed)
    cases: list[Case] = []

    def add_case(name, build, *params):
        probe = build()
        r = rng.standard_normal(probe.shape)
        cases.append((name, lambda: (build() * r).sum(), list(params)))

    a = _param(rng, (3, 4), "a")
    b = _param(rng, (3, 4), "b")
    row = _param(rng, (4,), "row")
    pos = _param(rng, (3, 4), "pos", 0.5, 2.0)
    add_case("add (broadcast)", lambda: a + row, a, row)
    add_case("sub", lambda: a - b, a, b)
    add_case("mul (broadcast)", lambda: a * row, a, row)
    add_case("div", lambda: a / pos, a, pos)
    add_case("power", lambda: nx.power(pos, 1.7), pos)
    add_case("square", lambda: nx.square(a), a)
    add_case("exp", lambda: nx.exp(a), a)
    add_case("log", lambda: nx.log(pos), pos)
    add_case("sqrt", lambda: nx.sqrt(pos), pos)
    add_case("absolute", lambda: nx.absolute(a), a)
    add_case("cos", lambda: nx.cos(a), a)
    add_case("sin", lambda: nx.sin(a), a)
    add_case("maximum", lambda: nx.maximum(a, b), a, b)
    add_case("sum (axis)", lambda: nx.tsum(a, axis=1), a)
    add_case("mean (keepdims)", lambda: nx.mean(a, axis=0, keepdims=True), a)
    add_case("amax (axis tuple)", lambda: nx.amax(a.reshape(3, 2, 2), axis=(1, 2)), a)
    add_case("reshape", lambda: nx.reshape(a, (2, 6)), a)
    add_case("transpose", lambda: nx.transpose(a), a)
    add_case("getitem (fancy)", lambda: a[np.array([0, 2, 2]), 1:3], a)
    add_case("concat", lambda: nx.concat([a, b], axis=1), a, b)
    add_case("stack", lambda: nx.stack([a, b], axis=0), a, b)
    add_case("broadcast_to", lambda: nx.broadcast_to(row, (3, 4)), row)
    m = _param(rng, (4, 5), "m")
    add_case("matmul", lambda: nx.matmul(a, m), a, m)
    v = _param(rng, (4,), "v")
    add_case("matmul (vector)", lambda: nx.matmul(v, m), v, m)

    img = _param(rng, (3, 6, 6), "img")
    wf = _param(rng, (2, 3, 3, 3), "w_full")
    wd = _param(rng, (3, 1, 3, 3), "w_dw")
    wp = _param(rng, (4, 3, 1, 1), "w_pw")
    bias = _param(rng, (2,), "bias")
    add_case("conv full-3x3", lambda: nx.conv2d(img, wf, "full-3x3", bias), img, wf, bias)
    add_case("conv depthwise-3x3", lambda: nx.conv2d(img, wd, "depthwise-3x3"), img, wd)
    add_case("conv pointwise-1x1", lambda: nx.conv2d(img, wp, "pointwise-1x1"), img, wp)
    g = _param(rng, (3,), "gain")
    o = _param(rng, (3,), "offset")
    add_case("layer_norm", lambda: nx.layer_norm(img, g, o, axis=0), img, g, o)
    add_case("sigmoid", lambda: nx.sigmoid(a), a)
    add_case("silu", lambda: nx.silu(a), a)
    add_case("softplus", lambda: nx.softplus(a), a)
    add_case("gelu", lambda: nx.gelu(a), a)
    mask = np.array([1.0, 0.0, 1.0, 1.0])
    add_case("softmax (masked)", lambda: nx.softmax(a, mask), a)
    kern = rng.standard_normal((3, 3))
    add_case("filter2d_valid", lambda: nx.filter2d_valid(img, kern), img)

    x = _param(rng, (2, 6, 6), "x")
    add_case("fft2 real part", lambda: nx.fft2(x).re, x)
    add_case("fft2 imag part", lambda: nx.fft2(x).im, x)
    add_case("amplitude", lambda: nx.amp_phase(nx.fft2(x))[0], x)
    add_case("phase", lambda: nx.amp_phase(nx.fft2(x))[1], x)
    amp = _param(rng, (2, 6, 6), "amp", 0.2, 2.0)
    ph = _param(rng, (2, 6, 6), "phase", -3.0, 3.0)
    add_case("recompose + hermitian + ifft2",
             lambda: nx.ifft2(nx.hermitian_part(nx.recompose(amp, ph))), amp, ph)

    sp = SsmParams(3, 4, rng)
    sp.name_parameters("ssm")
    tok = _param(rng, (10, 3), "tokens")
    order = frequency_rotational(2, 5)
    add_case("selective_scan", lambda: selective_scan(tok, sp, order), tok, *sp.parameters())
    sb = SsmParams(3, 4, rng)
    sb.name_parameters("ssm_bwd")
    add_case("bidirectional_scan", lambda: bidirectional_scan(tok, sp, sb, order),
             tok, *sp.parameters(), *sb.parameters())
    t2 = _param(rng, (20, 3), "cm_tokens")
    cm = cross_modal_interleave(spatial_raster(2, 5), spatial_raster(2, 5))
    add_case("selective_scan (cross-modal)", lambda: selective_scan(t2, sp, cm), t2)
    lx = _param(rng, (4, 6), "lift_x")
    add_case("lift split", lambda: lift_split(lx, axis=1).high * 2 + lift_split(lx, axis=1).low, lx)
    add_case("lift merge", lambda: lift_merge(lift_split(lx, axis=0)), lx)
    return cases


def _mafe_cases(seed: int) -> list[Case]:
    rng = np.random.default_rng(seed)
    blk = MafeBlock(2, 4, 2, rng)
    blk.name_parameters("mafe")
    image = rng.uniform(0, 1, (2, 8, 8))
    f_sk = _param(rng, (4, 8, 8), "f_sk")
    out_r = rng.standard_normal((8, 8, 8))
    half_r = rng.standard_normal((2, 8, 8))
    full_r = rng.standard_normal((4, 8, 8))
    return [
        ("local branch", lambda: (local_branch(f_sk, blk) * full_r).sum(),
         [f_sk, blk.local_dw, blk.local_dw_b, blk.gate_w, blk.gate_b]),
        ("global spatial", lambda: (global_spatial(f_sk, blk) * half_r).sum(),
         [f_sk, blk.spa_proj, blk.spa_dw, blk.spa_ln_g, *blk.spa_ssm.parameters(),
          *blk.chan_ssm.parameters()]),
        ("global frequency", lambda: (global_frequency(f_sk, blk) * half_r).sum(),
         [f_sk, blk.fre_proj, blk.amp_dw, blk.pha_dw, *blk.amp_ssm.parameters(),
          *blk.pha_ssm.parameters()]),
        ("mafe block", lambda: (blk(image) * out_r).sum(), blk.parameters()),
    ]


def _mccm_cases(seed: int) -> list[Case]:
    rng = np.random.default_rng(seed)
    f1 = _param(rng, (4, 4, 4), "f_m1")
    f2 = _param(rng, (4, 4, 4), "f_m2")
    ex = CmExpert(4, 8, 2, rng)
    ex.name_parameters("expert")
    r = rng.standard_normal((8, 4, 4))
    state = MccmState(4, 8, 2, 3, 2, rng, horizon=4)
    state.W_g.assign(rng.uniform(-0.5, 0.5, state.W_g.shape))
    state.W_noise.assign(rng.uniform(-0.5, 0.5, state.W_noise.shape))
    state.name_parameters("mccm")

    def mccm_loss():
        f_mf, dec, outs = mccm_forward(f1, f2, state, np.random.default_rng(7), "train")
        return (f_mf * r).sum() + loss_mccm(dec.weights, outs, 2, 4)

    def gated(fn):
        def run():
            _, dec, outs = mccm_forward(f1, f2, state, np.random.default_rng(7), "train")
            return fn(dec.weights, outs)
        return run

    return [
        ("cm expert", lambda: (ex(f1, f2) * r).sum(), [f1, f2, *ex.parameters()]),
        ("L_wb", gated(lambda w, o: loss_wb(w)), [state.W_g, state.W_noise, f1]),
        ("L_div", gated(lambda w, o: loss_div(o)), [f1, f2, *state.experts[0].parameters()]),
        ("L_cons", gated(lambda w, o: loss_cons(o, w)), [f1, state.W_g, *state.experts[1].parameters()]),
        ("mccm forward + losses", mccm_loss, [f1, f2, *state.parameters()]),
    ]


def _bscl_cases(seed: int) -> list[Case]:
    rng = np.random.default_rng(seed)
    f_mf = _param(rng, (8, 4, 4), "F_mf")
    f1 = _param(rng, (4, 4, 4), "F_m1")
    f2 = _param(rng, (4, 4, 4), "F_m2")
    i_mf = _param(rng, (1, 12, 12), "I_mf", 0.05, 0.95)
    i1 = _param(rng, (1, 12, 12), "I_m1", 0.0, 1.0)
    i2 = _param(rng, (1, 12, 12), "I_m2", 0.0, 1.0)
    return [
        ("L_fcl", lambda: loss_fcl(f_mf, f1, f2), [f_mf, f1, f2]),
        ("L_pcl", lambda: loss_pcl(i_mf, i1, i2), [i_mf, i1, i2]),
        ("L_ssim", lambda: loss_ssim(i_mf, i1, i2), [i_mf, i1, i2]),
        ("L_int", lambda: loss_int(i_mf, i1, i2), [i_mf]),
    ]


def full_model(seed: int = 0) -> FusionModel:
    return FusionModel(FusionConfig(width=4, state=2, experts=2, top_k=2, seed=seed, epochs=4))


def _full_cases(seed: int) -> list[Case]:
    model = full_model(seed)
    rng = np.random.default_rng(seed + 1)
    a = rng.uniform(0, 1, (1, 16, 16))
    b = rng.uniform(0, 1, (1, 16, 16))
    # nonzero gate weights so the gate parameters carry gradient
    model.mccm.W_g.assign(rng.uniform(-0.2, 0.2, model.mccm.W_g.shape))
    cfg = model.config

    def loss():
        i_mf, it = fuse_forward(a, b, model, np.random.default_rng(3), "train")
        return loss_total(it.f_mf, it.f_m1, it.f_m2, i_mf, a, b, it.decision.weights,
                          it.expert_outputs, 2, cfg.epochs, cfg.loss_weights).total

    return [("full model 16x16", loss, model.parameters())]


_BUILDERS = {"ops": _op_cases, "mafe": _mafe_cases, "mccm": _mccm_cases,
             "bscl": _bscl_cases, "full": _full_cases}
# the full loss has |.| and max kinks, so its step must stay small enough not to cross them;
# the deep MAFE graph instead needs the fourth-order stencil to tame curvature
_STEP = {"ops": 1e-5, "mafe": 1e-4, "mccm": 1e-5, "bscl": 1e-5, "full": 1e-6}
_PROBES = {"ops": 8, "mafe": 4, "mccm": 4, "bscl": 8, "full": 2}
_STENCIL = {"ops": 3, "mafe": 5, "mccm": 3, "bscl": 3, "full": 3}
# at h=1e-6 a loss near 7 carries ~1e-9 of roundoff in each difference, so components
# below 1e-5 are judged on absolute error
_FLOOR = {"ops": 1e-6, "mafe": 1e-6, "mccm": 1e-6, "bscl": 1e-6, "full": 1e-5}


def run_suite(scope: str, seed: int = 0, tolerance: float | None = None):
    """Return ``[(case name, GradCheckReport)]`` for one scope."""
    if scope not in _BUILDERS:
        raise ValueError(f"unknown gradcheck scope {scope!r}; choose from {', '.join(SCOPES)}")
    tol = TOLERANCE[scope] if tolerance is None else tolerance
    out = []
    for name, fn, params in _BUILDERS[scope](seed):
        out.append((name, grad_check(fn, params, probes=_PROBES[scope], step=_STEP[scope],
                                     tolerance=tol, seed=seed, stencil=_STENCIL[scope],
                                     abs_floor=_FLOOR[scope])))
    return out


def format_results(results) -> str:
    lines = [f"{'case':36s} {'max rel err':>12s} {'tol':>8s}  status"]
    for name, rep in results:
        lines.append(f"{name:36s} {rep.max_error:12.3e} {rep.tolerance:8.0e}  "
                     f"{'ok' if rep.passed else 'FAIL'}")
    return "\n".join(lines)
