import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from smcfuse import numerics as nx
from smcfuse.numerics import Parameter, Tensor, backward, grad_check


def loop_conv(x, k, kind, bias=None):
    """Nested-loop zero-padded cross-correlation."""
    C, H, W = x.shape
    pad = 1 if kind != "pointwise-1x1" else 0
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out_ch = C if kind == "depthwise-3x3" else k.shape[0]
    out = np.zeros((out_ch, H, W))
    ks = k.shape[-1]
    for o in range(out_ch):
        for h in range(H):
            for w in range(W):
                acc = 0.0
                for i in range(ks):
                    for j in range(ks):
                        if kind == "depthwise-3x3":
                            acc += k[o, 0, i, j] * xp[o, h + i, w + j]
                        else:
                            for c in range(C):
                                acc += k[o, c, i, j] * xp[c, h + i, w + j]
                out[o, h, w] = acc + (bias[o] if bias is not None else 0.0)
    return out


def direct_dft(x):
    C, H, W = x.shape
    out = np.zeros((C, H, W), dtype=complex)
    for u in range(H):
        for v in range(W):
            for h in range(H):
                for w in range(W):
                    out[:, u, v] += x[:, h, w] * np.exp(-2j * np.pi * (u * h / H + v * w / W))
    return out


# ---------------------------------------------------------------- conv2d

def test_conv_ones_center_and_corner():
    out = nx.conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)), "full-3x3", np.zeros(1)).data
    assert out[0, 1, 1] == 9.0
    assert out[0, 0, 0] == 4.0


def test_pointwise_identity():
    x = np.random.default_rng(0).standard_normal((2, 5, 4))
    k = np.eye(2)[:, :, None, None]
    np.testing.assert_array_equal(nx.conv2d(x, k, "pointwise-1x1").data, x)


@pytest.mark.parametrize("kind,kshape", [("depthwise-3x3", (2, 1, 3, 3)), ("full-3x3", (3, 2, 3, 3)),
                                         ("pointwise-1x1", (3, 2, 1, 1))])
def test_conv_matches_loop_oracle(kind, kshape, rng):
    x = rng.standard_normal((2, 4, 4))
    k = rng.standard_normal(kshape)
    b = rng.standard_normal(x.shape[0] if kind == "depthwise-3x3" else kshape[0])
    np.testing.assert_allclose(nx.conv2d(x, k, kind, b).data, loop_conv(x, k, kind, b), atol=1e-12)


def test_conv_batched_matches_unbatched(rng):
    x = rng.standard_normal((3, 2, 5, 5))
    k = rng.standard_normal((4, 2, 3, 3))
    out = nx.conv2d(x, k, "full-3x3").data
    for n in range(3):
        np.testing.assert_allclose(out[n], nx.conv2d(x[n], k, "full-3x3").data, atol=1e-13)


def test_conv_shape_mismatch_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(3, 1, 3, 3\).*\(2, 1, 3, 3\)"):
        nx.conv2d(np.zeros((2, 4, 4)), np.zeros((3, 1, 3, 3)), "depthwise-3x3")
    with pytest.raises(ValueError, match="unknown conv kind"):
        nx.conv2d(np.zeros((2, 4, 4)), np.zeros((3, 2, 5, 5)), "full-5x5")


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_conv_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 2, 5, 6))
    k = rng.standard_normal((3, 2, 3, 3))
    lhs = nx.conv2d(a * x + b * y, k, "full-3x3").data
    rhs = a * nx.conv2d(x, k, "full-3x3").data + b * nx.conv2d(y, k, "full-3x3").data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


# ---------------------------------------------------------------- layer norm

def test_layer_norm_constant_is_zero():
    out = nx.layer_norm(np.full((3, 2, 2), 5.0), np.ones(3), np.zeros(3)).data
    np.testing.assert_array_equal(out, 0.0)


def test_layer_norm_hand_pair():
    out = nx.layer_norm(np.array([[1.0], [3.0]]), np.ones(2), np.zeros(2), eps=1e-12).data
    np.testing.assert_allclose(out[:, 0], [-1.0, 1.0], atol=1e-10)


@given(st.integers(0, 2**31))
def test_layer_norm_affine_identity(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 3, 3))
    g, b = rng.standard_normal((2, 4))
    base = nx.layer_norm(x, np.ones(4), np.zeros(4)).data
    np.testing.assert_allclose(nx.layer_norm(x, g, b).data, g[:, None, None] * base + b[:, None, None],
                               atol=1e-12)
    np.testing.assert_allclose(base.mean(axis=0), 0.0, atol=1e-12)


def test_layer_norm_rejects_bad_eps():
    with pytest.raises(ValueError):
        nx.layer_norm(np.ones((2, 2)), np.ones(2), np.zeros(2), eps=0.0)


# ---------------------------------------------------------------- activations

def test_activation_closed_forms():
    assert nx.silu(0.0).item() == 0.0
    assert nx.softplus(0.0).item() == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(nx.softmax(np.array([2.0, 1.0])).data, [0.7311, 0.2689], atol=1e-4)
    assert nx.activation(np.array([0.5]), "silu").item() == pytest.approx(0.5 / (1 + math.exp(-0.5)))


@pytest.mark.parametrize("x", [-3.0, 0.0, 3.0])
def test_gelu_matches_quadrature(x):
    # integrate from 0 so the quadrature stays well conditioned
    half, _ = quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), 0.0, x,
                   epsabs=1e-13, epsrel=1e-13)
    cdf = 0.5 + half
    assert nx.gelu(x).item() == pytest.approx(x * cdf, abs=1e-9)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_activation_properties(vals):
    x = np.array(vals)
    assert np.all(nx.softplus(x).data >= 0)
    assert nx.softmax(x).data.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(nx.silu(x).data, x * nx.sigmoid(x).data, atol=1e-12)


def test_masked_softmax_exact_zeros():
    p = nx.softmax(np.array([2.0, 1.0, 0.0, -1.0]), np.array([1, 1, 0, 0])).data
    assert p[2] == 0.0 and p[3] == 0.0
    np.testing.assert_allclose(p[:2], [0.7311, 0.2689], atol=1e-4)


# ---------------------------------------------------------------- fourier

def test_fft_constant_image_dc_only():
    amp, _ = nx.amp_phase(nx.fft2(np.full((1, 4, 4), 2.0)))
    assert amp.data[0, 0, 0] == pytest.approx(32.0, abs=1e-12)
    rest = amp.data.copy()
    rest[0, 0, 0] = 0
    assert np.abs(rest).max() < 1e-12


def test_fft_impulse_flat_amplitude():
    x = np.zeros((1, 5, 6))
    x[0, 0, 0] = 1.0
    amp, _ = nx.amp_phase(nx.fft2(x))
    np.testing.assert_allclose(amp.data, 1.0, atol=1e-12)


def test_fft_matches_direct_double_sum(rng):
    x = rng.standard_normal((1, 5, 7))
    z = nx.fft2(x)
    np.testing.assert_allclose(z.numpy(), direct_dft(x), atol=1e-9)
    assert np.abs(nx.ifft2(z).data - x).max() < 1e-9


@given(st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**31))
def test_fft_roundtrip_and_parseval(H, W, seed):
    x = np.random.default_rng(seed).standard_normal((2, H, W))
    z = nx.fft2(x)
    assert np.abs(nx.ifft2(z, max_imag=1e-9).data - x).max() < 1e-9
    spatial = (x ** 2).sum() * H * W
    spectral = (np.abs(z.numpy()) ** 2).sum()
    assert spectral == pytest.approx(spatial, rel=1e-6)


def test_amp_phase_hand_values():
    z = nx.ComplexTensor(Tensor(np.array([3.0, 2.0])), Tensor(np.array([4.0, 0.0])))
    amp, ph = nx.amp_phase(z)
    np.testing.assert_allclose(amp.data, [5.0, 2.0])
    assert ph.data[0] == pytest.approx(math.atan2(4, 3)) and ph.data[1] == 0.0


@given(st.integers(0, 2**31))
def test_recompose_roundtrip(seed):
    rng = np.random.default_rng(seed)
    re, im = rng.standard_normal((2, 3, 4))
    amp, ph = nx.amp_phase(nx.ComplexTensor(Tensor(re), Tensor(im)))
    back = nx.recompose(amp, ph)
    np.testing.assert_allclose(back.re.data, re, atol=1e-12)
    np.testing.assert_allclose(back.im.data, im, atol=1e-12)


def test_recompose_rejects_negative_amplitude():
    with pytest.raises(ValueError, match="non-negative"):
        nx.recompose(np.array([-0.1]), np.array([0.0]))


def test_phase_gradient_zero_at_origin():
    re, im = Parameter(np.zeros(2), "re"), Parameter(np.zeros(2), "im")
    amp, ph = nx.amp_phase(nx.ComplexTensor(re, im))
    backward((amp + ph).sum())
    assert np.all(re.grad == 0) and np.all(im.grad == 0)


def test_hermitian_part_gives_real_inverse(rng):
    z = nx.ComplexTensor(Tensor(rng.standard_normal((2, 4, 5))), Tensor(rng.standard_normal((2, 4, 5))))
    out = np.fft.ifft2(nx.hermitian_part(z).numpy())
    assert np.abs(out.imag).max() < 1e-12
    np.testing.assert_allclose(out.real, np.fft.ifft2(z.numpy()).real, atol=1e-12)


def test_ifft2_residue_guard(rng):
    z = nx.ComplexTensor(Tensor(rng.standard_normal((3, 3))), Tensor(rng.standard_normal((3, 3))))
    with pytest.raises(ArithmeticError, match="imaginary residue"):
        nx.ifft2(z, max_imag=1e-9)


# ---------------------------------------------------------------- autodiff

def test_backward_quadratic():
    p = Parameter(np.array([1.0, 2.0, 3.0]), "p")
    backward((p * p).sum())
    np.testing.assert_array_equal(p.grad, [2.0, 4.0, 6.0])


def test_backward_accumulates_until_reset():
    p = Parameter(np.array([1.0, -2.0]), "p")
    backward((p ** 3).sum())
    first = p.grad.copy()
    backward((p ** 3).sum())
    np.testing.assert_array_equal(p.grad, 2 * first)
    p.zero_grad()
    assert p.grad.shape == p.data.shape and not p.grad.any()


def test_backward_rejects_non_scalar():
    p = Parameter(np.ones(3), "p")
    with pytest.raises(ValueError):
        backward(p * 2)


def test_chain_matches_finite_differences(rng):
    x = Parameter(rng.standard_normal((3, 4, 4)), "x")
    g = Parameter(rng.uniform(0.5, 1.5, 3), "g")
    b = Parameter(rng.standard_normal(3), "b")
    rep = grad_check(lambda: nx.silu(nx.layer_norm(x, g, b)).sum(), [x, g, b], probes=16, step=1e-5,
                     tolerance=1e-5)
    assert rep.passed, rep.table()


def test_grad_check_quadratic_is_tight():
    p = Parameter(np.array([0.3, -1.2, 2.0]), "p")
    assert grad_check(lambda: (p * p).sum(), [p]).max_error < 1e-9


def test_grad_check_negative_control():
    p = Parameter(np.array([0.3, -1.2, 2.0]), "p")
    p.zero_grad()
    backward((p * p * p).sum())
    bad = grad_check(lambda: (p * p * p).sum(), [p], analytic={"p": p.grad * 1.01})
    assert not bad.passed and bad.max_error > 1e-3


def test_grad_check_zero_gradient_uses_absolute_floor():
    p = Parameter(np.array([0.0, 1.0]), "p")
    rep = grad_check(lambda: (p * 0.0).sum() + 1.0, [p])
    assert rep.passed and rep.max_error == 0.0


def test_grad_check_rejects_bad_step():
    with pytest.raises(ValueError):
        grad_check(lambda: Tensor(0.0), [], step=0.0)


SHAPES = [(3,), (2, 5), (2, 3, 4)]
UNARY = {
    "exp": nx.exp, "cos": nx.cos, "sin": nx.sin, "square": nx.square, "sigmoid": nx.sigmoid,
    "silu": nx.silu, "softplus": nx.softplus, "gelu": nx.gelu, "softmax": nx.softmax,
    "abs": nx.absolute, "sum": lambda t: nx.tsum(t, axis=-1), "mean": lambda t: nx.mean(t, axis=0),
    "amax": lambda t: nx.amax(t, axis=-1), "transpose": nx.transpose,
    "reshape": lambda t: nx.reshape(t, (-1,)), "getitem": lambda t: t[..., ::2],
    "log": lambda t: nx.log(t * t + 0.5), "sqrt": lambda t: nx.sqrt(t * t + 0.5),
    "power": lambda t: nx.power(t * t + 0.5, 1.5),
}


@pytest.mark.parametrize("shape", SHAPES, ids=str)
@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_op_gradients(name, shape):
    rng = np.random.default_rng(hash((name, shape)) % 2**32)
    p = Parameter(rng.uniform(-1.5, 1.5, shape), name)
    out = UNARY[name](p)
    r = rng.standard_normal(out.shape)
    rep = grad_check(lambda: (UNARY[name](p) * r).sum(), [p], probes=12)
    assert rep.passed, rep.table()


BINARY = {
    "add": lambda a, b: a + b, "sub": lambda a, b: a - b, "mul": lambda a, b: a * b,
    "div": lambda a, b: a / (b * b + 0.5), "maximum": nx.maximum,
    "concat": lambda a, b: nx.concat([a, b], axis=0), "stack": lambda a, b: nx.stack([a, b], axis=-1),
    "matmul": lambda a, b: nx.matmul(a, nx.transpose(b)),
}


@pytest.mark.parametrize("shape", [(2, 3), (4, 2), (3, 5)], ids=str)
@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_op_gradients(name, shape):
    rng = np.random.default_rng(hash((name, shape)) % 2**32)
    a = Parameter(rng.uniform(-1, 1, shape), "a")
    b = Parameter(rng.uniform(-1, 1, shape), "b")
    r = rng.standard_normal(BINARY[name](a, b).shape)
    rep = grad_check(lambda: (BINARY[name](a, b) * r).sum(), [a, b], probes=12)
    assert rep.passed, rep.table()


@pytest.mark.parametrize("shape", [(3, 4, 4), (3, 5, 6), (4, 8, 3)], ids=str)
@pytest.mark.parametrize("kind", ["full-3x3", "depthwise-3x3", "pointwise-1x1"])
def test_conv_and_norm_gradients(kind, shape):
    rng = np.random.default_rng(len(kind) * 31 + shape[1])
    C = shape[0]
    kshape = {"full-3x3": (3, C, 3, 3), "depthwise-3x3": (C, 1, 3, 3), "pointwise-1x1": (3, C, 1, 1)}[kind]
    x = Parameter(rng.standard_normal(shape), "x")
    k = Parameter(rng.standard_normal(kshape), "k")
    g = Parameter(rng.uniform(0.5, 1.5, kshape[0]), "g")
    b = Parameter(rng.standard_normal(kshape[0]), "b")
    r = rng.standard_normal((kshape[0],) + shape[1:])
    rep = grad_check(lambda: (nx.layer_norm(nx.conv2d(x, k, kind, b), g, b) * r).sum(), [x, k, g, b])
    assert rep.passed, rep.table()


@pytest.mark.parametrize("shape", [(1, 4, 4), (2, 5, 3), (1, 6, 7)], ids=str)
def test_spectral_gradients(shape):
    rng = np.random.default_rng(shape[2])
    x = Parameter(rng.standard_normal(shape), "x")
    r1, r2 = rng.standard_normal((2,) + shape)

    def f():
        amp, ph = nx.amp_phase(nx.fft2(x))
        return (amp * r1).sum() + (ph * r2).sum() + (nx.ifft2(nx.recompose(amp, ph)) * r1).sum()

    rep = grad_check(f, [x], probes=12)
    assert rep.passed, rep.table()


@pytest.mark.parametrize("shape", [(1, 12, 12), (2, 11, 13), (1, 14, 11)], ids=str)
def test_filter_gradients(shape):
    rng = np.random.default_rng(shape[1])
    x = Parameter(rng.standard_normal(shape), "x")
    k = rng.standard_normal((11, 11))
    r = rng.standard_normal(nx.filter2d_valid(x, k).shape)
    assert grad_check(lambda: (nx.filter2d_valid(x, k) * r).sum(), [x]).passed


def test_broadcast_gradient_reduces_to_shape(rng):
    row = Parameter(rng.standard_normal(4), "row")
    backward((nx.broadcast_to(row, (3, 4)) * np.arange(12.0).reshape(3, 4)).sum())
    np.testing.assert_allclose(row.grad, np.arange(12.0).reshape(3, 4).sum(axis=0))
