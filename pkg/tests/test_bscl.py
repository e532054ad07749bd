import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.ndimage import uniform_filter

from smcfuse.bscl import LiftPair, lift_merge, lift_split, loss_fcl, loss_pcl
from smcfuse.gradsuite import run_suite
from smcfuse.numerics import as_tensor, concat
from smcfuse.synth import make_pair


def _t(x):
    return as_tensor(np.asarray(x, dtype=float))


def merged(low, high, axis=0):
    return lift_merge(LiftPair(_t(low), _t(high), axis)).data


def test_haar_pair_by_hand():
    p = lift_split(np.array([4.0, 6.0]), 0)
    assert p.high.data.tolist() == [2.0]
    assert p.low.data.tolist() == [5.0]
    np.testing.assert_array_equal(lift_merge(p).data, [4.0, 6.0])


def test_constant_input_has_no_detail():
    p = lift_split(np.full((4, 3, 6), 0.7), -1)
    assert np.all(p.high.data == 0)
    assert np.all(p.low.data == 0.7)
    assert p.low.shape == p.high.shape == (4, 3, 3)
    np.testing.assert_array_equal(lift_merge(p).data, np.full((4, 3, 6), 0.7))


@given(st.sampled_from([(2,), (4, 3), (6, 4, 4), (2, 5, 8)]), st.integers(0, 2), st.integers(0, 2**31))
def test_perfect_reconstruction_on_dyadic_grid(shape, axis, seed):
    axis = axis % len(shape)
    if shape[axis] % 2:
        return
    x = np.random.default_rng(seed).integers(-4096, 4096, shape) / 1024.0
    p = lift_split(x, axis)
    np.testing.assert_array_equal(lift_merge(p).data, x)


@given(arrays(np.float64, (4, 6), elements=st.floats(-1e3, 1e3)))
def test_reconstruction_within_ulps_for_any_float(x):
    for axis in (0, 1):
        y = lift_merge(lift_split(x, axis)).data
        assert np.all(np.abs(y - x) <= 4 * np.finfo(float).eps * max(np.abs(x).max(), 1e-300))


def test_split_interleaves_even_and_odd():
    x = np.arange(12.0).reshape(2, 6)
    p = lift_split(x, 1)
    np.testing.assert_array_equal(p.high.data, np.ones((2, 3)))
    np.testing.assert_array_equal(p.low.data, x[:, 0::2] + 0.5)


def test_white_noise_energy_split():
    x = np.random.default_rng(3).standard_normal((2, 64, 64))
    p = lift_split(x, -1)
    # for unit white noise: var(high) = 2, var(low) = 1/2
    assert p.high.data.var() == pytest.approx(2.0, rel=0.05)
    assert p.low.data.var() == pytest.approx(0.5, rel=0.05)


def test_split_errors():
    with pytest.raises(ValueError, match="pad or crop"):
        lift_split(np.zeros((3, 4)), 0)
    with pytest.raises(ValueError, match="shapes differ"):
        lift_merge(LiftPair(_t(np.zeros(2)), _t(np.zeros(3)), 0))


# ---------------------------------------------------------------- feature level

def band_features(low, high, channels=2, size=2):
    return merged(np.full((channels, size, size), low), np.full((channels, size, size), high))


def test_fcl_hand_constructed_half():
    f1 = band_features(3.0, 0.0)
    f2 = band_features(3.0, 0.0)
    f_mf = band_features(2.0, 1.0, channels=4)
    # |fused_h - src_h| = 1, |fused_h - src_l| = 2; same gaps for the low band
    assert loss_fcl(f_mf, f1, f2).item() == pytest.approx(0.5, abs=1e-8)


def test_fcl_aligned_is_zero_and_swapped_is_larger(rng):
    # dyadic values keep split and merge exact
    f1, f2 = rng.integers(-512, 512, (2, 4, 4, 4)) / 256.0
    s1, s2 = lift_split(f1, 0), lift_split(f2, 0)
    low = concat([s1.low, s2.low], 0)
    high = concat([s1.high, s2.high], 0)
    aligned = lift_merge(LiftPair(low, high, 0))
    swapped = lift_merge(LiftPair(high, low, 0))
    assert loss_fcl(aligned, f1, f2).item() == 0.0
    assert loss_fcl(swapped, f1, f2).item() > 1.0


def test_fcl_width_mismatch(rng):
    with pytest.raises(ValueError, match="concatenated"):
        loss_fcl(rng.standard_normal((6, 4, 4)), rng.standard_normal((4, 4, 4)), rng.standard_normal((4, 4, 4)))


# ---------------------------------------------------------------- pixel level

def test_pcl_blurred_fusion_costs_more():
    a, b = make_pair(np.random.default_rng(11), 32)
    sharp = np.maximum(a, b)
    blurred = uniform_filter(sharp, size=(1, 3, 3), mode="nearest")
    assert loss_pcl(blurred, a, b).item() > loss_pcl(sharp, a, b).item()


def test_pcl_reproducing_details_zeroes_the_high_numerator():
    a = np.random.default_rng(2).uniform(0, 1, (1, 8, 8))
    # both sources and the fused image share one set of Haar details
    pa = lift_split(a, -1)
    b = lift_merge(LiftPair(pa.low + 0.2, pa.high, 2)).data
    s_high = pa.high.data
    f = lift_merge(LiftPair(pa.low + 0.1, pa.high, 2)).data
    got = loss_pcl(f, a, b).item()
    low_term = 0.1 ** 2 / (np.mean(np.abs(np.concatenate([pa.low.data + 0.1] * 2) -
                                            np.concatenate([s_high] * 2))) ** 2 + 1e-8)
    assert got == pytest.approx(low_term, rel=1e-9)


def test_pcl_constant_images_reduce_to_low_band():
    f, a, b = (np.full((1, 4, 4), v) for v in (0.5, 0.2, 0.6))
    # high bands vanish; low-band gap is mean(0.3, 0.1) = 0.2 against a 0.5 gap to the zero highs
    assert loss_pcl(f, a, b).item() == pytest.approx(0.04 / (0.25 + 1e-8), rel=1e-12)


def test_pcl_size_mismatch():
    with pytest.raises(ValueError, match="sizes differ"):
        loss_pcl(np.zeros((1, 4, 4)), np.zeros((1, 4, 6)), np.zeros((1, 4, 4)))


@given(st.integers(0, 2**31))
def test_losses_non_negative(seed):
    rng = np.random.default_rng(seed)
    assert loss_fcl(rng.standard_normal((4, 2, 2)), rng.standard_normal((2, 2, 2)),
                    rng.standard_normal((2, 2, 2))).item() >= 0
    assert loss_pcl(*rng.uniform(0, 1, (3, 1, 4, 6))).item() >= 0


def test_bscl_gradients_within_tolerance():
    for name, rep in run_suite("bscl"):
        assert rep.passed, f"{name}\n{rep.table()}"
