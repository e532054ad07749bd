"""Haar lifting split/merge and the bi-level contrastive ratio losses."""

from __future__ import annotations

from dataclasses import dataclass

from .numerics import Tensor, absolute, as_tensor, concat, getitem

RATIO_EPS = 1e-8


@dataclass(frozen=True)
class LiftPair:
    low: Tensor
    high: Tensor
    axis: int


def _take(x: Tensor, axis: int, start: int) -> Tensor:
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, None, 2)
    return getitem(x, tuple(index))


def lift_split(x, axis: int = 0) -> LiftPair:
    """Haar lifting: split even/odd, predict ``high = odd - even``, update ``low = even + high/2``."""
    x = as_tensor(x)
    axis = axis % x.ndim
    if x.shape[axis] % 2:
        raise ValueError(f"lifting needs an even extent along axis {axis}, got {x.shape[axis]}; "
                         "pad or crop by one")
    even, odd = _take(x, axis, 0), _take(x, axis, 1)
    high = odd - even
    low = even + 0.5 * high
    return LiftPair(low, high, axis)


def lift_merge(pair: LiftPair) -> Tensor:
    low, high = pair.low, pair.high
    if low.shape != high.shape:
        raise ValueError(f"low/high shapes differ: {low.shape} vs {high.shape}")
    even = low - 0.5 * high
    odd = high + even
    axis = pair.axis
    stacked = concat([even.reshape(_insert(even.shape, axis + 1)),
                      odd.reshape(_insert(odd.shape, axis + 1))], axis=axis + 1)
    shape = list(low.shape)
    shape[axis] *= 2
    return stacked.reshape(tuple(shape))


def _insert(shape, axis):
    s = list(shape)
    s.insert(axis, 1)
    return tuple(s)


def _l1_sq(a: Tensor, b: Tensor) -> Tensor:
    m = absolute(a - b).mean()
    return m * m


def contrastive_ratio(fused: LiftPair, src_high: Tensor, src_low: Tensor) -> Tensor:
    """Pull fused bands toward the matching source band, push from the opposite band."""
    hi = _l1_sq(fused.high, src_high) / (_l1_sq(fused.high, src_low) + RATIO_EPS)
    lo = _l1_sq(fused.low, src_low) / (_l1_sq(fused.low, src_high) + RATIO_EPS)
    return hi + lo


def loss_fcl(f_mf, f_m1, f_m2) -> Tensor:
    """Feature level: lifting along channels; the fused width must equal both sources' combined width."""
    f_mf, f_m1, f_m2 = map(as_tensor, (f_mf, f_m1, f_m2))
    if f_mf.shape[0] != f_m1.shape[0] + f_m2.shape[0] or f_mf.shape[1:] != f_m1.shape[1:]:
        raise ValueError(f"fused features {f_mf.shape} do not match concatenated sources "
                         f"{f_m1.shape} + {f_m2.shape}")
    s1, s2, fused = lift_split(f_m1, 0), lift_split(f_m2, 0), lift_split(f_mf, 0)
    return contrastive_ratio(fused, concat([s1.high, s2.high], 0), concat([s1.low, s2.low], 0))


def loss_pcl(i_mf, i_m1, i_m2) -> Tensor:
    """Pixel level: lifting along image width; the fused bands are compared with each source."""
    i_mf, i_m1, i_m2 = map(as_tensor, (i_mf, i_m1, i_m2))
    if not (i_mf.shape[1:] == i_m1.shape[1:] == i_m2.shape[1:]):
        raise ValueError(f"image sizes differ: {i_mf.shape}, {i_m1.shape}, {i_m2.shape}")
    s1, s2, fused = lift_split(i_m1, -1), lift_split(i_m2, -1), lift_split(i_mf, -1)
    src_high = concat([s1.high, s2.high], 0)
    src_low = concat([s1.low, s2.low], 0)
    reps = src_high.shape[0] // fused.high.shape[0]
    fused = LiftPair(concat([fused.low] * reps, 0), concat([fused.high] * reps, 0), fused.axis)
    return contrastive_ratio(fused, src_high, src_low)
