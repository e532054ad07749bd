"""Token orderings that linearise feature grids for the SSM.

An order is pure index data. Unimodal orders are permutations of ``0..L-1``.
Cross-modal orders additionally carry a per-position modality tag (1 or 2);
the indices then address tokens within that modality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScanOrder:
    indices: np.ndarray
    tags: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)
        if self.tags is not None:
            tags = np.asarray(self.tags, dtype=np.int64)
            if tags.shape != idx.shape:
                raise ValueError("tags must align with indices")
            object.__setattr__(self, "tags", tags)

    @property
    def length(self) -> int:
        return len(self.indices)

    def modality(self, tag: int) -> np.ndarray:
        """Indices visited for one modality, in visiting order."""
        if self.tags is None:
            raise ValueError("order carries no modality tags")
        return self.indices[self.tags == tag]

    def positions(self) -> np.ndarray:
        """Storage positions when modality 2's tokens are stacked after modality 1's."""
        if self.tags is None:
            return self.indices
        n1 = int(np.sum(self.tags == 1))
        return np.where(self.tags == 1, self.indices, self.indices + n1)

    def is_valid(self) -> bool:
        if self.tags is None:
            return _is_perm(self.indices)
        return all(_is_perm(self.modality(t)) for t in (1, 2))

    def to_json(self) -> list:
        if self.tags is None:
            return self.indices.tolist()
        return [{"modality": int(t), "index": int(i)} for t, i in zip(self.tags, self.indices)]


def _is_perm(idx: np.ndarray) -> bool:
    return np.array_equal(np.sort(idx), np.arange(len(idx)))


def _check_extent(**extents: int) -> None:
    for name, n in extents.items():
        if n < 1:
            raise ValueError(f"{name} must be >= 1, got {n}")


def spatial_raster(H: int, W: int) -> ScanOrder:
    _check_extent(H=H, W=W)
    return ScanOrder(np.arange(H * W))


def channel_order(C: int) -> ScanOrder:
    _check_extent(C=C)
    return ScanOrder(np.arange(C))


def frequency_rotational(H: int, W: int) -> ScanOrder:
    """Frequency bins ordered outward from DC in rings, each ring swept by angle.

    Bins use the centred (signed) frequency convention. Ties on radius break
    by ``atan2`` angle and then by (u, v).
    """
    _check_extent(H=H, W=W)
    u, v = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    fu = np.where(u <= H // 2, u, u - H) if H > 1 else u
    fv = np.where(v <= W // 2, v, v - W) if W > 1 else v
    radius2 = (fu * fu + fv * fv).ravel()
    angle = np.arctan2(fv, fu).ravel()
    # lexsort keys run last-to-first; integer squared radius keeps the ring key exact
    order = np.lexsort((v.ravel(), u.ravel(), angle, radius2))
    return ScanOrder(order)


def cross_modal_interleave(order1: ScanOrder, order2: ScanOrder) -> ScanOrder:
    """Alternate tokens of two modalities: m1[0], m2[0], m1[1], m2[1], ..."""
    if order1.length != order2.length:
        raise ValueError(f"cannot interleave orders of length {order1.length} and {order2.length}")
    if order1.tags is not None or order2.tags is not None:
        raise ValueError("cross_modal_interleave takes unimodal orders")
    n = order1.length
    idx = np.empty(2 * n, dtype=np.int64)
    idx[0::2] = order1.indices
    idx[1::2] = order2.indices
    tags = np.tile([1, 2], n)
    return ScanOrder(idx, tags)


def swap_modalities(order: ScanOrder) -> ScanOrder:
    if order.tags is None:
        return order
    return ScanOrder(order.indices, 3 - order.tags)


def reverse(order: ScanOrder) -> ScanOrder:
    return ScanOrder(order.indices[::-1].copy(),
                     None if order.tags is None else order.tags[::-1].copy())


SCAN_KINDS = ("spatial", "channel", "frequency-rotational", "cross-modal")


def make_order(kind: str, H: int, W: int = 1) -> ScanOrder:
    """Build an order by name; ``channel`` reads ``H`` as the channel count and
    ``cross-modal`` interleaves two raster scans of an H x W grid."""
    if kind == "spatial":
        return spatial_raster(H, W)
    if kind == "channel":
        return channel_order(H)
    if kind == "frequency-rotational":
        return frequency_rotational(H, W)
    if kind == "cross-modal":
        return cross_modal_interleave(spatial_raster(H, W), spatial_raster(H, W))
    raise ValueError(f"unknown scan kind {kind!r}; expected one of {SCAN_KINDS}")
