"""Synthetic complementary image pairs.

Image A: a dim smooth field (a few low-order sinusoids) with bright blobs, in the
spirit of an infrared frame. Image B: high-frequency checker/stripe texture that
is visible only outside A's blobs, like a visible-light frame. Neither image
alone holds all of the structure.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .netpbm import read_pnm, write_pnm

FIELD_MAX = 0.2
TEXTURE_RANGE = (0.25, 1.0)
BLOB_FLOOR = 0.1


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    field = np.zeros((size, size))
    for _ in range(rng.integers(1, 4)):
        fx, fy = rng.integers(0, 3, size=2)
        field += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fx * x + fy * y) + rng.uniform(0, 2 * np.pi))
    lo, hi = field.min(), field.max()
    field = (field - lo) / (hi - lo) if hi > lo else np.zeros_like(field)
    return FIELD_MAX * field


def _blob_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0.2, 0.8, size=2) * size
        r = rng.uniform(size / 10, size / 5)
        mask |= (y - cy) ** 2 + (x - cx) ** 2 <= r * r
    return mask


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    period = int(rng.choice([2, 4]))
    checker = ((x // (period // 2 or 1) + y // (period // 2 or 1)) % 2).astype(float)
    stripe_period = int(rng.integers(3, 7))
    direction = rng.integers(0, 3)
    coord = (x, y, x + y)[direction]
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * coord / stripe_period)
    w = rng.uniform(0.3, 0.7)
    return w * checker + (1 - w) * stripes


def make_pair(rng: np.random.Generator, size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """One (A, B) pair, each of shape [1, size, size] in [0, 1]."""
    mask = _blob_mask(rng, size)
    a = _smooth_field(rng, size)
    a[mask] = rng.uniform(0.85, 1.0)
    lo, hi = TEXTURE_RANGE
    b = lo + (hi - lo) * _texture(rng, size)
    b[mask] = BLOB_FLOOR
    return a[None], b[None]


def make_corpus(count: int, size: int = 32, seed: int = 42) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pair ``i`` depends only on ``(seed, i)``."""
    return [make_pair(np.random.default_rng([seed, i]), size) for i in range(count)]


def quantized(pair: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Round to the 8-bit grid the corpus is stored on."""
    return tuple(np.rint(x * 255) / 255 for x in pair)


def write_corpus(out_dir: str | Path, count: int, size: int = 32, seed: int = 42) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (a, b) in enumerate(make_corpus(count, size, seed)):
        for tag, img in (("a", a), ("b", b)):
            p = out / f"pair_{i:04d}_{tag}.pgm"
            write_pnm(p, img)
            paths.append(p)
    return paths


def read_corpus(corpus_dir: str | Path) -> list[tuple[np.ndarray, np.ndarray]]:
    root = Path(corpus_dir)
    pairs = []
    for pa in sorted(root.glob("pair_*_a.pgm")):
        pb = pa.with_name(pa.name[:-6] + "_b.pgm")
        if not pb.exists():
            raise FileNotFoundError(f"missing partner image {pb}")
        pairs.append((read_pnm(pa), read_pnm(pb)))
    if not pairs:
        raise FileNotFoundError(f"no pair_*_a.pgm images in {root}")
    return pairs
