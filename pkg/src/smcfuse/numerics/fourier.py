"""2-D DFT over the trailing two axes, and amplitude/phase views of spectra.

Complex values are carried as a pair of real tensors so that the real-valued
autodiff engine handles them without a complex dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ValueError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def fft2(x) -> ComplexTensor:
    """Unnormalised forward DFT, ``sum x[h,w] exp(-2 pi i (uh/H + vw/W))``."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ValueError(f"fft2 needs at least two axes, got shape {x.shape}")
    spec = np.fft.fft2(x.data)
    # Real input has a Hermitian spectrum; enforce it so self-conjugate bins
    # (DC, Nyquist) carry an imaginary part of exactly zero, not roundoff.
    spec = 0.5 * (spec + np.conj(_flip_freq(spec)))
    # The DFT matrix is symmetric, so the adjoint of Re/Im(F x) for real x is Re/Im(F g).
    re = Tensor(spec.real, (x,), lambda g: (np.fft.fft2(g).real,))
    im = Tensor(spec.imag, (x,), lambda g: (np.fft.fft2(g).imag,))
    return ComplexTensor(re, im)


def ifft2(z: ComplexTensor, max_imag: float | None = None) -> Tensor:
    """Real part of the normalised inverse DFT.

    With ``max_imag`` set, raises if the discarded imaginary part exceeds it.
    """
    zc = z.numpy()
    out = np.fft.ifft2(zc)
    if max_imag is not None:
        residue = float(np.abs(out.imag).max()) if out.size else 0.0
        if residue > max_imag:
            raise ArithmeticError(f"ifft2 imaginary residue {residue:.3e} exceeds {max_imag:.1e}")
    n = zc.shape[-1] * zc.shape[-2]

    def grad_fn(g):
        f = np.fft.fft2(g) / n
        return f.real, f.imag

    return Tensor(out.real, (z.re, z.im), grad_fn)


def _flip_freq(a: np.ndarray) -> np.ndarray:
    """Index map (u, v) -> (-u mod H, -v mod W) on the trailing two axes."""
    return np.roll(np.flip(a, axis=(-2, -1)), shift=(1, 1), axis=(-2, -1))


def hermitian_part(z: ComplexTensor) -> ComplexTensor:
    """Project a spectrum onto its Hermitian-symmetric part, (Z[k] + conj Z[-k]) / 2.

    The projection is exactly the part of Z that survives taking the real part
    of the inverse transform, so the inverse of the result is real up to roundoff.
    """
    re = Tensor(0.5 * (z.re.data + _flip_freq(z.re.data)), (z.re,),
                lambda g: (0.5 * (g + _flip_freq(g)),))
    im = Tensor(0.5 * (z.im.data - _flip_freq(z.im.data)), (z.im,),
                lambda g: (0.5 * (g - _flip_freq(g)),))
    return ComplexTensor(re, im)


def amp_phase(z: ComplexTensor) -> tuple[Tensor, Tensor]:
    """Amplitude ``sqrt(re^2 + im^2)`` and phase ``atan2(im, re)``.

    Both derivatives are singular at the origin; there the gradient
    contribution is defined as zero.
    """
    re, im = z.re.data, z.im.data
    r2 = re * re + im * im
    amp = np.sqrt(r2)
    safe_amp = np.where(amp > 0, amp, 1.0)
    safe_r2 = np.where(r2 > 0, r2, 1.0)
    live = r2 > 0

    def amp_grad(g):
        return np.where(live, g * re / safe_amp, 0.0), np.where(live, g * im / safe_amp, 0.0)

    def phase_grad(g):
        return np.where(live, -g * im / safe_r2, 0.0), np.where(live, g * re / safe_r2, 0.0)

    return (Tensor(amp, (z.re, z.im), amp_grad),
            Tensor(np.arctan2(im, re), (z.re, z.im), phase_grad))


def recompose(amp, phase, check: bool = True) -> ComplexTensor:
    """Build ``amp * exp(i * phase)``."""
    amp, phase = as_tensor(amp), as_tensor(phase)
    if check and np.any(amp.data < 0):
        raise ValueError(f"recompose needs non-negative amplitude, min is {amp.data.min():.3e}")
    c, s = np.cos(phase.data), np.sin(phase.data)
    re = Tensor(amp.data * c, (amp, phase), lambda g: (g * c, -g * amp.data * s))
    im = Tensor(amp.data * s, (amp, phase), lambda g: (g * s, g * amp.data * c))
    return ComplexTensor(re, im)
