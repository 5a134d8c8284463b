"""Radix-2 FFTs, spectrum centering and frequency-plane partitions.

Conventions: the forward transform is unnormalized and the inverse carries
the 1/d**2 factor, so ``sum |fft2(x)|**2 == d**2 * sum |x|**2``.  Transforms
act on the trailing axis (1-D) or trailing two axes (2-D), so stacks of
images are transformed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class SizeError(ValueError):
    """Raised for transform lengths that are not a power of two."""


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(half: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(half) / (2 * half))


def _fft_rows(x: np.ndarray) -> np.ndarray:
    """Radix-2 DIT transform along axis -2 of a [..., n, m] complex array."""
    n, m = x.shape[-2:]
    lead = x.shape[:-2]
    out = x[..., _bit_reversal(n), :]
    half = 1
    while half < n:
        blocks = out.reshape(*lead, n // (2 * half), 2, half, m)
        even = blocks[..., 0, :, :]
        odd = blocks[..., 1, :, :] * _twiddles(half)[:, None]
        out = np.concatenate((even + odd, even - odd), axis=-2).reshape(*lead, n, m)
        half *= 2
    return out


def fft(x) -> np.ndarray:
    """Unnormalized forward DFT along the last axis (iterative Cooley-Tukey, decimation in time)."""
    x = np.asarray(x)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise SizeError(f"FFT length must be a power of two, got {n}")
    lead = x.shape[:-1]
    out = x[..., _bit_reversal(n)].astype(np.complex128)
    half = 1
    while half < n:
        blocks = out.reshape(*lead, n // (2 * half), 2, half)
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * _twiddles(half)
        out = np.concatenate((even + odd, even - odd), axis=-1).reshape(*lead, n)
        half *= 2
    return out


def ifft(spectrum) -> np.ndarray:
    """Inverse DFT along the last axis with 1/n normalization (complex result)."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    n = spectrum.shape[-1]
    return np.conj(fft(np.conj(spectrum))) / n


def fft2(x) -> np.ndarray:
    """Unnormalized 2-D DFT over the trailing two axes."""
    x = np.asarray(x)
    if x.ndim < 2:
        raise SizeError(f"fft2 needs at least 2 dimensions, got shape {x.shape}")
    if not (is_power_of_two(x.shape[-1]) and is_power_of_two(x.shape[-2])):
        raise SizeError(f"fft2 side lengths must be powers of two, got {x.shape[-2:]}")
    return _fft_rows(fft(x))


def ifft2_complex(spectrum) -> np.ndarray:
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    d2 = spectrum.shape[-1] * spectrum.shape[-2]
    return np.conj(fft2(np.conj(spectrum))) / d2


def ifft2(spectrum, return_residue: bool = False):
    """Inverse 2-D DFT, real part.

    With ``return_residue`` also returns the largest discarded imaginary
    magnitude, which is round-off level for Hermitian-symmetric input.
    """
    z = ifft2_complex(spectrum)
    if return_residue:
        return z.real.copy(), float(np.max(np.abs(z.imag))) if z.size else 0.0
    return z.real.copy()


def fftshift(grid) -> np.ndarray:
    """Swap quadrants so index (0, 0) lands at (d/2, d/2); self-inverse for even d."""
    grid = np.asarray(grid)
    h, w = grid.shape[-2:]
    return np.roll(grid, (h // 2, w // 2), axis=(-2, -1))


def ifftshift(grid) -> np.ndarray:
    grid = np.asarray(grid)
    h, w = grid.shape[-2:]
    return np.roll(grid, (-(h // 2), -(w // 2)), axis=(-2, -1))


def signed_frequencies(d: int) -> np.ndarray:
    """Frequency of each unshifted index: 0..d/2-1 then -d/2..-1."""
    k = np.arange(d)
    return np.where(k < d // 2, k, k - d)


def conjugate_index(d: int) -> np.ndarray:
    """Index of the conjugate partner, (-u) mod d."""
    return (-np.arange(d)) % d


def conjugate_flip(grid) -> np.ndarray:
    """G'(u, v) = G((-u) mod d, (-v) mod d) over the trailing two axes."""
    grid = np.asarray(grid)
    h, w = grid.shape[-2:]
    return grid[..., conjugate_index(h)[:, None], conjugate_index(w)[None, :]]


@dataclass(frozen=True)
class BandSpec:
    """Partition of the (unshifted) d x d frequency plane into K bands.

    ``membership[u, v]`` is the band of frequency index (u, v); radius and
    angle are measured from DC using signed frequencies, which is the same
    as measuring from the centre of the fftshift-ed plane.
    """

    kind: str
    K: int
    d: int
    membership: np.ndarray

    def counts(self) -> np.ndarray:
        return np.bincount(self.membership.ravel(), minlength=self.K)

    def centered(self) -> np.ndarray:
        return fftshift(self.membership)

    def ranges(self) -> list[tuple[float, float]]:
        """(low, high) edge of each band: radius in frequency units or angle in radians."""
        top = self.d / 2 if self.kind == "radial" else np.pi
        step = top / self.K
        return [(k * step, (k + 1) * step) for k in range(self.K)]


def radial_bands(d: int, K: int = 8) -> BandSpec:
    """Annuli of width (d/2)/K; corner frequencies beyond d/2 join the last band."""
    if K < 1:
        raise ValueError("K must be positive")
    f = signed_frequencies(d).astype(np.float64)
    radius = np.sqrt(f[:, None] ** 2 + f[None, :] ** 2)
    band = np.floor(radius * K / (d / 2)).astype(np.intp)
    return BandSpec("radial", K, d, np.minimum(band, K - 1))


def angular_bands(d: int, K: int = 8) -> BandSpec:
    """Wedges of width pi/K over the angle atan2(row freq, col freq) mod pi.

    Conjugate pairs share a wedge; DC is assigned angle 0.
    """
    if K < 1:
        raise ValueError("K must be positive")
    f = signed_frequencies(d).astype(np.float64)
    angle = np.mod(np.arctan2(f[:, None], f[None, :]), np.pi)
    # tolerance so that points exactly on a wedge edge open the upper wedge
    band = np.floor(angle * K / np.pi + 1e-9).astype(np.intp)
    return BandSpec("angular", K, d, np.clip(band, 0, K - 1))


def make_bands(kind: str, d: int, K: int = 8) -> BandSpec:
    if kind == "radial":
        return radial_bands(d, K)
    if kind == "angular":
        return angular_bands(d, K)
    raise ValueError(f"unknown band kind {kind!r} (expected 'radial' or 'angular')")


def band_energy(grid, bands: BandSpec) -> np.ndarray:
    """Per-band l2 norm of the entries of ``grid`` (unshifted layout).

    Accepts a single d x d grid (-> [K]) or a stack [n, d, d] (-> [n, K]).
    Complex input uses magnitudes.
    """
    grid = np.asarray(grid)
    if grid.shape[-2:] != (bands.d, bands.d):
        raise ValueError(f"grid side {grid.shape[-2:]} does not match band spec d={bands.d}")
    sq = np.abs(grid) ** 2
    flat = sq.reshape(-1, bands.d * bands.d)
    labels = bands.membership.ravel()
    out = np.zeros((flat.shape[0], bands.K))
    for k in range(bands.K):
        out[:, k] = flat[:, labels == k].sum(axis=1)
    out = np.sqrt(out)
    return out[0] if grid.ndim == 2 else out.reshape(*grid.shape[:-2], bands.K)
