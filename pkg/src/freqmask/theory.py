"""One-dimensional demonstrations of how nonlinearities reshape a spectrum.

All signals are sampled at t = j/n, j = 0..n-1, so integer frequencies are
whole periods and the DFT has no leakage.  Magnitudes use the unnormalized
forward transform from :mod:`freqmask.spectral`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .spectral import fft, is_power_of_two

NONLINEARITIES = {
    "identity": lambda v: v,
    "softplus": lambda v: np.logaddexp(0.0, v),
    "tanh": np.tanh,
    "relu": lambda v: np.maximum(v, 0.0),
    "hardtanh": lambda v: np.clip(v, -0.5, 0.5),
}


class AliasingError(ValueError):
    pass


@dataclass
class Signal1D:
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or not is_power_of_two(len(self.samples)):
            raise ValueError(f"signal length must be a power of two, got {self.samples.shape}")

    @property
    def n(self) -> int:
        return len(self.samples)

    @classmethod
    def tone(cls, freq: int, n: int = 256, kind: str = "sin") -> "Signal1D":
        t = np.arange(n) / n
        wave = np.sin if kind == "sin" else np.cos
        return cls(wave(2 * np.pi * freq * t))


def nonlinearity_spectrum(freq: int, sigma: str = "relu", n: int = 256) -> np.ndarray:
    """|FFT(sigma(sin(2 pi freq t)))| for bins 0..n/2.

    ``hardtanh`` clips at +-0.5 so that it actually bends a unit sine.
    """
    if sigma not in NONLINEARITIES:
        raise ValueError(f"unknown nonlinearity {sigma!r}; choose from {sorted(NONLINEARITIES)}")
    if not 0 < freq < n // 2:
        raise ValueError(f"need 0 < freq < n/2, got freq={freq}, n={n}")
    x = Signal1D.tone(freq, n).samples
    return np.abs(fft(NONLINEARITIES[sigma](x)))[: n // 2 + 1]


def harmonic_energy(freq: int, sigma: str, n: int = 256) -> tuple[float, float]:
    """(total spectral energy, energy outside the +-freq bins) over the full spectrum."""
    x = Signal1D.tone(freq, n).samples
    power = np.abs(fft(NONLINEARITIES[sigma](x))) ** 2
    outside = power.copy()
    outside[[freq, n - freq]] = 0.0
    return float(power.sum()), float(outside.sum())


@dataclass
class PeakReport:
    bins: tuple
    magnitudes: tuple
    expected: tuple
    max_off_support: float
    spectrum: np.ndarray = field(default=None, repr=False)  # one-sided magnitudes

    def rows(self):
        return list(zip(self.bins, self.magnitudes, self.expected))

    @property
    def max_peak_error(self) -> float:
        return float(max(abs(m - e) for m, e in zip(self.magnitudes, self.expected)))


def intermodulation_check(w1: int, w2: int, n: int = 256) -> PeakReport:
    """Spectrum of (cos(w1) + cos(w2))^2, checked against the product-to-sum expansion.

    The square equals 1 + cos(2w1)/2 + cos(2w2)/2 + cos(w1+w2) + cos(w1-w2),
    so with the unnormalized DFT the one-sided magnitudes at bins
    (0, 2w1, 2w2, w1+w2, |w1-w2|) are n * (1, 1/4, 1/4, 1/2, 1/2).
    """
    if w1 == w2:
        raise ValueError("w1 and w2 must differ")
    if min(w1, w2) <= 0:
        raise ValueError("frequencies must be positive")
    if w1 + w2 >= n // 2 or 2 * max(w1, w2) >= n // 2:
        raise AliasingError(f"w1={w1}, w2={w2} alias for n={n}; need 2*max(w1, w2) < n/2")
    t = np.arange(n) / n
    f = np.cos(2 * np.pi * w1 * t) + np.cos(2 * np.pi * w2 * t)
    mag = np.abs(fft(f * f))[: n // 2 + 1]
    bins = (0, 2 * w1, 2 * w2, w1 + w2, abs(w1 - w2))
    expected = (float(n), n / 4, n / 4, n / 2, n / 2)
    off = mag.copy()
    off[list(bins)] = 0.0
    return PeakReport(bins, tuple(float(mag[b]) for b in bins), expected, float(off.max()), mag)


def circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct O(n^2) circular convolution, (a * b)[k] = sum_j a[j] b[(k - j) mod n]."""
    n = len(a)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return (b[idx] * a[None, :]).sum(axis=1)


def self_convolution_check(x, k: int = 2) -> float:
    """max |FFT(x^k) - n^-(k-1) (x_hat * ... * x_hat)| with k-fold circular convolution."""
    if k not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {k}")
    sig = x if isinstance(x, Signal1D) else Signal1D(x)
    xs = sig.samples
    n = sig.n
    xh = fft(xs)
    conv = xh
    for _ in range(k - 1):
        conv = circular_convolve(conv, xh)
    return float(np.max(np.abs(fft(xs**k) - conv / float(n) ** (k - 1))))


def sinc(z):
    """sin(z)/z with sinc(0) = 1."""
    return np.sinc(np.asarray(z, dtype=np.float64) / np.pi)


def sinc_factor(gamma, a: float):
    """Fourier transform of the box of half-width a at frequency gamma: 2a sinc(2 pi gamma a)."""
    if not a > 0:
        raise ValueError("a must be positive")
    return 2 * a * sinc(2 * np.pi * np.asarray(gamma, dtype=np.float64) * a)


def sinc_quadrature(gamma: float, a: float, points: int = 10_001) -> complex:
    """Simpson estimate of the integral of exp(-2 pi i gamma t) over [-a, a]."""
    t = np.linspace(-a, a, points)
    phase = -2 * np.pi * gamma * t
    return complex(simpson(np.cos(phase), x=t), simpson(np.sin(phase), x=t))


def translation_damping(spectrum, a: float, freqs=None) -> np.ndarray:
    """Weight each bin by the box-average factor 2a sinc(2 pi gamma a).

    ``freqs`` defaults to the signed integer frequencies of an n-point DFT.
    """
    spectrum = np.asarray(spectrum)
    if freqs is None:
        n = len(spectrum)
        freqs = np.where(np.arange(n) < (n + 1) // 2, np.arange(n), np.arange(n) - n)
    return spectrum * sinc_factor(freqs, a)
