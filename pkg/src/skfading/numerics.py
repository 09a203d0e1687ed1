"""Shared numerical primitives.

Gaussian tail functions, scalar modulo-lattice arithmetic, reproducible
dither streams, unitary DFT pairs, circulant channel spectra and
water-filling power allocation. Everything here is pure except for
DitherStream, whose only mutation is its position counter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "InfeasibleError",
    "q_tail",
    "q_tail_inv",
    "Lattice",
    "modulo_d",
    "modulo_reduce",
    "modulo_distributive_check",
    "DitherStream",
    "dither_next",
    "philox_key",
    "dft",
    "idft",
    "SpectralDecomposition",
    "channel_spectrum",
    "circulant_matrix",
    "water_fill",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

_MASK128 = (1 << 128) - 1


class InfeasibleError(ValueError):
    """Requested parameters admit no valid configuration."""


# ---------------------------------------------------------------------------
# Gaussian tail
# ---------------------------------------------------------------------------

def q_tail(x: float) -> float:
    """Upper tail Q(x) of the standard normal distribution."""
    if not math.isfinite(x):
        raise ValueError(f"q_tail requires finite input, got {x!r}")
    return 0.5 * math.erfc(x / _SQRT2)


def q_tail_inv(p: float) -> float:
    """Inverse of q_tail on (0, 1).

    Values above 0.5 are handled by symmetry and yield negative results.
    Bracketing bisection refined by one Newton step; the roundtrip
    q_tail(q_tail_inv(p)) is exact to well below 1e-12.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"q_tail_inv requires p in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -q_tail_inv(1.0 - p)
    lo, hi = 0.0, 8.0
    while q_tail(hi) > p:
        lo, hi = hi, 2.0 * hi
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if q_tail(mid) > p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    density = math.exp(-0.5 * x * x) / _SQRT2PI
    if density > 0.0:
        x += (q_tail(x) - p) / density
    return x


# ---------------------------------------------------------------------------
# Scalar modulo lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lattice:
    """Scalar lattice spacing * Z used for modulo reduction."""

    spacing: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.spacing) and self.spacing > 0.0):
            raise ValueError(f"lattice spacing must be positive, got {self.spacing!r}")


def modulo_reduce(x, spacing):
    """Reduce x into [-spacing/2, spacing/2) against the nearest lattice point.

    Offset of x from its nearest multiple of ``spacing``; a tie (x exactly
    halfway between two lattice points) resolves to -spacing/2, keeping the
    half-open range. Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    r = x - spacing * np.floor(x / spacing + 0.5)
    # guard the half-open range against roundoff at the boundary
    half = 0.5 * spacing
    r = np.where(r < -half, r + spacing, r)
    r = np.where(r >= half, r - spacing, r)
    if r.ndim == 0:
        return float(r)
    return r


def modulo_d(x: float, lattice: Lattice) -> float:
    """Scalar modulo-lattice reduction into [-d/2, d/2)."""
    if not math.isfinite(x):
        raise ValueError(f"modulo_d requires finite input, got {x!r}")
    return float(modulo_reduce(x, lattice.spacing))


def modulo_distributive_check(
    x: float, d1: float, d2: float, lattice: Lattice, tol: float = 1e-12
) -> bool:
    """Self-test of the distributive law of the modulo reduction.

    reduce(reduce(x + d1) + d2 - x) == reduce(d1 + d2) for every real
    x, d1, d2; holds exactly because the inner lattice point drops out by
    periodicity.
    """
    lhs = modulo_d(modulo_d(x + d1, lattice) + d2 - x, lattice)
    rhs = modulo_d(d1 + d2, lattice)
    return abs(lhs - rhs) <= tol


# ---------------------------------------------------------------------------
# Dither streams
# ---------------------------------------------------------------------------

def philox_key(seed: int, index: int = 0, tag: int = 0) -> int:
    """Pack (seed, index, tag) into one 128-bit Philox key.

    Layout: seed in bits 64..127, index in bits 8..63, tag in bits 0..7.
    Distinct keys give independent substreams, so transmitter, receiver and
    analysis code can derive identical sequences without message passing.
    """
    return (
        ((seed & 0xFFFFFFFFFFFFFFFF) << 64)
        | ((index & 0x00FFFFFFFFFFFFFF) << 8)
        | (tag & 0xFF)
    )


@dataclass
class DitherStream:
    """Reproducible stream of uniforms on [-spacing/2, spacing/2).

    Two streams built from the same (seed, spacing) produce identical
    sequences; a stream created at position k continues exactly where a
    fresh stream would be after k draws.
    """

    spacing: float
    seed: int
    position: int = 0
    _gen: Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.spacing) and self.spacing > 0.0):
            raise ValueError(f"dither spacing must be positive, got {self.spacing!r}")
        if self.position < 0:
            raise ValueError("position must be nonnegative")
        self._gen = Generator(Philox(key=self.seed & _MASK128))
        if self.position:
            self._gen.random(self.position)

    def next(self) -> float:
        self.position += 1
        return (self._gen.random() - 0.5) * self.spacing

    def take(self, count: int) -> np.ndarray:
        """Draw ``count`` values at once (same sequence as repeated next())."""
        self.position += count
        return (self._gen.random(count) - 0.5) * self.spacing


def dither_next(stream: DitherStream) -> float:
    return stream.next()


# ---------------------------------------------------------------------------
# Unitary DFT and circulant spectra
# ---------------------------------------------------------------------------

def dft(x) -> np.ndarray:
    """Normalized (unitary) DFT: y_k = K^{-1/2} sum_n e^{-2pi j nk/K} x_n."""
    x = np.asarray(x, dtype=complex)
    if x.size == 0:
        raise ValueError("dft requires a nonempty input")
    return np.fft.fft(x) / math.sqrt(x.size)


def idft(x) -> np.ndarray:
    """Inverse of dft (also unitary)."""
    x = np.asarray(x, dtype=complex)
    if x.size == 0:
        raise ValueError("idft requires a nonempty input")
    return np.fft.ifft(x) * math.sqrt(x.size)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Diagonalization data of a circulant channel matrix.

    ``gains`` are the unnormalized DFT of the zero-padded impulse response,
    i.e. the eigenvalues of the circulant matrix under the unitary DFT pair
    above.
    """

    size: int
    gains: np.ndarray

    def circulant(self) -> np.ndarray:
        """Dense circulant matrix with these eigenvalues (for cross-checks)."""
        first_col = np.fft.ifft(self.gains)
        return circulant_matrix(first_col)


def channel_spectrum(h, size: int) -> SpectralDecomposition:
    """Eigenvalues of the K x K circulant built from taps h (zero padded)."""
    h = np.asarray(h, dtype=complex)
    if h.size < 1:
        raise ValueError("channel_spectrum requires at least one tap")
    if size < h.size:
        raise ValueError(f"size {size} is smaller than the tap count {h.size}")
    padded = np.concatenate([h, np.zeros(size - h.size, dtype=complex)])
    return SpectralDecomposition(size=size, gains=np.fft.fft(padded))


def circulant_matrix(first_col) -> np.ndarray:
    """Dense circulant matrix with the given first column."""
    c = np.asarray(first_col, dtype=complex)
    k = c.size
    idx = (np.arange(k)[:, None] - np.arange(k)[None, :]) % k
    return c[idx]


# ---------------------------------------------------------------------------
# Water-filling
# ---------------------------------------------------------------------------

def water_fill(gains, noise_var: float, total_power: float):
    """Water-filling power allocation over parallel channels.

    gains are the channel power gains ||H_k||^2; returns (powers, level)
    with powers_k = max(level - noise_var/gains_k, 0) and
    sum(powers) == total_power. The level is found exactly by an
    active-set sweep over the sorted noise thresholds.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("gains must be a nonempty 1-D sequence")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("gains must be finite and nonnegative")
    if not (noise_var > 0 and math.isfinite(noise_var)):
        raise ValueError(f"noise variance must be positive, got {noise_var!r}")
    if not (total_power > 0 and math.isfinite(total_power)):
        raise ValueError(f"total power must be positive, got {total_power!r}")
    usable = np.flatnonzero(g > 0)
    if usable.size == 0:
        raise InfeasibleError("water_fill: all channel gains are zero")

    thresholds = noise_var / g[usable]
    order = np.argsort(thresholds)
    tsorted = thresholds[order]
    csum = np.cumsum(tsorted)
    level = None
    active = usable.size
    for m in range(1, usable.size + 1):
        candidate = (total_power + csum[m - 1]) / m
        if candidate >= tsorted[m - 1] and (m == usable.size or candidate <= tsorted[m]):
            level = candidate
            active = m
            break
    if level is None:  # numerically impossible; the sweep always brackets
        level = (total_power + csum[-1]) / usable.size
    powers = np.zeros_like(g)
    chosen = usable[order[:active]]
    powers[chosen] = level - tsorted[:active]
    return powers, float(level)
