"""Deterministic numerical substrate.

Complex vectors are plain 1-D numpy arrays of dtype complex128. The DFT
convention used throughout the package is the unnormalized forward transform
with the 1/L factor carried by the inverse, so ``idft(dft(x)) == x`` and the
tap-domain noise variance after ``idft`` is ``sigma_n^2 / L``.

Randomness is organized as named, counter-based streams: a ``RandomSource``
is identified by a 64-bit master seed plus a path of sub-stream names, and
two sources with the same (seed, path) always produce the same draws. This
makes every Monte Carlo experiment in the package bit-reproducible, also
under trial-level parallelism.
"""

from __future__ import annotations

import hashlib
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "RandomSource",
    "as_complex_vector",
    "dft",
    "idft",
    "sample_complex_gaussian",
    "gaussian_cdf",
    "gaussian_cdf_inv",
    "integrate_gaussian_weighted",
]

_MASK64 = (1 << 64) - 1


def _name_key(name: str) -> int:
    """Stable 64-bit key for a sub-stream name (never uses salted hash())."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RandomSource:
    """Seeded random stream with independent named sub-streams.

    Built on the counter-based Philox generator. ``substream(name)`` derives
    a child source whose draws are statistically independent of the parent's
    and of any sibling's, and depend only on (seed, path of names).
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed) & _MASK64
        self.path = tuple(_path)
        keys = [self.seed] + [_name_key(p) for p in self.path]
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(keys)))
        self.position = 0

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"

    def substream(self, name: str) -> "RandomSource":
        return RandomSource(self.seed, self.path + (str(name),))

    def standard_normal(self, shape) -> np.ndarray:
        out = self._gen.standard_normal(shape)
        self.position += out.size
        return out

    def uniform(self, n: int) -> np.ndarray:
        out = self._gen.random(int(n))
        self.position += out.size
        return out

    def uniform_phases(self, n: int) -> np.ndarray:
        """n i.i.d. phases uniform over [0, 2*pi)."""
        return 2.0 * np.pi * self.uniform(n)

    def complex_gaussian(self, variance: float, n: int) -> np.ndarray:
        return sample_complex_gaussian(self, variance, n)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        out = self._gen.integers(low, high, size=size)
        self.position += np.size(out)
        return out

    def permutation(self, n: int) -> np.ndarray:
        out = self._gen.permutation(int(n))
        self.position += out.size
        return out


def as_complex_vector(values, length: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-D complex array.

    Raises ValueError on NaN/Inf entries or a length mismatch.
    """
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D complex vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"expected length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError("complex vector contains non-finite entries")
    return arr


def dft(x, L: int | None = None) -> np.ndarray:
    """Unnormalized forward DFT: y[l] = sum_n x[n] exp(-j 2 pi l n / L)."""
    arr = np.asarray(x, dtype=np.complex128)
    n = arr.shape[-1]
    if L is not None and n != L:
        raise ValueError(f"dft: input length {n} does not match L={L}")
    return np.fft.fft(arr, axis=-1)

def idft(X, L: int | None = None) -> np.ndarray:
    """Inverse of dft, carrying the 1/L normalization."""
    arr = np.asarray(X, dtype=np.complex128)
    n = arr.shape[-1]
    if L is not None and n != L:
        raise ValueError(f"idft: input length {n} does not match L={L}")
    return np.fft.ifft(arr, axis=-1)


def sample_complex_gaussian(rng: RandomSource, variance: float, n: int) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian, per-entry E|x|^2 = variance."""
    if variance < 0:
        raise ValueError(f"variance must be nonnegative, got {variance}")
    n = int(n)
    if variance == 0.0:
        rng.standard_normal((2, n))  # keep the stream position advancing uniformly
        return np.zeros(n, dtype=np.complex128)
    z = rng.standard_normal((2, n))
    return math.sqrt(variance / 2.0) * (z[0] + 1j * z[1])


def gaussian_cdf(x):
    """Standard normal CDF (vectorized)."""
    return ndtr(x)


def gaussian_cdf_inv(p):
    """Standard normal quantile; domain error at p in {0, 1}."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("gaussian_cdf_inv requires 0 < p < 1")
    out = ndtri(p_arr)
    return float(out) if np.isscalar(p) or p_arr.ndim == 0 else out


def integrate_gaussian_weighted(
    f: Callable[[np.ndarray], np.ndarray],
    bound: float = 8.0,
    steps: int = 4096,
) -> float:
    """Composite-Simpson estimate of integral f(v) * phi(v) dv over [-bound, bound].

    ``f`` must accept a vector of evaluation points. The standard-normal tail
    beyond 8 sigma contributes < 1e-15, so the default bound loses nothing.
    """
    steps = int(steps)
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if steps % 2:
        steps += 1  # Simpson needs an even panel count
    v = np.linspace(-bound, bound, steps + 1)
    phi = np.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi)
    y = np.asarray(f(v), dtype=float) * phi
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite integrand in integrate_gaussian_weighted")
    h = (2.0 * bound) / steps
    weights = np.ones(steps + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(h / 3.0 * np.dot(weights, y))
