"""Exact discrete Fourier transforms of arbitrary length.

Composite lengths are split recursively by their smallest prime factor
(mixed-radix decimation in time).  Small prime lengths are evaluated with an
explicit DFT matrix; larger primes go through Bluestein's chirp-z algorithm,
which re-expresses the transform as a power-of-two circular convolution.  No
zero padding of the input ever takes place, so results equal the textbook
DFT up to rounding.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_DIRECT_MAX_PRIME = 31


def _smallest_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=256)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    # exponent reduced mod n before scaling keeps the phase exact
    return np.exp(-2j * np.pi * ((np.outer(k, k) % n) / n))


@lru_cache(maxsize=256)
def _twiddles(p: int, m: int) -> np.ndarray:
    n = p * m
    r = np.arange(p)[:, None]
    k = np.arange(m)[None, :]
    return np.exp(-2j * np.pi * (((r * k) % n) / n))


@lru_cache(maxsize=64)
def _bluestein_plan(n: int):
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1
    while size < 2 * n - 1:
        size <<= 1
    b = np.zeros(size, dtype=complex)
    b[:n] = np.conj(chirp)
    b[size - n + 1:] = np.conj(chirp[1:])[::-1]
    return chirp, size, _fft_last(b)


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    chirp, size, b_hat = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _ifft_last(_fft_last(a) * b_hat)
    return conv[..., :n] * chirp


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x.astype(complex, copy=True)
    p = _smallest_factor(n)
    if p == n:
        if n <= _DIRECT_MAX_PRIME:
            return x @ _dft_matrix(n).T
        return _bluestein(x)
    m = n // p
    # x[j*p + r] -> sub[r, j]
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    y = _fft_last(sub) * _twiddles(p, m)
    if p <= _DIRECT_MAX_PRIME:
        out = _dft_matrix(p) @ y
    else:
        out = np.swapaxes(_fft_last(np.swapaxes(y, -1, -2)), -1, -2)
    # out[k2, k1] holds X[k1 + m*k2]
    return out.reshape(x.shape[:-1] + (n,))


def _ifft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return np.conj(_fft_last(np.conj(x))) / n


def fft(x, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT along one axis."""
    x = np.moveaxis(np.asarray(x, dtype=complex), axis, -1)
    return np.moveaxis(_fft_last(x), -1, axis)


def ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse DFT along one axis (1/n normalization)."""
    x = np.moveaxis(np.asarray(x, dtype=complex), axis, -1)
    return np.moveaxis(_ifft_last(x), -1, axis)


def dft2(m) -> np.ndarray:
    """Unnormalized 2-D DFT ``F[u,v] = sum m[i,j] exp(-2*pi*i*(u*i/H + v*j/W))``.

    Returns a complex128 array of the same shape as ``m``.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"dft2 expects a matrix, got shape {m.shape}")
    return fft(fft(m, axis=1), axis=0)
