import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inrcompress.fft import dft2, fft, ifft


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 7, 8, 12, 17, 23, 30, 37, 64, 97, 100, 127, 210])
def test_matches_naive_dft(n, rng):
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert np.allclose(fft(x), naive_dft(x), rtol=0, atol=1e-10 * max(1, n))


@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_inverse_round_trip(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    assert np.allclose(ifft(fft(x)).real, x, atol=1e-12)


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_dft2_parseval(h, w, seed):
    m = np.random.default_rng(seed).normal(size=(h, w))
    f = dft2(m)
    assert np.isclose(np.sum(np.abs(f) ** 2), h * w * np.sum(m * m), rtol=1e-10)


def test_dft2_against_separable_naive(rng):
    m = rng.normal(size=(17, 23))
    expect = np.array([naive_dft(row) for row in m])
    expect = np.array([naive_dft(col) for col in expect.T]).T
    assert np.allclose(dft2(m), expect, atol=1e-9)


def test_axis_argument(rng):
    x = rng.normal(size=(6, 10))
    cols = fft(x, axis=0)
    for j in range(10):
        assert np.allclose(cols[:, j], naive_dft(x[:, j]))
