import numpy as np
import pytest

from rismlab.numerics import (
    RandomSource,
    as_complex_vector,
    dft,
    gaussian_cdf,
    gaussian_cdf_inv,
    idft,
    integrate_gaussian_weighted,
    sample_complex_gaussian,
)


def test_dft_impulse_and_constant():
    assert np.allclose(dft([1, 0, 0, 0]), np.ones(4))
    assert np.allclose(dft([1, 1, 1, 1]), [4, 0, 0, 0])
    assert np.allclose(idft([4, 0, 0, 0]), [1, 1, 1, 1])
    assert np.allclose(idft([1, 1, 1, 1]), [1, 0, 0, 0])


@pytest.mark.parametrize("L", [4, 8, 64, 256])
def test_dft_roundtrip(L):
    rng = RandomSource(100 + L)
    x = rng.complex_gaussian(1.0, L)
    back = idft(dft(x, L), L)
    assert np.max(np.abs(back - x)) / np.max(np.abs(x)) < 1e-12


def test_dft_length_mismatch():
    with pytest.raises(ValueError):
        dft([1, 2, 3], L=4)
    with pytest.raises(ValueError):
        idft([1, 2, 3], L=4)


def test_parseval():
    rng = RandomSource(7)
    x = rng.complex_gaussian(2.0, 128)
    X = dft(x)
    lhs = np.sum(np.abs(x) ** 2)
    rhs = np.sum(np.abs(X) ** 2) / 128
    assert abs(lhs - rhs) / lhs < 1e-10


def test_complex_gaussian_moments():
    rng = RandomSource(8)
    n = 100_000
    x = sample_complex_gaussian(rng, 1.0, n)
    power = np.mean(np.abs(x) ** 2)
    assert abs(power - 1.0) < 0.02
    # real and imaginary parts carry half the variance each
    assert abs(np.var(x.real) - 0.5) < 0.01
    assert abs(np.mean(x)) < 0.02


def test_complex_gaussian_zero_variance_and_determinism():
    assert np.all(sample_complex_gaussian(RandomSource(1), 0.0, 16) == 0)
    a = RandomSource(5).complex_gaussian(1.0, 100)
    b = RandomSource(5).complex_gaussian(1.0, 100)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_complex_gaussian(RandomSource(1), -1.0, 4)


def test_substreams_independent_and_stable():
    root = RandomSource(9)
    a = root.substream("noise").uniform(4)
    b = root.substream("attacker").uniform(4)
    assert not np.allclose(a, b)
    again = RandomSource(9).substream("noise").uniform(4)
    assert np.array_equal(a, again)


def test_stream_position_advances():
    rng = RandomSource(2)
    assert rng.position == 0
    rng.uniform(10)
    rng.standard_normal((2, 3))
    assert rng.position == 16


def test_gaussian_cdf_basics():
    assert gaussian_cdf(0.0) == 0.5
    assert gaussian_cdf_inv(0.5) == 0.0
    assert abs(gaussian_cdf(1.959964) - 0.975) < 1e-6
    for p in (0.0, 1.0):
        with pytest.raises(ValueError):
            gaussian_cdf_inv(p)


def test_gaussian_cdf_inverse_identity():
    x = np.linspace(-6, 6, 241)
    back = gaussian_cdf_inv(gaussian_cdf(x))
    assert np.max(np.abs(back - x)) < 1e-8


def test_quadrature_moments():
    one = integrate_gaussian_weighted(lambda v: np.ones_like(v))
    assert abs(one - 1.0) < 1e-9
    odd = integrate_gaussian_weighted(lambda v: v)
    assert abs(odd) < 1e-9
    second = integrate_gaussian_weighted(lambda v: v * v)
    assert abs(second - 1.0) < 1e-8


def test_quadrature_step_doubling():
    f = np.cos
    a = integrate_gaussian_weighted(f, steps=4096)
    b = integrate_gaussian_weighted(f, steps=8192)
    assert abs(a - b) < 1e-8


def test_complex_vector_validation():
    v = as_complex_vector([1 + 1j, 2], length=2)
    assert v.dtype == np.complex128
    with pytest.raises(ValueError):
        as_complex_vector([1, 2, 3], length=2)
    with pytest.raises(ValueError):
        as_complex_vector([np.nan, 1])
