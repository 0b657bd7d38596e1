import numpy as np
import pytest
import scipy.special as sc
from hypothesis import given, strategies as st

from scatphase.specfun import bessel_jy, bessel_table, hankel1, hankel_products


def test_small_argument_limit():
    assert bessel_jy(0, 1e-8).J == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("x", [0.01, 1.0, 10.0, 100.0])
def test_wronskian_grid(x):
    J, Y, dJ, dY = bessel_table(50, np.array([x]))
    ok = np.isfinite(Y[:, 0])
    w = (J * dY - dJ * Y)[ok, 0]
    assert np.max(np.abs(w * np.pi * x / 2 - 1)) < 1e-10


def test_j0_y0_at_one_against_integral_representations():
    from scipy.integrate import quad

    j0 = quad(lambda t: np.cos(np.sin(t)), 0, np.pi, epsabs=1e-14)[0] / np.pi
    # Y0(x) = (1/pi) int_0^pi sin(x sin t) dt - (2/pi) int_0^inf exp(-x sinh t) dt
    y0 = (quad(lambda t: np.sin(np.sin(t)), 0, np.pi, epsabs=1e-14)[0]
          - 2 * quad(lambda t: np.exp(-np.sinh(t)), 0, 40.0, epsabs=1e-14)[0]) / np.pi
    b = bessel_jy(0, 1.0)
    assert b.J == pytest.approx(j0, rel=1e-13)
    assert b.Y == pytest.approx(y0, rel=1e-12)


def test_against_scipy_table():
    x = np.array([0.05, 0.7, 3.0, 8.0, 17.5, 24.9, 25.1, 40.0, 120.0])
    J, Y, dJ, dY = bessel_table(60, x)
    n = np.arange(61)[:, None]
    ok = np.abs(sc.yv(n, x)) < 1e250
    assert np.allclose(J, sc.jv(n, x), rtol=1e-11, atol=1e-300)
    assert np.all(np.abs(Y[ok] / sc.yv(n, x)[ok] - 1) < 1e-10)
    assert np.all(np.abs(dJ - sc.jvp(n, x)) <= 1e-11 * np.maximum(np.abs(sc.jvp(n, x)), 1e-290))


def test_hankel_product_value():
    # J0(1)^2 + Y0(1)^2
    assert hankel_products(0, 1.0)[0] == pytest.approx(0.5933, abs=5e-5)
    assert hankel_products(0, 1.0)[0] == pytest.approx(sc.jv(0, 1.0) ** 2 + sc.yv(0, 1.0) ** 2, rel=1e-13)


def test_hankel_products_grow_past_turning_point():
    x = 7.0
    p = hankel_products(60, x)
    assert np.all(p > 0)
    assert np.all(np.diff(p[8:]) > 0)


def test_h2_is_conjugate():
    b = bessel_jy(3, 2.5)
    assert b.H2 == b.H1.conjugate()
    H, dH = hankel1(3, np.array([2.5]))
    assert H[3, 0] == b.H1


def test_overflow_is_an_error():
    with pytest.raises(OverflowError):
        bessel_jy(400, 0.01)
    with pytest.raises(OverflowError):
        hankel_products(400, 0.01)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_domain_errors(bad):
    with pytest.raises(ValueError):
        bessel_jy(0, bad)


def test_wronskian_random_pairs(rng):
    x = 10 ** rng.uniform(-2, 2, 10_000)
    n = rng.integers(0, 201, 10_000)
    J, Y, dJ, dY = bessel_table(200, x)
    idx = np.arange(x.size)
    j, y, dj, dy = J[n, idx], Y[n, idx], dJ[n, idx], dY[n, idx]
    ok = np.isfinite(y) & np.isfinite(dy) & (np.abs(y) < 1e290)
    assert ok.mean() > 0.5
    rel = np.abs((j[ok] * dy[ok] - dj[ok] * y[ok]) * np.pi * x[ok] / 2 - 1)
    assert rel.max() < 1e-9


@given(st.floats(0.01, 60.0), st.integers(1, 80))
def test_recurrence_residual(x, nmax):
    J, _, _, _ = bessel_table(nmax + 1, np.array([x]))
    J = J[:, 0]
    n = np.arange(1, nmax + 1)
    res = (2 * n / x) * J[n] - J[n - 1] - J[n + 1]
    scale = np.abs(J[n - 1]) + np.abs(J[n + 1]) + np.abs(2 * n / x * J[n])
    big = np.abs(J[n]) > 1e-200
    assert np.all(np.abs(res[big]) <= 1e-9 * scale[big])
