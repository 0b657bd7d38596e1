import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import disk_problem
from scatphase.disc import DiscSeriesConfig, neumann_traces_disc, scattered_field_disc, sigma_prime_disc
from scatphase.fem import compute_traces
from scatphase.geometry import boundary_quadrature, builtin_shape
from scatphase.phase import (AngularGrid, SolverParams, _hf, compute_point, g_integrand, integrate_sigma,
                             sigma_low, sigma_prime, sigma_prime_low, sweep, trace_AstardA, trace_dA)
from scatphase.specfun import hankel_products
from scatphase.traces import BoundaryTraceSet

DISK = builtin_shape("disk", a=1.0)


def _oracle_traces(lam, N, nodes=200):
    grid = AngularGrid(N)
    q = boundary_quadrature(DISK, nodes / (2 * np.pi))
    return neumann_traces_disc(lam, grid.angles, q), grid


def test_angular_grid():
    g = AngularGrid(8)
    np.testing.assert_allclose(np.diff(g.angles), 2 * np.pi / 8)
    np.testing.assert_allclose(np.sum(g.directions * g.perps, axis=1), 0, atol=1e-15)
    np.testing.assert_allclose(g.perps[0], [0, 1])
    with pytest.raises(ValueError):
        AngularGrid(1)


def test_g_against_series():
    lam = 3.0
    t, grid = _oracle_traces(lam, 6, nodes=24)
    x = t.quadrature.nodes
    r, th = np.hypot(*x.T), np.arctan2(x[:, 1], x[:, 0])
    d = 1e-5
    for l, om in enumerate(grid.angles):
        up, vp = scattered_field_disc(lam, r + d, th, om)
        u0, v0 = scattered_field_disc(lam, r + 2 * d, th, om)
        um, vm = scattered_field_disc(lam, r, th, om)
        # one-sided second-order differences at r = 1
        dr_u = (-3 * um + 4 * up - u0) / (2 * d)
        dr_v = (-3 * vm + 4 * vp - v0) / (2 * d)
        xw = x @ [np.cos(om), np.sin(om)]
        G = -xw * dr_u + dr_v
        np.testing.assert_allclose(g_integrand(t)[l], np.exp(-1j * lam * xw) * G, rtol=1e-6, atol=1e-6 * lam**2)


def test_g_perpendicular_nodes():
    t, grid = _oracle_traces(2.0, 4, nodes=16)
    x = t.quadrature.nodes
    w = grid.directions
    perp = np.abs(w @ x.T) < 1e-12
    assert perp.sum() >= 4
    np.testing.assert_allclose(g_integrand(t)[perp], t.dv[perp], atol=1e-13)


def test_g_conjugation():
    t, _ = _oracle_traces(2.5, 5)
    # u(-lam) = conj u(lam) and v(-lam) = conj v(lam)
    tm = BoundaryTraceSet(lam=-2.5, omegas=t.omegas, quadrature=t.quadrature, du=t.du.conj(), dv=t.dv.conj())
    np.testing.assert_allclose(g_integrand(tm), g_integrand(t).conj(), atol=1e-12)


def test_closure_diagnostic():
    for shape in (DISK, builtin_shape("square", side=1.0), builtin_shape("star")):
        q = boundary_quadrature(shape, 100.0)
        grid = AngularGrid(7)
        t = BoundaryTraceSet(lam=1.0, omegas=grid.angles, quadrature=q, du=np.zeros((7, len(q))),
                             dv=np.zeros((7, len(q))))
        assert trace_dA(t, grid)[1] < 1e-12


def test_h_without_scattered_field():
    q = boundary_quadrature(DISK, 200 / (2 * np.pi))
    grid = AngularGrid(10)
    zero = np.zeros((10, len(q)))
    t = BoundaryTraceSet(lam=4.0, omegas=grid.angles, quadrature=q, du=zero, dv=zero)
    H, _ = _hf(t, grid)
    # theta = omega: -i lam int <x', w_perp> ds = 0
    np.testing.assert_allclose(np.diag(H), 0, atol=1e-12)
    ref = np.array([[-4j * np.sum(q.weights * (q.tangents @ grid.perps[l]) *
                                  np.exp(4j * q.nodes @ (grid.directions[p] - grid.directions[l])))
                     for p in range(10)] for l in range(10)])
    np.testing.assert_allclose(H, ref, atol=1e-12)


def test_disk_lambda_one():
    t, grid = _oracle_traces(1.0, 50)
    pt = sigma_prime(t, grid)
    assert pt.value == pytest.approx(sigma_prime_disc(1.0), rel=1e-8)
    assert pt.value == pytest.approx(-1.006, abs=5e-4)
    assert pt.unitarity_residual < 1e-10


def test_angular_plateau_lambda_five():
    a = sigma_prime(*_oracle_traces(5.0, 50)).value
    b = sigma_prime(*_oracle_traces(5.0, 100)).value
    assert abs(a - b) <= 1e-6 * abs(b)


def test_disk_lambda_ten_oracle_traces():
    t, grid = _oracle_traces(10.0, 100, nodes=400)
    pt = sigma_prime(t, grid)
    assert abs(pt.value - sigma_prime_disc(10.0)) <= 1e-3 * abs(sigma_prime_disc(10.0))
    assert pt.unitarity_residual < 1e-8


def test_mismatched_grid():
    t, _ = _oracle_traces(1.0, 10)
    with pytest.raises(ValueError):
        trace_dA(t, AngularGrid(12))
    with pytest.raises(ValueError):
        trace_AstardA(t, AngularGrid(12))


def test_fem_disk_lambda_ten():
    _, _, system, op = disk_problem(10.0, 10.0)
    grid = AngularGrid(100)
    pt = sigma_prime(compute_traces(system, op, grid.angles), grid, mu=10.0)
    exact = sigma_prime_disc(10.0)
    assert abs(pt.value - exact) <= 0.01 * abs(exact)
    assert pt.unitarity_residual <= 0.01


def test_weyl_derivative_disk():
    assert sigma_prime_disc(20.0) == pytest.approx(-10.5, rel=0.02)


def test_low_energy_values():
    # n = 0 term of the disk series, -(2 / pi^2 lam) / (J0^2 + Y0^2)
    n0 = -(2 / (np.pi**2 * 0.01)) / hankel_products(0, 0.01)[0]
    assert sigma_prime_low(0.01) == pytest.approx(-2.020, abs=5e-4)
    assert sigma_prime_low(0.01) == pytest.approx(n0, rel=1e-3)
    assert sigma_low(0.01) == pytest.approx(-0.1023, abs=1e-4)
    assert abs(sigma_low(1e-300)) < 2e-3
    assert sigma_low(0.01, capacity=math.log(2.0)) != sigma_low(0.01)


@given(st.floats(1e-6, 0.5), st.floats(-1.0, 1.0))
def test_low_energy_antiderivative(lam, C):
    d = 1e-6 * lam
    fd = (sigma_low(lam + d, C) - sigma_low(lam - d, C)) / (2 * d)
    assert fd == pytest.approx(sigma_prime_low(lam, C), rel=1e-5)


def test_integrate_sigma_trapezoid():
    lams = np.linspace(0.3, 3.0, 28)
    sp = -0.5 - 0.2 * lams
    curve = integrate_sigma(lams, sp, capacity=0.0)
    expect = sigma_low(0.3) - 0.5 * (lams - 0.3) - 0.1 * (lams**2 - 0.09)
    np.testing.assert_allclose(curve.sigma, expect, atol=1e-12)
    assert curve.sigma[0] == sigma_low(0.3)
    assert curve.lam_min == 0.3


def test_integrate_sigma_continuity_disk():
    # the oracle-sampled curve continues the closed form within the local trapezoid error
    lams = np.linspace(0.05, 0.1, 51)
    sp = np.array([sigma_prime_disc(x) for x in lams])
    curve = integrate_sigma(lams, sp, capacity=0.0)
    h = lams[1] - lams[0]
    assert abs(curve.sigma[1] - (curve.sigma[0] + h * 0.5 * (sp[0] + sp[1]))) < 1e-15


def test_integrate_sigma_skips_failed():
    lams = np.array([0.3, 0.5, 0.7])
    curve = integrate_sigma(lams, [-1.0, np.nan, -1.0], capacity=0.0)
    assert np.isnan(curve.sigma[1])
    assert curve.sigma[2] == pytest.approx(sigma_low(0.3) - 0.4)


@pytest.mark.parametrize("kwargs", [
    {"lams": [0.3, 0.5], "sigma_primes": [-1, -1], "capacity": None},
    {"lams": [0.5, 0.3], "sigma_primes": [-1, -1], "capacity": 0.0},
    {"lams": [0.3, 0.5], "sigma_primes": [-1], "capacity": 0.0},
    {"lams": [0.3, 0.5], "sigma_primes": [np.nan, -1], "capacity": 0.0},
    {"lams": [0.3, 0.5], "sigma_primes": [-1, -1], "capacity": 0.0, "lam_min": 0.2},
])
def test_integrate_sigma_errors(kwargs):
    with pytest.raises(ValueError):
        integrate_sigma(**kwargs)


def test_solver_params_rules():
    p = SolverParams(mu=30, mu_overrides=((4.8, 5.0, 300),))
    assert p.mu_at(4.9) == 300 and p.mu_at(5.1) == 30
    assert p.N_at(1.0) == 20 and p.N_at(7.3) == 73
    assert SolverParams(N=40).N_at(9.0) == 40
    assert SolverParams(N_factor=4).N_at(12.0) == 48
    assert p.R_DOM_for(DISK) == pytest.approx(2.0)
    assert p.h_max_for(DISK) == pytest.approx(0.1)


def test_sweep_records_failures():
    params = SolverParams(mu=3, R_DOM=0.5)
    pts = sweep(DISK, [0.5, 1.0], params)
    assert all(p.failed for p in pts)
    assert "R_DOM" in pts[0].message
    with pytest.raises(ValueError):
        sweep(DISK, [1.0, 0.5], params)
    with pytest.raises(ValueError):
        sweep(DISK, [0.0, 0.5], params)


def test_sweep_order_and_threads():
    params = SolverParams(mu=4, N_factor=4)
    lams = [0.5, 1.0, 1.5]
    a = sweep(DISK, lams, params)
    b = sweep(DISK, lams, params, workers=2)
    assert [p.lam for p in b] == lams
    assert [p.raw for p in a] == [p.raw for p in b]
    for p in a:
        assert p.value == pytest.approx(sigma_prime_disc(p.lam), rel=0.01)


def test_compute_point_star_negative():
    pt = compute_point(builtin_shape("star"), 2.0, SolverParams(mu=5, N_factor=4))
    assert not pt.failed
    assert pt.value < 0
    assert pt.unitarity_residual < 0.01


def test_disk_sweep_against_oracle():
    from conftest import disk_sweep

    pts = disk_sweep()
    assert len(pts) == 50 and not any(p.failed for p in pts)
    err = [abs(p.value - sigma_prime_disc(p.lam)) / abs(sigma_prime_disc(p.lam)) for p in pts]
    assert max(err) <= 0.01
