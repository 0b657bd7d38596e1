import functools

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@functools.lru_cache(maxsize=None)
def disk_problem(lam, mu, R_DOM=2.0, solver="auto"):
    """Mesh, space, factorized system and trace operator for the unit disk."""
    from scatphase.fem import assemble, trace_operator
    from scatphase.geometry import builtin_shape
    from scatphase.mesh import ResolutionRule, build_annular_mesh, quadratic_nodes

    shape = builtin_shape("disk", a=1.0)
    mesh = build_annular_mesh(shape, R_DOM, rule=ResolutionRule(mu, lam))
    space = quadratic_nodes(mesh, shape)
    system = assemble(space, lam, solver=solver)
    return shape, space, system, trace_operator(space, shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@functools.lru_cache(maxsize=None)
def disk_sigma_oracle(lam_max=20.0):
    """Oracle ``sigma`` of the unit disk on a grid up to ``lam_max``.

    Seeded with the low-energy closed form at 1e-6, then Simpson's rule on the
    series ``sigma'`` (log-spaced below 1, uniform above).
    """
    from scipy.integrate import cumulative_simpson

    from scatphase.disc import sigma_prime_disc
    from scatphase.phase import sigma_low

    lo = 1e-6
    t = np.linspace(np.log(lo), 0.0, 801)
    lam_lo = np.exp(t)
    sp_lo = np.array([sigma_prime_disc(x) for x in lam_lo])
    s_lo = sigma_low(lo) + cumulative_simpson(sp_lo * lam_lo, x=t, initial=0.0)
    lam_hi = np.linspace(1.0, lam_max, int(200 * lam_max) + 1)
    sp_hi = np.array([sigma_prime_disc(x) for x in lam_hi])
    s_hi = s_lo[-1] + cumulative_simpson(sp_hi, x=lam_hi, initial=0.0)
    return np.concatenate([lam_lo, lam_hi[1:]]), np.concatenate([s_lo, s_hi[1:]])


@functools.lru_cache(maxsize=None)
def disk_sweep():
    """FEM sweep of the unit disk over [3, 20] (50 points, mu=8, N=4 lam)."""
    from scatphase.geometry import builtin_shape
    from scatphase.phase import SolverParams, sweep

    lams = np.linspace(3.0, 20.0, 50)
    return sweep(builtin_shape("disk", a=1.0), lams, SolverParams(mu=8, N_factor=4, h_max=np.inf))


@functools.lru_cache(maxsize=None)
def star_sweep():
    """FEM sweep of r = 1 + 0.3 cos(5 theta) over [0.3, 15] (step 0.5, mu=5, N=4 lam)."""
    from scatphase.geometry import builtin_shape
    from scatphase.phase import SolverParams, sweep

    lams = np.append(np.arange(0.3, 14.9, 0.5), 15.0)
    return sweep(builtin_shape("star", a=1.0, eps=0.3, k=5), lams, SolverParams(mu=5, N_factor=4))
