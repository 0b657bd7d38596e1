"""Closed-form scattering data for a Dirichlet disk of radius ``a`` centred at 0.

For incidence direction ``omega`` the scattered field is

    u(lam, r, theta) = -sum_n d_n i^n 2 J_n(lam a) / H_n(lam a) H_n(lam r) cos(n (theta - omega))

with ``H_n = H^(1)_n``, ``d_0 = 1/2`` and ``d_n = 1`` otherwise.  At ``r = a``
this equals minus the Jacobi-Anger series of the plane wave.

The auxiliary field ``v`` solving ``(-Delta - lam^2) v = -2 i lam u`` with
``v = -<x, omega> exp(i lam <x, omega>)`` on the circle is ``v = -i d(u)/d(lam)``:
differentiating the Helmholtz equation for ``u`` in ``lam`` gives
``(-Delta - lam^2) du/dlam = 2 lam u`` and differentiating the boundary condition
gives ``du/dlam = -i <x, omega> exp(i lam <x, omega>)``.  All ``lam``-derivatives
below are taken term by term with exact Bessel identities.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .specfun import bessel_table, hankel_products
from .traces import BoundaryTraceSet

__all__ = [
    "DiscSeriesConfig",
    "sigma_prime_disc",
    "sigma_prime_disc_tail",
    "eigenphase",
    "scattered_field_disc",
    "neumann_traces_disc",
]


@dataclass(frozen=True)
class DiscSeriesConfig:
    """Series truncation ``n_max = ceil(c * lam * a) + extra``."""

    radius: float = 1.0
    c: float = 5.0
    extra: int = 4

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    def n_max(self, lam: float) -> int:
        return max(1, math.ceil(self.c * lam * self.radius)) + self.extra


def _check_lam(lam):
    if not lam > 0:
        raise ValueError(f"frequency must be positive, got {lam}")


def _terms(lam, config):
    nmax = config.n_max(lam)
    prod = hankel_products(nmax, lam * config.radius)
    mult = np.where(np.arange(nmax + 1) == 0, 1.0, 2.0)
    return -(2.0 / (np.pi**2 * lam)) * mult / prod


def sigma_prime_disc(lam: float, config: DiscSeriesConfig = DiscSeriesConfig()) -> float:
    """Derivative of the scattering phase of the disk, a sum over ``|n| <= n_max``."""
    _check_lam(lam)
    return float(np.sum(_terms(lam, config)))


def sigma_prime_disc_tail(lam: float, config: DiscSeriesConfig = DiscSeriesConfig()) -> float:
    """Size of the last retained (pair of) terms; the neglected tail is smaller."""
    _check_lam(lam)
    return float(abs(_terms(lam, config)[-1]))


def eigenphase(n: int, lam: float, radius: float = 1.0) -> complex:
    """Eigenvalue ``(-1)^(n+1) H^(2)_|n| / H^(1)_|n|`` of ``S(lam)`` at argument ``lam a``."""
    _check_lam(lam)
    m = abs(int(n))
    J, Y, _, _ = bessel_table(m, np.array([lam * radius]))
    h1 = complex(J[m, 0], Y[m, 0])
    if not np.isfinite(h1.imag):
        raise OverflowError(f"Y_{m}({lam * radius}) overflows double precision")
    sign = 1.0 if (m + 1) % 2 == 0 else -1.0
    # H2 / H1 = conj(H1) / H1 = exp(-2i arg H1)
    return sign * complex(np.exp(-2j * np.angle(h1)))


def _coefficients(lam, config, nmax):
    """``c_n`` and ``dc_n/dlam`` of the series in ``H_n(lam r)``."""
    a = config.radius
    z = lam * a
    J, Y, _, _ = bessel_table(nmax, np.array([z]))
    J, Y = J[:, 0], Y[:, 0]
    if not np.all(np.isfinite(Y)):
        raise OverflowError(f"disk series needs Y_n({z}) beyond double range")
    H = J + 1j * Y
    n = np.arange(nmax + 1)
    pref = np.where(n == 0, 0.5, 1.0) * (1j) ** (n % 4)
    c = -2.0 * pref * J / H
    # d/dlam [J(lam a)/H(lam a)] = a (J' H - J H') / H^2 = -2i / (pi lam H^2)  (Wronskian)
    dc = -2.0 * pref * (-2j / (np.pi * lam)) / H**2
    return c, dc


def scattered_field_disc(lam, r, theta, omega, config: DiscSeriesConfig = DiscSeriesConfig()):
    """Scattered field ``u`` and auxiliary field ``v = -i du/dlam`` at polar points.

    ``omega`` is the incidence angle.  Returns complex arrays shaped like ``r``.
    """
    _check_lam(lam)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r < config.radius * (1 - 1e-12)):
        raise ValueError("field requested inside the disk")
    nmax = config.n_max(lam)
    c, dc = _coefficients(lam, config, nmax)
    J, Y, dJ, dY = bessel_table(nmax, lam * r)
    H, dH = J + 1j * Y, dJ + 1j * dY
    ang = np.cos(np.multiply.outer(np.arange(nmax + 1), theta - omega))
    cs = c.reshape((-1,) + (1,) * r.ndim)
    dcs = dc.reshape((-1,) + (1,) * r.ndim)
    u = np.sum(cs * H * ang, axis=0)
    du_dlam = np.sum((dcs * H + cs * r * dH) * ang, axis=0)
    return u, -1j * du_dlam


def _radial_traces(lam, config, nmax):
    """Per-order coefficients of ``d_r u`` and ``d_r v`` at ``r = a``."""
    a = config.radius
    z = lam * a
    c, dc = _coefficients(lam, config, nmax)
    J, Y, dJ, dY = bessel_table(nmax, np.array([z]))
    H, dH = (J + 1j * Y)[:, 0], (dJ + 1j * dY)[:, 0]
    n = np.arange(nmax + 1)
    ddH = -dH / z - (1.0 - n**2 / z**2) * H
    dr_u = c * lam * dH
    dlam_dr_u = dc * lam * dH + c * dH + c * lam * a * ddH
    return dr_u, -1j * dlam_dr_u


def neumann_traces_disc(lam, omegas, quadrature, config: DiscSeriesConfig = DiscSeriesConfig()) -> BoundaryTraceSet:
    """Exact ``d_nu u`` and ``d_nu v`` at the quadrature nodes for each incidence angle."""
    _check_lam(lam)
    x = quadrature.nodes
    rad = np.hypot(x[:, 0], x[:, 1])
    if np.max(np.abs(rad - config.radius)) > 1e-10 * config.radius:
        raise ValueError("quadrature nodes are not on the disk boundary")
    nmax = config.n_max(lam)
    tu, tv = _radial_traces(lam, config, nmax)
    theta = np.arctan2(x[:, 1], x[:, 0])
    omegas = np.asarray(omegas, dtype=float)
    ang = np.cos(np.arange(nmax + 1)[:, None, None] * (theta[None, None, :] - omegas[None, :, None]))
    du = np.einsum("n,nlk->lk", tu, ang)
    dv = np.einsum("n,nlk->lk", tv, ang)
    return BoundaryTraceSet(lam=float(lam), omegas=omegas, quadrature=quadrature, du=du, dv=dv)
