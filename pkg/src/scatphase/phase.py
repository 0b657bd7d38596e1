"""Scattering phase derivative from boundary traces, and its integration in ``lam``.

With ``S(lam) = I + A(lam)``,

    sigma'(lam) = (tr dA/dlam + tr A* dA/dlam) / (2 pi i).

Both traces are written as boundary integrals of the Neumann traces of ``u`` and
``v`` (see :mod:`scatphase.disc` for the definition of ``v``) and the angular
integrals are replaced by the trapezoidal rule on ``N`` equispaced angles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .specfun import EULER_GAMMA
from .traces import BoundaryTraceSet

__all__ = [
    "AngularGrid",
    "PhasePoint",
    "PhaseCurve",
    "g_integrand",
    "trace_dA",
    "trace_AstardA",
    "sigma_prime",
    "sigma_prime_low",
    "sigma_low",
    "integrate_sigma",
    "SolverParams",
    "discretize",
    "compute_point",
    "sweep",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AngularGrid:
    """Equispaced angles ``2 pi l / N``."""

    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("angular grid needs N >= 2")

    @property
    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    @property
    def directions(self) -> np.ndarray:
        t = self.angles
        return np.column_stack([np.cos(t), np.sin(t)])

    @property
    def perps(self) -> np.ndarray:
        t = self.angles
        return np.column_stack([-np.sin(t), np.cos(t)])

    @property
    def weight(self) -> float:
        return 2 * np.pi / self.N


@dataclass
class PhasePoint:
    lam: float
    raw: complex
    trace_dA: complex
    trace_AstardA: complex
    N: int
    mu: float = float("nan")
    closure: float = 0.0
    failed: bool = False
    message: str = ""

    @property
    def value(self) -> float:
        return self.raw.real

    @property
    def unitarity_residual(self) -> float:
        """``|Im sigma'_raw| / |Re sigma'_raw|``; vanishes for exact traces."""
        return abs(self.raw.imag) / max(abs(self.raw.real), 1e-300)


@dataclass
class PhaseCurve:
    lam: np.ndarray
    sigma_prime: np.ndarray
    sigma: np.ndarray
    lam_min: float
    capacity: float
    points: list = field(default_factory=list)


def _check(traces: BoundaryTraceSet, grid: AngularGrid):
    if len(traces.omegas) != grid.N or not np.allclose(traces.omegas, grid.angles, atol=1e-13):
        raise ValueError(f"traces were computed for {len(traces.omegas)} angles, grid has N={grid.N}")


def g_integrand(traces: BoundaryTraceSet, lam: float | None = None) -> np.ndarray:
    """``exp(-i lam <x, w>) G(lam, x, w)`` with ``G = -<x, w> d_nu u + d_nu v``.

    Returns shape ``(N, K)``: one row per incidence angle, one column per node.
    """
    lam = traces.lam if lam is None else lam
    q = traces.quadrature
    w = np.column_stack([np.cos(traces.omegas), np.sin(traces.omegas)])
    xw = w @ q.nodes.T
    G = -xw * traces.du + traces.dv
    return np.exp(-1j * lam * xw) * G


def trace_dA(traces: BoundaryTraceSet, grid: AngularGrid) -> tuple[complex, float]:
    """``tr dA/dlam`` and the closure diagnostic ``max_w |int <x', w_perp> ds|``."""
    _check(traces, grid)
    q = traces.quadrature
    value = grid.weight / (4 * np.pi) * np.sum(g_integrand(traces) @ q.weights)
    closure = float(np.max(np.abs(grid.perps @ (q.tangents.T @ q.weights))))
    return complex(value), closure


def _hf(traces: BoundaryTraceSet, grid: AngularGrid):
    lam = traces.lam
    q = traces.quadrature
    x, wts = q.nodes, q.weights
    dirs, perps = grid.directions, grid.perps
    P = x @ dirs.T  # <x_k, theta_p>, also <x_k, omega_l> since both grids agree
    E = np.exp(1j * lam * P)  # (K, N)
    tw = perps @ q.tangents.T  # <x'_k, omega_l^perp>, (N, K)
    Ew = E.T  # exp(i lam <x_k, omega_l>), (N, K)
    xw = P.T
    h = (-1j * lam * tw * np.conj(Ew) + np.conj(traces.du)) * wts
    H = h @ E
    a = (tw * (1j - lam * xw) * Ew + 1j * traces.dv) * wts
    b = (lam * tw * Ew - 1j * traces.du) * wts
    Ec = np.conj(E)
    F = a @ Ec + b @ (Ec * P)
    return H, F


def trace_AstardA(traces: BoundaryTraceSet, grid: AngularGrid) -> complex:
    """``tr A* dA/dlam`` via separate ``x``- and ``y``-integrals ``H`` and ``F``."""
    _check(traces, grid)
    H, F = _hf(traces, grid)
    return complex(grid.weight**2 / (16 * np.pi**2) * np.sum(H * F))


def sigma_prime(traces: BoundaryTraceSet, grid: AngularGrid | None = None, mu: float = float("nan")) -> PhasePoint:
    grid = AngularGrid(len(traces.omegas)) if grid is None else grid
    t1, closure = trace_dA(traces, grid)
    t2 = trace_AstardA(traces, grid)
    raw = (t1 + t2) / (2j * np.pi)
    pt = PhasePoint(lam=traces.lam, raw=raw, trace_dA=t1, trace_AstardA=t2, N=grid.N, mu=mu, closure=closure)
    log.debug("lam=%.6g sigma'=%.10g%+.3gi closure=%.2e", pt.lam, raw.real, raw.imag, closure)
    return pt


# ---------------------------------------------------------------------------
# low-energy segment and integration


def _t(lam, capacity):
    return 2.0 * (np.log(np.asarray(lam, dtype=float) / 2.0) + EULER_GAMMA + capacity)


def sigma_prime_low(lam, capacity: float = 0.0):
    """Leading low-energy form ``-(2/lam) / (t^2 + pi^2)``, ``t = 2 (log(lam/2) + gamma + C)``."""
    t = _t(lam, capacity)
    return -(2.0 / np.asarray(lam, dtype=float)) / (t * t + np.pi**2)


def sigma_low(lam, capacity: float = 0.0):
    """Antiderivative of :func:`sigma_prime_low` vanishing as ``lam -> 0+``."""
    t = _t(lam, capacity)
    return -np.arctan(t / np.pi) / np.pi - 0.5


def integrate_sigma(lams, sigma_primes, lam_min: float | None = None, capacity: float | None = None,
                    points=None) -> PhaseCurve:
    """Integrate sampled ``sigma'`` to ``sigma`` with ``sigma(0) = 0``.

    Below ``lam_min`` (default: the first sample) the low-energy closed form is
    used; from there the composite trapezoidal rule runs over the samples.
    """
    lams = np.asarray(lams, dtype=float)
    sp = np.asarray(sigma_primes, dtype=float)
    if capacity is None:
        raise ValueError("the logarithmic capacity of the obstacle is required for the low-energy segment")
    if lams.ndim != 1 or len(lams) != len(sp) or len(lams) == 0:
        raise ValueError("need matching 1-D arrays of samples")
    if np.any(np.diff(lams) <= 0) or lams[0] <= 0:
        raise ValueError("frequencies must be positive and increasing")
    lam_min = float(lams[0]) if lam_min is None else float(lam_min)
    if not math.isclose(lam_min, lams[0], rel_tol=1e-12):
        raise ValueError("samples must start at lam_min")
    sigma = np.empty_like(sp)
    sigma[0] = sigma_low(lam_min, capacity)
    ok = np.isfinite(sp)
    if not ok[0]:
        raise ValueError("sigma' is missing at lam_min")
    # skip failed samples, integrate across the gap
    idx = np.flatnonzero(ok)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (sp[idx][1:] + sp[idx][:-1]) * np.diff(lams[idx]))])
    sigma[:] = np.nan
    sigma[idx] = sigma_low(lam_min, capacity) + cum
    return PhaseCurve(lam=lams, sigma_prime=sp, sigma=sigma, lam_min=lam_min, capacity=float(capacity),
                      points=list(points) if points is not None else [])


# ---------------------------------------------------------------------------
# finite element pipeline and sweeps


@dataclass(frozen=True)
class SolverParams:
    """Discretization parameters for one frequency or a sweep.

    ``mu`` sets the resolution ``mu (1 + lam^(1/4))`` points per wavelength and
    ``mu_overrides`` replaces it on closed intervals ``(lo, hi, mu)``.  With
    ``pml_width=None`` the layer is five cells wide.  ``N=None`` uses
    ``max(ceil(N_factor lam), N_min)`` angles.  ``h_max`` caps the spacing so that
    the geometry stays resolved at low frequency.
    """

    mu: float = 30.0
    R_DOM: float | None = None
    pml_width: float | None = None
    N: int | None = None
    N_factor: float = 10.0
    N_min: int = 20
    h_max: float | None = None
    mu_overrides: tuple = ()
    solver: str = "auto"
    trace_order: int = 3
    mesh_path: str | None = None

    def mu_at(self, lam: float) -> float:
        for lo, hi, mu in self.mu_overrides:
            if lo <= lam <= hi:
                return float(mu)
        return float(self.mu)

    def N_at(self, lam: float) -> int:
        if self.N is not None:
            return int(self.N)
        return max(int(math.ceil(self.N_factor * lam - 1e-9)), int(self.N_min))

    def R_DOM_for(self, shape) -> float:
        return float(self.R_DOM) if self.R_DOM is not None else 2.0 * shape.circumradius

    def h_max_for(self, shape) -> float:
        return float(self.h_max) if self.h_max is not None else 0.1 * shape.circumradius


def discretize(shape, lam: float, params: SolverParams, mu: float | None = None):
    """Mesh, quadratic space and factorized system for one frequency."""
    from .fem import assemble
    from .mesh import ResolutionRule, build_annular_mesh, import_mesh, quadratic_nodes

    R_DOM = params.R_DOM_for(shape)
    if params.mesh_path is not None:
        mesh = import_mesh(params.mesh_path, shape)
        mesh.R_DOM = R_DOM
    else:
        rule = ResolutionRule(params.mu_at(lam) if mu is None else mu, lam)
        spacing = min(rule.spacing, params.h_max_for(shape))
        R_PML = None if params.pml_width is None else R_DOM + params.pml_width
        mesh = build_annular_mesh(shape, R_DOM, R_PML, spacing=spacing)
    space = quadratic_nodes(mesh, shape)
    system = assemble(space, lam, R_DOM=R_DOM, solver=params.solver)
    return space, system


def compute_point(shape, lam: float, params: SolverParams, N: int | None = None,
                  mu: float | None = None) -> PhasePoint:
    """``sigma'(lam)`` from finite element traces; failures are returned, not raised."""
    from .fem import FemError, compute_traces, trace_operator
    from .mesh import MeshError
    from .geometry import GeometryError

    mu = params.mu_at(lam) if mu is None else mu
    N = params.N_at(lam) if N is None else N
    try:
        space, system = discretize(shape, lam, params, mu)
        op = trace_operator(space, shape, params.trace_order)
        grid = AngularGrid(N)
        pt = sigma_prime(compute_traces(system, op, grid.angles), grid, mu=mu)
    except (FemError, MeshError, GeometryError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
        log.warning("lam=%.6g failed: %s", lam, exc)
        nan = complex(np.nan, np.nan)
        return PhasePoint(lam=float(lam), raw=nan, trace_dA=nan, trace_AstardA=nan, N=N, mu=mu,
                          closure=float("nan"), failed=True, message=str(exc))
    if pt.unitarity_residual > 0.01:
        log.info("lam=%.6g: |Im/Re| = %.3g, the run is not converged", lam, pt.unitarity_residual)
    return pt


def sweep(shape, lams, params: SolverParams, workers: int = 1, progress=None) -> list:
    """``compute_point`` over a sorted positive frequency grid.

    Points are independent; with ``workers > 1`` they run in a thread pool and
    are returned in grid order either way.
    """
    lams = np.asarray(lams, dtype=float)
    if lams.ndim != 1 or np.any(lams <= 0) or np.any(np.diff(lams) <= 0):
        raise ValueError("frequency grid must be positive and strictly increasing")

    def one(lam):
        pt = compute_point(shape, float(lam), params)
        if progress is not None:
            progress(pt)
        return pt

    if workers <= 1:
        return [one(lam) for lam in lams]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, lams))
