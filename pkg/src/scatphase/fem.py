"""Quadratic finite elements with a radial perfectly matched layer.

For fixed ``lam`` the Galerkin form is

    a(u, w) = int (J^-T grad u) . (J^-T grad w) det J - lam^2 u w det J

where ``J`` is the Jacobian of the complex radial stretching
``x -> rhat(|x|) x / |x|``, ``rhat(r) = r + (i / lam) int_0^r gamma`` and
``gamma(r) = 1 / (R_PML - r)`` beyond ``R_DOM``.  No complex conjugation is
involved, so the matrix is complex symmetric.

``u`` solves ``a(u, w) = 0`` with ``u = -exp(i lam <x, w>)`` on the obstacle and
``v`` solves ``a(v, w) = -2 i lam int u w det J`` with
``v = -<x, w> exp(i lam <x, w>)`` there; both vanish on the outer circle.
The matrix is factorized once per frequency and reused for every incidence
angle and for both fields.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg.lapack as lapack
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi

from .geometry import BoundaryQuadrature, ObstacleShape
from .mesh import P2Space
from .traces import BoundaryTraceSet

__all__ = [
    "FemError",
    "PmlMap",
    "pml_jacobian",
    "element_matrices",
    "assemble",
    "SparseSystem",
    "CirculantSystem",
    "dirichlet_data",
    "solve_fields",
    "TraceOperator",
    "trace_operator",
    "neumann_trace",
    "compute_traces",
    "l2_norm",
    "dump_matrix",
]

log = logging.getLogger(__name__)


class FemError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# PML


@dataclass(frozen=True)
class PmlMap:
    R_DOM: float
    R_PML: float
    lam: float

    def __post_init__(self):
        if not self.R_PML > self.R_DOM > 0:
            raise FemError("need 0 < R_DOM < R_PML")
        if self.lam == 0:
            raise FemError("PML stretching is undefined at lam = 0")

    def gamma(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r >= self.R_DOM, 1.0 / (self.R_PML - r), 0.0)

    def gamma_integral(self, r):
        """``int_0^r gamma = log((R_PML - R_DOM) / (R_PML - r))`` past ``R_DOM``."""
        r = np.asarray(r, dtype=float)
        rr = np.maximum(r, self.R_DOM)
        return np.where(r >= self.R_DOM, np.log((self.R_PML - self.R_DOM) / (self.R_PML - rr)), 0.0)

    def rhat(self, r):
        return np.asarray(r, dtype=float) + 1j / self.lam * self.gamma_integral(r)

    def drhat(self, r):
        return 1.0 + 1j / self.lam * self.gamma(r)

    def coefficients(self, x):
        """``K = det J J^-1 J^-T`` and ``m = det J`` at points ``x`` of shape ``(..., 2)``."""
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        if np.any(r >= self.R_PML):
            raise FemError("PML coefficients requested on or beyond R_PML")
        inside = r <= self.R_DOM
        rs = np.where(inside, 1.0, r)
        alpha = np.where(inside, 1.0, self.rhat(r) / rs)
        beta = np.where(inside, 1.0, self.drhat(r))
        xh = x / rs[..., None]
        outer = xh[..., :, None] * xh[..., None, :]
        eye = np.eye(2)
        K = (beta / alpha)[..., None, None] * eye + (alpha / beta - beta / alpha)[..., None, None] * outer
        K = np.where(inside[..., None, None], eye, K)
        return K, alpha * beta


def pml_jacobian(x, pml: PmlMap) -> np.ndarray:
    """Jacobian of ``x -> rhat(|x|) x / |x|``; the identity for ``|x| <= R_DOM``."""
    x = np.asarray(x, dtype=float)
    r = float(np.hypot(*x))
    if r >= pml.R_PML:
        raise FemError(f"|x| = {r} is outside the PML disk")
    if r <= pml.R_DOM:
        return np.eye(2, dtype=complex)
    xh = x / r
    alpha = pml.rhat(r) / r
    beta = pml.drhat(r)
    return alpha * np.eye(2) + (beta - alpha) * np.outer(xh, xh)


# ---------------------------------------------------------------------------
# reference element


def _quad_deg4():
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    pts = np.array([[a, a], [1 - 2 * a, a], [a, 1 - 2 * a], [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
    return pts, 0.5 * np.array([wa, wa, wa, wb, wb, wb])


def _quad_collapsed(n):
    """Collapsed Gauss-Jacobi product rule on the reference triangle, degree ``2n - 1``."""
    x, wx = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x)
    y, wy = roots_jacobi(n, 0.0, 0.0)
    u = 0.5 * (1 + x)
    v = 0.5 * (1 + y)
    xi = u[:, None] * np.ones_like(v)[None, :]
    eta = (1 - u)[:, None] * v[None, :]
    w = (wx[:, None] * wy[None, :]) / 8.0
    return np.column_stack([xi.ravel(), eta.ravel()]), w.ravel()


QUAD4 = _quad_deg4()
QUAD7 = _quad_collapsed(4)


def p2_basis(pts):
    """Values ``(Q, 6)`` and reference gradients ``(Q, 6, 2)`` of the P2 basis."""
    xi, eta = pts[:, 0], pts[:, 1]
    L = np.stack([1 - xi - eta, xi, eta], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    phi = np.empty((len(pts), 6))
    grad = np.empty((len(pts), 6, 2))
    for i in range(3):
        phi[:, i] = L[:, i] * (2 * L[:, i] - 1)
        grad[:, i] = (4 * L[:, i] - 1)[:, None] * dL[i]
    for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
        phi[:, 3 + k] = 4 * L[:, i] * L[:, j]
        grad[:, 3 + k] = 4 * (L[:, j][:, None] * dL[i] + L[:, i][:, None] * dL[j])
    return phi, grad


def element_matrices(P, lam, pml: PmlMap | None, quad=None):
    """Stiffness-minus-mass and weighted mass matrices ``(T, 6, 6)`` for triangles ``P (T, 3, 2)``."""
    if quad is None:
        quad = QUAD7 if pml is not None else QUAD4
    qp, qw = quad
    phi, gref = p2_basis(qp)
    B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # columns are edge vectors
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    BinvT = np.empty_like(B)
    BinvT[:, 0, 0] = B[:, 1, 1] / det
    BinvT[:, 0, 1] = -B[:, 1, 0] / det
    BinvT[:, 1, 0] = -B[:, 0, 1] / det
    BinvT[:, 1, 1] = B[:, 0, 0] / det
    G = np.einsum("tab,qib->tqia", BinvT, gref)
    wq = qw[None, :] * np.abs(det)[:, None]
    if pml is None:
        S = np.einsum("tq,tqia,tqja->tij", wq, G, G)
        Mm = np.einsum("tq,qi,qj->tij", wq, phi, phi)
        return S - lam**2 * Mm, Mm.astype(complex)
    X = P[:, 0][:, None, :] + np.einsum("tab,qb->tqa", B, qp)
    K, m = pml.coefficients(X)
    S = np.einsum("tq,tqia,tqab,tqjb->tij", wq, G, K, G)
    Mm = np.einsum("tq,tq,qi,qj->tij", wq, m, phi, phi)
    return S - lam**2 * Mm, Mm


def _element_chunks(space: P2Space, tri_idx, lam, pml, chunk=20000):
    """Yield ``(dofs, A_e, M_e)``; PML triangles use the degree-7 rule with pointwise coefficients."""
    mesh = space.mesh
    verts = mesh.vertices
    tri = mesh.triangles[tri_idx]
    rmax = np.max(np.hypot(*verts[tri].transpose(2, 0, 1)), axis=1)
    in_pml = rmax > pml.R_DOM * (1 + 1e-12) if pml is not None else np.zeros(len(tri), bool)
    for flag in (False, True):
        sel = np.flatnonzero(in_pml == flag)
        for start in range(0, len(sel), chunk):
            part = sel[start:start + chunk]
            P = verts[tri[part]]
            A_e, M_e = element_matrices(P, lam, pml if flag else None)
            yield space.tri_dofs[tri_idx[part]], A_e, M_e


# ---------------------------------------------------------------------------
# linear systems


class _SystemBase:
    space: P2Space
    lam: float
    pml: PmlMap

    def _setup_dofs(self):
        sp = self.space
        self.dirichlet = np.union1d(sp.obstacle, sp.outer)
        mask = np.ones(sp.ndof, bool)
        mask[self.dirichlet] = False
        self.free = np.flatnonzero(mask)

    def lift(self, x_free, x_dir):
        """Full nodal vector(s) from free and Dirichlet parts."""
        out = np.zeros((self.space.ndof,) + x_free.shape[1:], dtype=complex)
        out[self.free] = x_free
        out[self.dirichlet] = x_dir
        return out


class SparseSystem(_SystemBase):
    """Global sparse matrix with a SuperLU factorization of the free block."""

    def __init__(self, space: P2Space, lam: float, pml: PmlMap):
        self.space, self.lam, self.pml = space, float(lam), pml
        self._setup_dofs()
        rows, cols, va, vm = [], [], [], []
        for dofs, A_e, M_e in _element_chunks(space, np.arange(len(space.mesh.triangles)), lam, pml):
            rows.append(np.repeat(dofs, 6, axis=1).ravel())
            cols.append(np.tile(dofs, (1, 6)).ravel())
            va.append(A_e.ravel())
            vm.append(M_e.ravel())
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        n = space.ndof
        self.A = sps.csr_matrix((np.concatenate(va), (rows, cols)), shape=(n, n))
        self.M = sps.csr_matrix((np.concatenate(vm), (rows, cols)), shape=(n, n))
        self.A_fa = self.A[self.free]
        self.M_fa = self.M[self.free]
        self.A_fD = self.A_fa[:, self.dirichlet]
        A_ff = self.A_fa[:, self.free].tocsc()
        try:
            self._lu = spla.splu(A_ff, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise FemError(f"singular system at lam={lam}: {exc}; perturb R_PML slightly") from None

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=complex))

    def apply(self, x_full):
        """``A[free, :] @ x``."""
        return self.A_fa @ x_full

    def apply_mass(self, x_full):
        """``M[free, :] @ x`` with the ``det J``-weighted mass matrix."""
        return self.M_fa @ x_full

    def to_sparse(self):
        return self.A

    def fields(self, uD, vD, rows=None):
        """Nodal ``u_h, v_h`` (restricted to ``rows``) for Dirichlet data columns."""
        z = np.zeros((self.free.size, uD.shape[1]), dtype=complex)
        u = self.lift(z, uD)
        u[self.free] = self.solve(-(self.A_fD @ uD))
        v = self.lift(z, vD)
        v[self.free] = self.solve(-2j * self.lam * (self.M_fa @ u) - self.A_fD @ vD)
        if rows is None:
            return u, v
        return u[rows], v[rows]


class CirculantSystem(_SystemBase):
    """Direct solver for meshes invariant under rotation by ``2 pi / n``.

    Numbering the nodes by (sector, local index) makes the matrix block
    circulant with blocks ``B_0, B_1, B_{-1}``.  A discrete Fourier transform
    over the sectors splits the system into ``n`` banded systems
    ``B_0 + z B_1 + z^-1 B_{-1}``, ``z = exp(2 pi i k / n)``, factorized once
    with LAPACK's banded LU.  Complex symmetry gives ``M_{-k} = M_k^T``, so only
    half of the modes are factorized.  Only the triangles of one sector are
    assembled.
    """

    def __init__(self, space: P2Space, lam: float, pml: PmlMap):
        if space.node_sector is None:
            raise FemError("mesh carries no rotational sector structure")
        self.space, self.lam, self.pml = space, float(lam), pml
        self._setup_dofs()
        n = space.mesh.n_sectors
        self.n = n
        sec, loc = space.node_sector, space.node_local
        m = int(loc.max()) + 1
        idx = np.full((n, m), -1)
        idx[sec, loc] = np.arange(space.ndof)
        if np.any(idx < 0):
            raise FemError("sector numbering has holes")
        is_dir = np.zeros(space.ndof, bool)
        is_dir[self.dirichlet] = True
        dir_loc = is_dir[idx]
        if np.any(dir_loc != dir_loc[0]):
            raise FemError("Dirichlet nodes are not rotation invariant")
        # local order by radius of the sector-0 nodes keeps the blocks banded
        rad = np.hypot(*space.coords[idx[0]].T)
        ang = np.mod(np.arctan2(space.coords[idx[0], 1], space.coords[idx[0], 0]) + 0.5, 2 * np.pi)
        order = np.lexsort((ang, rad))
        relabel = np.empty(m, int)
        relabel[order] = np.arange(m)
        self.idx = idx[:, order]
        self.m = m
        self.relabel = relabel
        self.floc = np.flatnonzero(~dir_loc[0][order])
        self.dloc = np.flatnonzero(dir_loc[0][order])

        col0 = np.flatnonzero(np.all(np.isin(space.mesh.vertex_sector[space.mesh.triangles], (0, 1)), axis=1))
        rows, cols, shift, va, vm = [], [], [], [], []
        for dofs, A_e, M_e in _element_chunks(space, col0, lam, pml):
            r = np.repeat(dofs, 6, axis=1).ravel()
            c = np.tile(dofs, (1, 6)).ravel()
            rows.append(relabel[loc[r]])
            cols.append(relabel[loc[c]])
            shift.append(np.mod(sec[c] - sec[r], n))
            va.append(A_e.ravel())
            vm.append(M_e.ravel())
        rows, cols, shift = map(np.concatenate, (rows, cols, shift))
        va, vm = np.concatenate(va), np.concatenate(vm)
        self.shifts = (0, 1, n - 1)
        self.A_blocks, self.M_blocks = {}, {}
        for d in self.shifts:
            s = shift == d
            self.A_blocks[d] = sps.csr_matrix((va[s], (rows[s], cols[s])), shape=(m, m))
            self.M_blocks[d] = sps.csr_matrix((vm[s], (rows[s], cols[s])), shape=(m, m))
        self._factorize()

    def _factorize(self):
        f = self.floc
        blocks = {d: self.A_blocks[d][f][:, f].tocoo() for d in self.shifts}
        kl = ku = 0
        for b in blocks.values():
            if b.nnz:
                kl = max(kl, int(np.max(b.row - b.col)))
                ku = max(ku, int(np.max(b.col - b.row)))
        self.kl, self.ku = kl, ku
        mf = len(f)
        bands = {}
        for d, b in blocks.items():
            ab = np.zeros((2 * kl + ku + 1, mf), dtype=complex)
            np.add.at(ab, (kl + ku + b.row - b.col, b.col), b.data)
            bands[d] = ab
        self._lu = []
        n = self.n
        for k in range(n // 2 + 1):
            z = np.exp(2j * np.pi * k / n)
            ab = bands[0] + z * bands[1] + (1 / z) * bands[n - 1]
            lu, piv, info = lapack.zgbtrf(ab, kl, ku)
            if info != 0:
                raise FemError(f"singular Fourier block {k} at lam={self.lam}; perturb R_PML slightly")
            self._lu.append((lu, piv))

    def _mode_solve(self, b):
        """Solve ``M_k x_k = b_k`` in place for ``b`` of shape ``(n, m_free, r)``."""
        n = self.n
        for k in range(n):
            if k <= n // 2:
                lu, piv = self._lu[k]
                trans = 0
            else:
                lu, piv = self._lu[n - k]
                trans = 1
            b[k], info = lapack.zgbtrs(lu, self.kl, self.ku, b[k], piv, trans=trans)
            if info != 0:
                raise FemError("banded solve failed")
        return b

    def _fourier_apply(self, blocks, Xh):
        """``sum_d z_k^d B_d Xh_k`` for all modes; ``Xh`` has shape ``(n, cols, r)``."""
        n, cols, r = Xh.shape
        z = np.exp(2j * np.pi * np.arange(n) / n)
        out = None
        for d, B in blocks.items():
            Xs = Xh if d == 0 else Xh * (z**d)[:, None, None]
            y = B @ Xs.transpose(1, 0, 2).reshape(cols, n * r)
            out = y if out is None else out + y
        return out.reshape(-1, n, r).transpose(1, 0, 2)

    def fields(self, uD, vD, rows=None):
        """Nodal ``u_h, v_h`` (restricted to ``rows``) for Dirichlet data columns.

        Everything happens mode by mode in Fourier space; only the requested
        rows are transformed back.
        """
        f, dl = self.floc, self.dloc
        if not hasattr(self, "_A_FD"):
            self._A_FD = {d: B[f][:, dl].tocsr() for d, B in self.A_blocks.items()}
            self._M_F = {d: B[f].tocsr() for d, B in self.M_blocks.items()}
            dpos = np.full(self.space.ndof, -1)
            dpos[self.dirichlet] = np.arange(self.dirichlet.size)
            self._dpos = dpos[self.idx[:, dl]]
        n, m = self.n, self.m
        r = uD.shape[1]
        out = []
        Uh = None
        for data in (uD, vD):
            XDh = np.fft.fft(data[self._dpos], axis=0)
            rhs = -self._fourier_apply(self._A_FD, XDh)
            if Uh is not None:
                rhs -= 2j * self.lam * self._fourier_apply(self._M_F, Uh)
            full = np.empty((n, m, r), dtype=complex)
            full[:, f] = self._mode_solve(rhs)
            full[:, dl] = XDh
            Uh = full
            if rows is None:
                x = np.fft.ifft(full, axis=0)
                res = np.empty((self.space.ndof, r), dtype=complex)
                res[self.idx] = x
            else:
                loc = self.relabel[self.space.node_local[rows]]
                need, inv = np.unique(loc, return_inverse=True)
                x = np.fft.ifft(full[:, need], axis=0)
                res = x[self.space.node_sector[rows], inv.ravel()]
            out.append(res)
        return out[0], out[1]

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=complex)
        vec = rhs.ndim == 1
        if vec:
            rhs = rhs[:, None]
        full = np.zeros((self.space.ndof, rhs.shape[1]), dtype=complex)
        full[self.free] = rhs
        b = np.fft.fft(full[self.idx[:, self.floc]], axis=0)
        n = self.n
        for k in range(n):
            if k <= n // 2:
                lu, piv = self._lu[k]
                trans = 0
            else:
                lu, piv = self._lu[n - k]
                trans = 1
            b[k], info = lapack.zgbtrs(lu, self.kl, self.ku, b[k], piv, trans=trans)
            if info != 0:
                raise FemError("banded solve failed")
        x = np.fft.ifft(b, axis=0)
        out = np.zeros_like(full)
        out[self.idx[:, self.floc]] = x
        res = out[self.free]
        return res[:, 0] if vec else res

    def _circ_apply(self, blocks, x_full):
        x_full = np.asarray(x_full)
        vec = x_full.ndim == 1
        X = x_full[self.idx] if not vec else x_full[self.idx][..., None]  # (n, m, r)
        n, m, r = X.shape
        Y = np.zeros((n, m, r), dtype=complex)
        for d, B in blocks.items():
            Xs = np.roll(X, -d, axis=0)  # sector j sees sector j + d
            Y += (B @ Xs.transpose(1, 0, 2).reshape(m, n * r)).reshape(m, n, r).transpose(1, 0, 2)
        full = np.zeros((self.space.ndof, r), dtype=complex)
        full[self.idx] = Y
        res = full[self.free]
        return res[:, 0] if vec else res

    def apply(self, x_full):
        return self._circ_apply(self.A_blocks, x_full)

    def apply_mass(self, x_full):
        return self._circ_apply(self.M_blocks, x_full)

    def to_sparse(self):
        """Global matrix rebuilt from the blocks (small meshes only)."""
        rows, cols, vals = [], [], []
        for d, B in self.A_blocks.items():
            Bc = B.tocoo()
            for j in range(self.n):
                rows.append(self.idx[j, Bc.row])
                cols.append(self.idx[(j + d) % self.n, Bc.col])
                vals.append(Bc.data)
        N = self.space.ndof
        return sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))


def assemble(space: P2Space, lam: float, R_DOM: float | None = None, R_PML: float | None = None,
             solver: str = "auto"):
    """Assemble and factorize the system for frequency ``lam``.

    ``solver`` is ``"sparse"``, ``"circulant"`` or ``"auto"`` (circulant when the
    mesh is rotation invariant).
    """
    mesh = space.mesh
    R_DOM = mesh.R_DOM if R_DOM is None else R_DOM
    R_PML = mesh.R_PML if R_PML is None else R_PML
    pml = PmlMap(float(R_DOM), float(R_PML), float(lam))
    if solver == "auto":
        solver = "circulant" if space.node_sector is not None else "sparse"
    if solver == "circulant":
        return CirculantSystem(space, lam, pml)
    if solver == "sparse":
        return SparseSystem(space, lam, pml)
    raise ValueError(f"unknown solver {solver!r}")


# ---------------------------------------------------------------------------
# data, solves, traces


def dirichlet_data(lam: float, omegas, system):
    """Nodal Dirichlet values ``(len(dirichlet), N)`` for ``u`` and ``v``.

    Obstacle nodes get ``-exp(i lam <x, w>)`` and ``-<x, w> exp(i lam <x, w>)``;
    nodes on the outer circle get zero.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    x = system.space.coords[system.dirichlet]
    on_obstacle = np.isin(system.dirichlet, system.space.obstacle)
    xw = x @ np.stack([np.cos(omegas), np.sin(omegas)])
    e = np.exp(1j * lam * xw)
    u = np.where(on_obstacle[:, None], -e, 0.0)
    v = np.where(on_obstacle[:, None], -xw * e, 0.0)
    return u, v


def solve_fields(system, omegas, rows=None):
    """Nodal ``u_h, v_h`` of shape ``(ndof, N)``, or ``(len(rows), N)``.

    Both fields reuse the same factorization: ``N`` solves for ``u`` and ``N``
    for ``v``, whose right-hand side needs the computed ``u_h``.
    """
    uD, vD = dirichlet_data(system.lam, omegas, system)
    return system.fields(uD, vD, rows)


@dataclass
class TraceOperator:
    """Sparse map from nodal values to ``d_nu`` at boundary quadrature nodes."""

    matrix: sps.csr_matrix
    quadrature: BoundaryQuadrature

    def __call__(self, field):
        return (self.matrix @ field).T


def trace_operator(space: P2Space, shape: ObstacleShape, order: int = 3) -> TraceOperator:
    """Piecewise-linear Neumann trace on the obstacle, sampled at Gauss points.

    On each obstacle edge the normal derivative of the adjacent triangle's
    field is taken at both endpoints (exact curve normals).  At smooth boundary
    vertices the values from the two neighbouring edges are averaged; at
    corners each edge keeps its one-sided value.  The trace is linear in the
    arclength parameter along each edge.
    """
    mesh = space.mesh
    from .mesh import OBSTACLE

    bedges = mesh.boundary_edges[mesh.boundary_tags == OBSTACLE]
    if mesh.vertex_param is None:
        raise FemError("mesh has no boundary parameters; import it with the shape")
    comp = mesh.vertex_component[bedges[:, 0]]
    lengths = np.array([shape.components[c].length for c in comp])
    sa, sb = mesh.vertex_param[bedges[:, 0]], mesh.vertex_param[bedges[:, 1]]
    ds = np.mod(sb - sa + 0.5 * lengths, lengths) - 0.5 * lengths
    # orient every edge along the curve
    flip = ds < 0
    bedges = np.where(flip[:, None], bedges[:, ::-1], bedges)
    sa, ds = np.where(flip, sb, sa), np.abs(ds)

    # adjacent triangle and local vertex positions
    tri = mesh.triangles
    nv = len(mesh.vertices)
    tkeys = np.sort(np.stack([tri, np.roll(tri, -1, axis=1)], axis=2), axis=2)
    tkeys = (tkeys[..., 0] * nv + tkeys[..., 1]).ravel()
    bk = np.sort(bedges, axis=1)
    bk = bk[:, 0] * nv + bk[:, 1]
    order_k = np.argsort(tkeys)
    pos = np.searchsorted(tkeys[order_k], bk)
    if np.any(tkeys[order_k][np.minimum(pos, len(tkeys) - 1)] != bk):
        raise FemError("obstacle edge without an adjacent triangle")
    tids = order_k[pos] // 3
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    _, gref = p2_basis(ref)  # gradients at the three vertices, (3, 6, 2)
    P = mesh.vertices[tri[tids]]
    B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
    BinvT = np.linalg.inv(B).transpose(0, 2, 1)

    ne = len(bedges)
    coeffs = np.empty((ne, 2, 6))
    corner_end = np.zeros((ne, 2), bool)
    for end in range(2):
        v = bedges[:, end]
        lv = np.argmax(tri[tids] == v[:, None], axis=1)
        G = np.einsum("tab,tib->tia", BinvT, gref[lv])  # (ne, 6, 2)
        s_here = sa if end == 0 else sa + ds
        nrm = np.empty((ne, 2))
        for ci, c in enumerate(shape.components):
            m = comp == ci
            if np.any(m):
                nrm[m] = c.normal(s_here[m], side=+1 if end == 0 else -1)
                if not c.is_smooth:
                    sc = c.corner_params
                    dist = np.min(np.abs(np.mod(s_here[m][:, None] - sc[None, :] + 0.5 * c.length, c.length) - 0.5 * c.length), axis=1)
                    corner_end[m, end] = dist < 1e-9 * c.length
        coeffs[:, end] = np.einsum("tia,ta->ti", G, nrm)

    # endpoint rows 2e + end: own one-sided value, then averaged at smooth vertices
    dofs = space.tri_dofs[tids]
    own = sps.csr_matrix((coeffs.reshape(-1), (np.repeat(np.arange(2 * ne), 6), np.repeat(dofs, 2, axis=0).ravel())),
                         shape=(2 * ne, space.ndof))
    vert = bedges.ravel()
    smooth = ~corner_end.ravel()
    key = np.where(smooth, vert, len(mesh.vertices) + np.arange(2 * ne))
    _, grp = np.unique(key, return_inverse=True)
    grp = grp.ravel()
    count = np.bincount(grp)
    G = sps.csr_matrix((1.0 / count[grp], (grp, np.arange(2 * ne))))
    avg = G[grp] @ own

    gx, gw = np.polynomial.legendre.leggauss(order)
    tau = 0.5 * (gx + 1)
    Q = ne * order
    qi = np.arange(Q)
    e_of_q = qi // order
    tq = tau[qi % order]
    interp = sps.csr_matrix((np.concatenate([1 - tq, tq]), (np.concatenate([qi, qi]),
                             np.concatenate([2 * e_of_q, 2 * e_of_q + 1]))), shape=(Q, 2 * ne))
    T = (interp @ avg).tocsr()

    s_q = (sa[:, None] + ds[:, None] * tau[None, :]).ravel()
    c_q = np.repeat(comp, order)
    w_q = (ds[:, None] * 0.5 * gw[None, :]).ravel()
    nodes = np.empty((Q, 2))
    tang = np.empty((Q, 2))
    for ci, c in enumerate(shape.components):
        m = c_q == ci
        if np.any(m):
            nodes[m] = c.point(s_q[m])
            tang[m] = c.tangent(s_q[m])
    quad = BoundaryQuadrature(nodes=nodes, normals=np.column_stack([tang[:, 1], -tang[:, 0]]), tangents=tang,
                              weights=w_q, corner=np.zeros(Q, bool), component=c_q,
                              param=np.mod(s_q, np.repeat(lengths, order)))
    return TraceOperator(T, quad)


def neumann_trace(field, op: TraceOperator):
    """``d_nu`` of nodal field(s) at the trace quadrature nodes, shape ``(N, K)``."""
    return op(field)


def compute_traces(system, op: TraceOperator, omegas, batch: int | None = None) -> BoundaryTraceSet:
    """Solve for ``u_h, v_h`` in batches of angles and keep only their traces."""
    omegas = np.asarray(omegas, dtype=float)
    if batch is None:
        batch = max(1, min(len(omegas), int(1e7 // max(system.space.ndof, 1))))
    rows = np.unique(op.matrix.indices)
    T = op.matrix[:, rows]
    du, dv = [], []
    for start in range(0, len(omegas), batch):
        u, v = solve_fields(system, omegas[start:start + batch], rows)
        du.append((T @ u).T)
        dv.append((T @ v).T)
    return BoundaryTraceSet(lam=system.lam, omegas=omegas, quadrature=op.quadrature,
                            du=np.concatenate(du), dv=np.concatenate(dv))


def l2_norm(space: P2Space, field, radius: float | None = None) -> np.ndarray:
    """``L^2`` norm of nodal field(s) over the triangles inside ``|x| <= radius``."""
    mesh = space.mesh
    tri = mesh.triangles
    sel = np.arange(len(tri))
    if radius is not None:
        rmax = np.max(np.hypot(*mesh.vertices[tri].transpose(2, 0, 1)), axis=1)
        sel = np.flatnonzero(rmax <= radius * (1 + 1e-12))
    field = np.asarray(field)
    vec = field.ndim == 1
    f = field[:, None] if vec else field
    total = np.zeros(f.shape[1])
    for start in range(0, len(sel), 50000):
        part = sel[start:start + 50000]
        _, M_e = element_matrices(mesh.vertices[tri[part]], 0.0, None)
        fe = f[space.tri_dofs[part]]  # (T, 6, r)
        total += np.einsum("tir,tij,tjr->r", fe.conj(), M_e.real, fe).real
    out = np.sqrt(total)
    return out[0] if vec else out


def dump_matrix(system, path):
    """Write the global matrix as ``i j re im`` lines (0-based, row-major order)."""
    A = system.to_sparse().tocoo()
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, z in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{i} {j} {z.real:.17g} {z.imag:.17g}\n")
