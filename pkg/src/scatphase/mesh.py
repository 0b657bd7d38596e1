"""Triangular meshes of ``B(0, R_PML)`` minus the obstacle.

The built-in mesher handles a single boundary curve that is star-shaped about the
origin: boundary nodes are joined to the circles ``r = R_DOM`` and ``r = R_PML``
by straight radial rays, and every quadrilateral cell of the resulting mapped
grid is split along the same diagonal.  Anything else goes through
:func:`import_mesh`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np

from .geometry import ObstacleShape

__all__ = [
    "OBSTACLE",
    "PML_OUTER",
    "Mesh",
    "MeshError",
    "ResolutionRule",
    "P2Space",
    "build_annular_mesh",
    "import_mesh",
    "export_mesh",
    "quadratic_nodes",
]

OBSTACLE = 1
PML_OUTER = 2


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class ResolutionRule:
    """``mu (1 + lam^(1/4))`` mesh points per wavelength ``2 pi / lam``.

    Keeps ``h^4 lam^5`` bounded, the condition for a ``lam``-independent
    discretization error with quadratic elements.
    """

    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise MeshError("resolution rule needs mu > 0 and lam > 0")

    @property
    def points_per_wavelength(self) -> float:
        return self.mu * (1.0 + self.lam**0.25)

    @property
    def spacing(self) -> float:
        return 2 * np.pi / (self.lam * self.points_per_wavelength)


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    spacing: float = float("nan")
    R_DOM: float = float("nan")
    R_PML: float = float("nan")
    # obstacle vertices: component index and arclength parameter (-1 / nan elsewhere)
    vertex_component: np.ndarray | None = None
    vertex_param: np.ndarray | None = None
    # rotational structure: vertex (j, k) is vertex (0, k) rotated by 2 pi j / n
    n_sectors: int = 0
    vertex_sector: np.ndarray | None = None
    vertex_local: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        """Largest triangle diameter."""
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return float(np.max(np.hypot(e[..., 0], e[..., 1])))

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.max(np.hypot(e[..., 0], e[..., 1]), axis=1)

    def aspect_ratios(self) -> np.ndarray:
        """Longest edge over the height onto it (1.15 for equilateral triangles)."""
        area = np.abs(self.signed_areas())
        d = self.diameters()
        return d * d / (2 * area)

    def edges(self):
        """Unique edges ``(E, 2)`` (sorted pairs) and the triangle-to-edge map ``(nt, 3)``."""
        t = self.triangles
        local = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(local, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        nt = len(t)
        return uniq, np.column_stack([inv[:nt], inv[nt:2 * nt], inv[2 * nt:]])

    def validate(self, shape: ObstacleShape | None = None, tol: float = 1e-12):
        """Raise :class:`MeshError` naming the first violated invariant."""
        nv = len(self.vertices)
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=0) >= nv:
            raise MeshError("triangle references a vertex index out of range")
        areas = self.signed_areas()
        bad = np.flatnonzero(areas <= 0)
        if len(bad):
            raise MeshError(f"triangle {int(bad[0])} is not positively oriented (signed area {areas[bad[0]]:.3e})")
        uniq, t2e = self.edges()
        count = np.bincount(t2e.ravel(), minlength=len(uniq))
        if np.any(count > 2):
            e = uniq[np.argmax(count > 2)]
            raise MeshError(f"edge {tuple(int(i) for i in e)} is shared by more than two triangles")
        open_edges = {tuple(e) for e in uniq[count == 1]}
        bset = {tuple(sorted(map(int, e))) for e in self.boundary_edges}
        if open_edges != bset:
            missing = sorted(open_edges - bset)[:1] or sorted(bset - open_edges)[:1]
            raise MeshError(f"nonconforming mesh: boundary edge list does not match open edges near {missing}")
        if not set(np.unique(self.boundary_tags)).issubset({OBSTACLE, PML_OUTER}):
            raise MeshError("boundary tags must be 1 (obstacle) or 2 (outer circle)")
        if shape is not None:
            ob = np.unique(self.boundary_edges[self.boundary_tags == OBSTACLE])
            pts = self.vertices[ob]
            dist = _distance_to_boundary(shape, pts)
            if np.max(dist, initial=0.0) > tol * max(1.0, shape.circumradius):
                raise MeshError(f"obstacle vertex {int(ob[np.argmax(dist)])} is off the boundary by {np.max(dist):.2e}")

    def min_size_near(self, points, radius) -> float:
        """Smallest triangle diameter among triangles with a vertex within ``radius`` of ``points``."""
        pts = np.atleast_2d(points)
        d = np.min(np.hypot(*(self.vertices[:, None, :] - pts[None, :, :]).transpose(2, 0, 1)), axis=1)
        near = np.any(d[self.triangles] < radius, axis=1)
        return float(np.min(self.diameters()[near]))


def _distance_to_boundary(shape, pts):
    best = np.full(len(pts), np.inf)
    for c in shape.components:
        s = c.project(pts)
        best = np.minimum(best, np.hypot(*(c.point(s) - pts).T))
    return best


# ---------------------------------------------------------------------------
# structured annular mesher


def _polar_angle_monotone(curve, n=4000):
    s = np.linspace(0, curve.length, n, endpoint=False)
    p = curve.point(s)
    ang = np.unwrap(np.arctan2(p[:, 1], p[:, 0]))
    return np.all(np.diff(ang) > 0) and np.isclose(ang[-1] - ang[0] + (ang[1] - ang[0]), 2 * np.pi, atol=1e-2)


def _graded_params(curve, spacing, refine_radius, n_min):
    """Boundary node parameters: uniform spacing, geometric refinement at corners."""
    if curve.is_smooth:
        n = max(n_min, int(math.ceil(curve.length / spacing)))
        return curve.length * np.arange(n) / n, False
    params = []
    for a, b in curve.smooth_arcs():
        fine = np.linspace(a, b, 4001)
        d = np.minimum(fine - a, b - fine)
        local = spacing * np.minimum(1.0, 0.25 * 4.0 ** (d / refine_radius))
        dens = np.concatenate([[0.0], np.cumsum(0.5 * (1 / local[1:] + 1 / local[:-1]) * np.diff(fine))])
        n = max(2, int(math.ceil(dens[-1])))
        params.append(np.interp(np.linspace(0, dens[-1], n + 1)[:-1], dens, fine))
    return np.sort(np.mod(np.concatenate(params), curve.length)), True


def build_annular_mesh(shape: ObstacleShape, R_DOM: float, R_PML: float | None = None,
                       rule: ResolutionRule | None = None, corner_refine_factor: float = 3.0,
                       pml_layers: int = 5, spacing: float | None = None, h_max: float | None = None) -> Mesh:
    """Mapped-grid mesh between the obstacle and the circle ``r = R_PML``.

    The grid spacing is ``rule.spacing`` (``mu (1 + lam^(1/4))`` points per
    wavelength), capped by ``h_max``.  With ``R_PML=None`` the layer is
    ``pml_layers`` cells wide, ``R_PML = R_DOM + pml_layers * spacing``.
    Near corners the boundary spacing and the first radial layers shrink
    geometrically down to a quarter of the spacing within
    ``corner_refine_factor * spacing``.
    """
    if spacing is None:
        if rule is None:
            raise MeshError("need a resolution rule or an explicit spacing")
        spacing = rule.spacing
    if h_max is not None:
        spacing = min(spacing, h_max)
    if len(shape.components) != 1:
        raise MeshError("the built-in mesher handles one boundary component; use import_mesh")
    curve = shape.components[0]
    if not _polar_angle_monotone(curve):
        raise MeshError("boundary is not star-shaped about the origin; use import_mesh")
    rmax = shape.circumradius
    if not R_DOM > rmax:
        raise MeshError(f"obstacle (circumradius {rmax:.4g}) does not fit inside R_DOM={R_DOM}")
    if R_PML is None:
        R_PML = R_DOM + pml_layers * spacing
        n_pml = pml_layers
    else:
        if not R_PML > R_DOM:
            raise MeshError("R_PML must exceed R_DOM")
        n_pml = max(pml_layers if pml_layers else 1, int(math.ceil((R_PML - R_DOM) / spacing)))

    refine_radius = corner_refine_factor * spacing
    # boundary nodes fix the rays, so their angular gaps set the spacing at R_DOM
    n_b = int(math.ceil(2 * np.pi * R_DOM / spacing))
    spacing_b = spacing
    for _ in range(30):
        s, graded = _graded_params(curve, spacing_b, refine_radius, n_b)
        xb = curve.point(s)
        phi = np.arctan2(xb[:, 1], xb[:, 0])
        gap = np.max(np.mod(np.diff(np.append(phi, phi[0])), 2 * np.pi))
        if gap * R_DOM <= spacing * (1 + 1e-9):
            break
        factor = min(gap * R_DOM / spacing, 2.0)
        n_b = max(n_b + 1, int(math.ceil(n_b * factor)))
        spacing_b /= factor
    else:
        raise MeshError("could not place boundary nodes to meet the angular spacing")
    n = len(s)
    rb = np.hypot(xb[:, 0], xb[:, 1])
    dirs = xb / rb[:, None]
    ell = R_DOM - rb
    # radial distances along the longest ray, optionally graded near the obstacle
    lmax = float(np.max(ell))
    n_in = max(2, int(math.ceil(lmax / spacing)))
    d = np.linspace(0.0, 1.0, n_in + 1)
    if graded:
        first = [0.0, 0.25 * spacing, 0.75 * spacing]
        rest = np.linspace(0.75 * spacing, lmax, max(2, int(math.ceil((lmax - 0.75 * spacing) / spacing))) + 1)[1:]
        d = np.concatenate([first, rest]) / lmax
    t_pml = np.linspace(R_DOM, R_PML, n_pml + 1)[1:]
    nr = len(d) - 1 + n_pml  # index of the outermost ring
    ring = np.empty((n, nr + 1, 2))
    ring[:, : len(d)] = xb[:, None, :] + d[None, :, None] * (R_DOM * dirs - xb)[:, None, :]
    ring[:, len(d):] = t_pml[None, :, None] * dirs[:, None, :]
    verts = ring.reshape(-1, 2)

    j = np.arange(n)[:, None]
    k = np.arange(nr)[None, :]
    vid = lambda jj, kk: (jj % n) * (nr + 1) + kk
    a, b, c, dd = vid(j, k), vid(j + 1, k), vid(j + 1, k + 1), vid(j, k + 1)
    # keep triangles of one cell adjacent in memory: cell (j, k) -> rows 2*(j*nr+k), +1
    tri = np.stack([np.stack([a, b, c], -1), np.stack([a, c, dd], -1)], axis=2).reshape(-1, 3)
    p = verts[tri]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    jj = np.arange(n)
    inner = np.column_stack([vid(jj, 0), vid(jj + 1, 0)])
    outer = np.column_stack([vid(jj, nr), vid(jj + 1, nr)])
    vcomp = np.full(len(verts), -1)
    vpar = np.full(len(verts), np.nan)
    vcomp[vid(jj, 0)] = 0
    vpar[vid(jj, 0)] = s

    mesh = Mesh(
        vertices=verts,
        triangles=tri,
        boundary_edges=np.concatenate([inner, outer]),
        boundary_tags=np.concatenate([np.full(n, OBSTACLE), np.full(n, PML_OUTER)]),
        spacing=float(spacing), R_DOM=float(R_DOM), R_PML=float(R_PML),
        vertex_component=vcomp, vertex_param=vpar,
        meta={"n_angular": n, "n_radial": nr, "n_pml": n_pml, "graded": graded},
    )
    if shape.is_disk and not graded:
        mesh.n_sectors = n
        mesh.vertex_sector = np.repeat(np.arange(n), nr + 1)
        mesh.vertex_local = np.tile(np.arange(nr + 1), n)
    return mesh


# ---------------------------------------------------------------------------
# ASCII format


def export_mesh(mesh: Mesh, path):
    lines = [f"# triangles: 1-based, counter-clockwise; boundary tags {OBSTACLE}=obstacle {PML_OUTER}=outer circle",
             f"{len(mesh.vertices)} {len(mesh.triangles)} {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i + 1} {j + 1} {k + 1}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i + 1} {j + 1} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def import_mesh(path, shape: ObstacleShape | None = None) -> Mesh:
    """Read the ASCII mesh format and validate every invariant.

    If ``shape`` is given, obstacle vertices must lie on it and they receive
    their boundary parameters by projection.
    """
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise MeshError(f"{path}: empty mesh file")

    def ints(lineno, parts, n):
        if len(parts) != n:
            raise MeshError(f"{path}:{lineno}: expected {n} fields, got {len(parts)}")
        try:
            return [int(p) for p in parts]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: expected integers, got {' '.join(parts)!r}") from None

    lineno, head = rows[0]
    nv, nt, nb = ints(lineno, head, 3)
    if len(rows) != 1 + nv + nt + nb:
        raise MeshError(f"{path}: header announces {nv + nt + nb} records, found {len(rows) - 1}")
    verts = np.empty((nv, 2))
    for i, (lineno, parts) in enumerate(rows[1:1 + nv]):
        if len(parts) != 2:
            raise MeshError(f"{path}:{lineno}: expected 'x y'")
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad coordinate {' '.join(parts)!r}") from None
    tri = np.array([ints(ln, p, 3) for ln, p in rows[1 + nv:1 + nv + nt]], dtype=int).reshape(-1, 3) - 1
    bnd = np.array([ints(ln, p, 3) for ln, p in rows[1 + nv + nt:]], dtype=int).reshape(-1, 3)
    for idx, (ln, _) in enumerate(rows[1 + nv:1 + nv + nt]):
        if tri[idx].min() < 0 or tri[idx].max() >= nv:
            raise MeshError(f"{path}:{ln}: vertex index out of range")
    mesh = Mesh(vertices=verts, triangles=tri, boundary_edges=bnd[:, :2] - 1, boundary_tags=bnd[:, 2])
    mesh.validate(shape, tol=1e-9)
    outer = np.unique(mesh.boundary_edges[mesh.boundary_tags == PML_OUTER])
    if len(outer):
        mesh.R_PML = float(np.max(np.hypot(*verts[outer].T)))
    mesh.spacing = mesh.h
    if shape is not None:
        vcomp = np.full(nv, -1)
        vpar = np.full(nv, np.nan)
        ob = np.unique(mesh.boundary_edges[mesh.boundary_tags == OBSTACLE])
        best = np.full(len(ob), np.inf)
        for ci, c in enumerate(shape.components):
            s = c.project(verts[ob])
            dist = np.hypot(*(c.point(s) - verts[ob]).T)
            take = dist < best
            best[take] = dist[take]
            vcomp[ob[take]] = ci
            vpar[ob[take]] = s[take]
        mesh.vertex_component, mesh.vertex_param = vcomp, vpar
    return mesh


# ---------------------------------------------------------------------------
# quadratic elements


@dataclass
class P2Space:
    """Nodes of continuous piecewise-quadratic elements.

    ``tri_dofs[t]`` lists the three vertices of triangle ``t`` followed by the
    midpoints of its edges (01), (12), (20).  Nodes ``0..nv-1`` are the
    vertices, the remaining ones are edge midpoints.
    """

    mesh: Mesh
    coords: np.ndarray
    tri_dofs: np.ndarray
    edges: np.ndarray
    obstacle: np.ndarray  # node indices on the obstacle
    outer: np.ndarray  # node indices on the outer circle
    node_component: np.ndarray
    node_param: np.ndarray
    node_sector: np.ndarray | None = None
    node_local: np.ndarray | None = None

    @property
    def ndof(self) -> int:
        return len(self.coords)


def _midparam(s0, s1, length):
    # shorter way round the curve
    d = np.mod(s1 - s0 + 0.5 * length, length) - 0.5 * length
    return np.mod(s0 + 0.5 * d, length)


def quadratic_nodes(mesh: Mesh, shape: ObstacleShape | None = None) -> P2Space:
    """Add one node per edge; obstacle-edge midpoints are moved onto the exact curve."""
    nv = len(mesh.vertices)
    edges, t2e = mesh.edges()
    coords = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    tri_dofs = np.column_stack([mesh.triangles, nv + t2e])

    ekey = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    def edge_ids(pairs):
        return np.array([ekey[(min(a, b), max(a, b))] for a, b in pairs.tolist()], dtype=int)

    ob_edges = mesh.boundary_edges[mesh.boundary_tags == OBSTACLE]
    out_edges = mesh.boundary_edges[mesh.boundary_tags == PML_OUTER]
    ob_e = edge_ids(ob_edges) if len(ob_edges) else np.zeros(0, int)
    out_e = edge_ids(out_edges) if len(out_edges) else np.zeros(0, int)

    ncomp = np.full(len(coords), -1)
    npar = np.full(len(coords), np.nan)
    if mesh.vertex_component is not None:
        ncomp[:nv] = mesh.vertex_component
        npar[:nv] = mesh.vertex_param
    if shape is not None and len(ob_e):
        if mesh.vertex_component is None:
            raise MeshError("mesh carries no boundary parameters for its obstacle vertices")
        a, b = ob_edges[:, 0], ob_edges[:, 1]
        comp = mesh.vertex_component[a]
        lengths = np.array([shape.components[c].length for c in comp])
        mid = _midparam(mesh.vertex_param[a], mesh.vertex_param[b], lengths)
        for ci, c in enumerate(shape.components):
            m = comp == ci
            if np.any(m):
                coords[nv + ob_e[m]] = c.point(mid[m])
        ncomp[nv + ob_e] = comp
        npar[nv + ob_e] = mid
    if len(out_e) and np.isfinite(mesh.R_PML):
        p = coords[nv + out_e]
        coords[nv + out_e] = p * (mesh.R_PML / np.hypot(p[:, 0], p[:, 1]))[:, None]

    space = P2Space(
        mesh=mesh, coords=coords, tri_dofs=tri_dofs, edges=edges,
        obstacle=np.unique(np.concatenate([ob_edges.ravel(), nv + ob_e])).astype(int),
        outer=np.unique(np.concatenate([out_edges.ravel(), nv + out_e])).astype(int),
        node_component=ncomp, node_param=npar,
    )
    if mesh.n_sectors:
        _attach_sectors(space)
    return space


def _attach_sectors(space: P2Space):
    """Sector and local index of every node for rotation-invariant meshes."""
    mesh = space.mesh
    n = mesh.n_sectors
    nv = len(mesh.vertices)
    vs, vl = mesh.vertex_sector, mesh.vertex_local
    e0, e1 = space.edges[:, 0], space.edges[:, 1]
    s0, s1 = vs[e0], vs[e1]
    d = np.mod(s1 - s0, n)
    # an edge belongs to the sector of its "left" endpoint
    left_is_0 = d != n - 1
    sec = np.where(left_is_0, s0, s1)
    la = np.where(left_is_0, vl[e0], vl[e1])
    lb = np.where(left_is_0, vl[e1], vl[e0])
    dd = np.where(left_is_0, d, 1)
    nloc_v = int(vl.max()) + 1
    key = (la * nloc_v + lb) * 2 + dd
    uniq, inv = np.unique(key, return_inverse=True)
    node_sector = np.concatenate([vs, sec])
    node_local = np.concatenate([vl, nloc_v + inv.ravel()])
    counts = np.bincount(node_sector, minlength=n)
    if np.any(counts != counts[0]):
        raise MeshError("mesh is not rotation invariant")
    space.node_sector, space.node_local = node_sector, node_local
