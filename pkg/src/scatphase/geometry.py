"""Obstacle boundaries as arclength-parametrized piecewise-smooth closed curves.

Every component of an obstacle is a closed, positively oriented (counter-clockwise)
curve ``s -> x(s)`` on ``[0, L)`` with ``|x'(s)| = 1``.  The outward normal of the
obstacle is ``nu(s) = (x2'(s), -x1'(s))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely.geometry

__all__ = [
    "CurvePiece",
    "ClosedCurve",
    "ObstacleShape",
    "BoundaryQuadrature",
    "GeometryError",
    "builtin_shape",
    "measures",
    "boundary_quadrature",
    "load_polygon",
    "BUILTIN_SHAPES",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_CORNER_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid shape parameters or an ill-formed boundary."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class CurvePiece:
    """A smooth parametric arc ``t -> p(t)`` for ``t`` in ``[t0, t1]``.

    ``p``, ``dp`` and ``ddp`` take an array of parameters and return ``(n, 2)``
    arrays.  The arclength map is tabulated on panels with Gauss-Legendre rules
    and inverted with Newton's method, which keeps the reparametrization accurate
    to roughly machine precision for analytic arcs.
    """

    def __init__(self, p, dp, ddp, t0, t1, panels=64):
        self.p, self.dp, self.ddp = p, dp, ddp
        self.t0, self.t1 = float(t0), float(t1)
        self._edges = np.linspace(self.t0, self.t1, panels + 1)
        lengths = np.array([self._arclength(a, b) for a, b in zip(self._edges[:-1], self._edges[1:])])
        self._cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self._cum[-1])
        if not self.length > 0:
            raise GeometryError("degenerate curve piece of zero length")

    def _speed(self, t):
        return np.hypot(*self.dp(np.atleast_1d(t)).T)

    def _arclength(self, a, b):
        t = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
        return 0.5 * (b - a) * float(np.dot(_GL_W, self._speed(t)))

    def _s_of_t(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self._edges, t, side="right") - 1, 0, len(self._edges) - 2)
        a = self._edges[j]
        nodes = 0.5 * (t - a)[:, None] * (_GL_X[None, :] + 1.0) + a[:, None]
        speed = self._speed(nodes.ravel()).reshape(nodes.shape)
        return self._cum[j] + 0.5 * (t - a) * (speed @ _GL_W)

    def t_of_s(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        t = np.interp(s, self._cum, self._edges)
        for _ in range(30):
            step = (self._s_of_t(t) - s) / self._speed(t)
            t = np.clip(t - step, self.t0, self.t1)
            if np.max(np.abs(step), initial=0.0) < 1e-15 * max(1.0, abs(self.t1)):
                break
        return t

    def point(self, s):
        return self.p(self.t_of_s(s))

    def tangent(self, s):
        d = self.dp(self.t_of_s(s))
        return d / np.hypot(*d.T)[:, None]

    def curvature(self, s):
        t = self.t_of_s(s)
        d, dd = self.dp(t), self.ddp(t)
        return _cross(d, dd) / np.hypot(*d.T) ** 3


def line_piece(a, b) -> CurvePiece:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return CurvePiece(
        lambda t: a + np.outer(t, b - a),
        lambda t: np.tile(b - a, (len(t), 1)),
        lambda t: np.zeros((len(t), 2)),
        0.0, 1.0, panels=1,
    )


def ellipse_piece(center, ax, ay, t0, t1, panels=64) -> CurvePiece:
    cx, cy = center
    return CurvePiece(
        lambda t: np.column_stack([cx + ax * np.cos(t), cy + ay * np.sin(t)]),
        lambda t: np.column_stack([-ax * np.sin(t), ay * np.cos(t)]),
        lambda t: np.column_stack([-ax * np.cos(t), -ay * np.sin(t)]),
        t0, t1, panels=panels,
    )


def radial_piece(r, dr, ddr, center=(0.0, 0.0), panels=128) -> CurvePiece:
    """Closed star-shaped curve ``x(t) = center + r(t) (cos t, sin t)``."""
    cx, cy = center

    def p(t):
        return np.column_stack([cx + r(t) * np.cos(t), cy + r(t) * np.sin(t)])

    def dp(t):
        c, s = np.cos(t), np.sin(t)
        return np.column_stack([dr(t) * c - r(t) * s, dr(t) * s + r(t) * c])

    def ddp(t):
        c, s = np.cos(t), np.sin(t)
        return np.column_stack([(ddr(t) - r(t)) * c - 2 * dr(t) * s, (ddr(t) - r(t)) * s + 2 * dr(t) * c])

    return CurvePiece(p, dp, ddp, 0.0, 2 * np.pi, panels=panels)


class ClosedCurve:
    """Closed curve made of smooth pieces joined end to end.

    Junctions where the one-sided tangents disagree are corners.  ``x(s)`` is
    evaluated with ``s`` taken modulo the total length.
    """

    def __init__(self, pieces):
        self.pieces = list(pieces)
        self._starts = np.concatenate([[0.0], np.cumsum([pc.length for pc in self.pieces])])
        self.length = float(self._starts[-1])
        corners, angles = [], []
        n = len(self.pieces)
        for i in range(n):
            prev, nxt = self.pieces[i - 1], self.pieces[i]
            end = prev.p(np.array([prev.t1]))[0]
            start = nxt.p(np.array([nxt.t0]))[0]
            if np.hypot(*(end - start)) > 1e-9 * max(1.0, self.length):
                raise GeometryError("curve pieces do not join into a closed curve")
            tin = prev.dp(np.array([prev.t1]))[0]
            tout = nxt.dp(np.array([nxt.t0]))[0]
            tin /= np.hypot(*tin)
            tout /= np.hypot(*tout)
            turn = np.arctan2(_cross(tin, tout), float(np.dot(tin, tout)))
            if abs(turn) > _CORNER_TOL:
                corners.append(self._starts[i])
                # angle measured from outside the obstacle
                angles.append(np.pi + turn)
        self.corner_params = np.array(corners, dtype=float)
        self.corner_angles = np.array(angles, dtype=float)

    def _eval(self, s, what, side=+1):
        s = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), self.length)
        if side < 0:
            # limit from below: s in (start_k, start_k+1] belongs to piece k
            s = np.where(s <= 0.0, self.length, s)
            idx = np.searchsorted(self._starts, s, side="left") - 1
        else:
            idx = np.searchsorted(self._starts, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        out = np.empty(len(s)) if what == "curvature" else np.empty((len(s), 2))
        for k, pc in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = getattr(pc, what)(s[m] - self._starts[k])
        return out

    def point(self, s):
        return self._eval(s, "point")

    def tangent(self, s, side=+1):
        return self._eval(s, "tangent", side)

    def normal(self, s, side=+1):
        t = self.tangent(s, side)
        return np.column_stack([t[:, 1], -t[:, 0]])

    def curvature(self, s):
        return self._eval(s, "curvature")

    @property
    def is_smooth(self):
        return len(self.corner_params) == 0

    def smooth_arcs(self):
        """``(s_start, s_end)`` of the arcs between consecutive corners."""
        if self.is_smooth:
            return [(0.0, self.length)]
        c = self.corner_params
        ends = np.append(c[1:], c[0] + self.length)
        return list(zip(c, ends))

    def polyline(self, n=2000):
        """Sample the curve densely; corners are always included."""
        s = np.linspace(0.0, self.length, n, endpoint=False)
        s = np.unique(np.concatenate([s, self.corner_params]))
        return self.point(s)

    def project(self, x):
        """Arclength parameter of the closest curve point for each row of ``x``."""
        x = np.atleast_2d(x)
        ns = max(4000, 20 * len(self.pieces))
        grid = np.linspace(0.0, self.length, ns, endpoint=False)
        pts = self.point(grid)
        s = np.empty(len(x))
        for i, xi in enumerate(x):
            s[i] = grid[np.argmin(np.sum((pts - xi) ** 2, axis=1))]
        ds = self.length / ns
        for _ in range(40):
            # Newton on d/ds |x(s) - x|^2
            p, t = self.point(s), self.tangent(s)
            g = np.sum((p - x) * t, axis=1)
            k = self.curvature(s)
            n = np.column_stack([t[:, 1], -t[:, 0]])
            h = 1.0 - k * np.sum((p - x) * n, axis=1)
            step = np.clip(g / np.where(np.abs(h) > 1e-3, h, 1.0), -ds, ds)
            s = np.mod(s - step, self.length)
            if np.max(np.abs(step)) < 1e-15 * self.length:
                break
        return s


@dataclass(frozen=True)
class ObstacleShape:
    """Union of disjoint closed curves bounding an obstacle."""

    components: tuple
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.components:
            raise GeometryError("an obstacle needs at least one boundary component")
        polys = []
        for c in self.components:
            poly = shapely.geometry.Polygon(c.polyline())
            if not poly.is_valid or not poly.exterior.is_simple:
                raise GeometryError(f"boundary of {self.name!r} is self-intersecting")
            if not poly.exterior.is_ccw:
                raise GeometryError(f"boundary of {self.name!r} is not positively oriented")
            polys.append(poly)
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                if polys[i].intersects(polys[j]):
                    raise GeometryError(f"components {i} and {j} of {self.name!r} intersect")
        object.__setattr__(self, "_polys", polys)

    def contains(self, points) -> np.ndarray:
        """Inside test against a dense polygonal approximation of each component."""
        from matplotlib.path import Path as MplPath

        pts = np.atleast_2d(points)
        inside = np.zeros(len(pts), dtype=bool)
        for c in self.components:
            inside |= MplPath(c.polyline(20000)).contains_points(pts)
        return inside

    @property
    def circumradius(self) -> float:
        return max(float(np.max(np.hypot(*c.polyline().T))) for c in self.components)

    @property
    def is_disk(self) -> bool:
        return self.name == "disk" and tuple(self.params.get("center", (0.0, 0.0))) == (0.0, 0.0)


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Quadrature nodes on the obstacle boundary for the ``ds(x)`` integrals."""

    nodes: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    weights: np.ndarray
    corner: np.ndarray
    component: np.ndarray
    param: np.ndarray

    def __len__(self):
        return len(self.weights)


# ---------------------------------------------------------------------------
# shape catalog


def _positive(params, key, default=None):
    val = params.get(key, default)
    if val is None:
        raise GeometryError(f"missing parameter {key!r}")
    val = float(val)
    if not val > 0:
        raise GeometryError(f"parameter {key!r} must be positive, got {val}")
    return val


def _polygon_curve(vertices):
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise GeometryError("a polygon needs at least three 2D vertices")
    if np.allclose(v[0], v[-1]):
        v = v[:-1]
    area = 0.5 * np.sum(_cross(v, np.roll(v, -1, axis=0)))
    if area < 0:
        v = v[::-1]
    return ClosedCurve([line_piece(v[i], v[(i + 1) % len(v)]) for i in range(len(v))])


def _rect(cx, cy, w, h):
    return _polygon_curve([(cx - w / 2, cy - h / 2), (cx + w / 2, cy - h / 2), (cx + w / 2, cy + h / 2), (cx - w / 2, cy + h / 2)])


def _disk_curve(a, center=(0.0, 0.0)):
    return ClosedCurve([ellipse_piece(center, a, a, 0.0, 2 * np.pi)])


def _star(params):
    a = _positive(params, "a", 1.0)
    eps = float(params.get("eps", 0.3))
    k = int(params.get("k", 5))
    if not 0 <= eps < 1:
        raise GeometryError("star parameter eps must lie in [0, 1)")
    r = lambda t: a * (1 + eps * np.cos(k * t))
    dr = lambda t: -a * eps * k * np.sin(k * t)
    ddr = lambda t: -a * eps * k * k * np.cos(k * t)
    return [ClosedCurve([radial_piece(r, dr, ddr)])]


def _cavity(params):
    # elliptic shell with a mouth on the positive x axis
    ax = _positive(params, "ax", 1.0)
    ay = _positive(params, "ay", 0.7)
    thick = _positive(params, "thickness", 0.15)
    mouth = _positive(params, "mouth", 0.5)
    t0 = float(mouth) / 2
    if not t0 < np.pi / 2:
        raise GeometryError("cavity mouth angle too large")
    outer = ellipse_piece((0, 0), ax + thick, ay + thick, t0, 2 * np.pi - t0)
    # inner wall runs clockwise
    inner = CurvePiece(
        lambda t: np.column_stack([ax * np.cos(-t), ay * np.sin(-t)]),
        lambda t: np.column_stack([ax * np.sin(-t), -ay * np.cos(-t)]),
        lambda t: np.column_stack([-ax * np.cos(-t), -ay * np.sin(-t)]),
        -(2 * np.pi - t0), -t0,
    )
    p_out_end = outer.p(np.array([outer.t1]))[0]
    p_in_start = inner.p(np.array([inner.t0]))[0]
    p_in_end = inner.p(np.array([inner.t1]))[0]
    p_out_start = outer.p(np.array([outer.t0]))[0]
    return [ClosedCurve([outer, line_piece(p_out_end, p_in_start), inner, line_piece(p_in_end, p_out_start)])]


def _shape_components(name, params):
    if name == "disk":
        a = _positive(params, "a", 1.0)
        return [_disk_curve(a, tuple(params.get("center", (0.0, 0.0))))]
    if name == "ellipse":
        ax, ay = _positive(params, "ax", 1.0), _positive(params, "ay", 0.5)
        return [ClosedCurve([ellipse_piece((0, 0), ax, ay, 0.0, 2 * np.pi)])]
    if name == "star":
        return _star(params)
    if name == "square":
        side = _positive(params, "side", 1.0)
        return [_rect(0.0, 0.0, side, side)]
    if name == "rectangle":
        return [_rect(0.0, 0.0, _positive(params, "width", 1.0), _positive(params, "height", 0.5))]
    if name == "polygon":
        if "vertices" not in params:
            raise GeometryError("polygon needs 'vertices'")
        return [_polygon_curve(params["vertices"])]
    if name == "regular_polygon":
        n = int(params.get("sides", 3))
        if n < 3:
            raise GeometryError("regular polygon needs at least 3 sides")
        R = _positive(params, "a", 1.0)
        t = 2 * np.pi * np.arange(n) / n + float(params.get("rotation", 0.0))
        return [_polygon_curve(np.column_stack([R * np.cos(t), R * np.sin(t)]))]
    if name == "two_disks":
        a = _positive(params, "a", 1.0)
        gap = _positive(params, "gap", 0.5)
        d = a + gap / 2
        return [_disk_curve(a, (-d, 0.0)), _disk_curve(a, (d, 0.0))]
    if name == "two_rectangles":
        w, h = _positive(params, "width", 0.4), _positive(params, "height", 1.5)
        gap = _positive(params, "gap", 1.0)
        d = (w + gap) / 2
        return [_rect(-d, 0.0, w, h), _rect(d, 0.0, w, h)]
    if name == "cavity":
        return _cavity(params)
    raise GeometryError(f"unknown shape family {name!r}")


BUILTIN_SHAPES = ("disk", "ellipse", "star", "square", "rectangle", "polygon", "regular_polygon",
                  "two_disks", "two_rectangles", "cavity")


SHAPE_PARAMETERS = {
    "disk": ("a", "center"),
    "ellipse": ("ax", "ay"),
    "star": ("a", "eps", "k"),
    "square": ("side",),
    "rectangle": ("width", "height"),
    "polygon": ("vertices",),
    "regular_polygon": ("sides", "a", "rotation"),
    "two_disks": ("a", "gap"),
    "two_rectangles": ("width", "height", "gap"),
    "cavity": ("ax", "ay", "thickness", "mouth"),
}


def builtin_shape(name: str, **params) -> ObstacleShape:
    """Build one of the catalogued obstacles (see ``BUILTIN_SHAPES``)."""
    allowed = SHAPE_PARAMETERS.get(name)
    if allowed is not None:
        unknown = sorted(set(params) - set(allowed))
        if unknown:
            raise GeometryError(f"unknown parameter {unknown[0]!r} for shape {name!r}; expected {', '.join(allowed)}")
    comps = _shape_components(name, params)
    return ObstacleShape(tuple(comps), name=name, params=dict(params))


def load_polygon(path) -> ObstacleShape:
    """Read a polygon from a text file of ``x y`` lines (closed implicitly)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GeometryError(f"{path}:{lineno}: expected 'x y', got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise GeometryError(f"{path}:{lineno}: {exc}") from None
    return ObstacleShape((_polygon_curve(rows),), name="polygon", params={"path": str(path)})


# ---------------------------------------------------------------------------
# measures and quadrature


def _gauss_on_arcs(curve, per_unit=200, order=20):
    xs, ws = [], []
    x, w = np.polynomial.legendre.leggauss(order)
    for a, b in curve.smooth_arcs():
        n = max(4, int(np.ceil((b - a) * per_unit / order)))
        edges = np.linspace(a, b, n + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(xs), np.concatenate(ws)


def measures(shape: ObstacleShape) -> dict:
    """Area, perimeter, exterior corner angles and integrated curvature.

    The area follows from the divergence theorem, ``|O| = 1/2 \\oint x dy - y dx``.
    The curvature integral only covers the smooth arcs (``H > 0`` on circles).
    """
    area = perimeter = curv = 0.0
    angles = []
    for c in shape.components:
        s, w = _gauss_on_arcs(c)
        p, t = c.point(s), c.tangent(s)
        area += 0.5 * float(np.dot(w, _cross(p, t)))
        curv += float(np.dot(w, c.curvature(s)))
        perimeter += c.length
        angles.extend(c.corner_angles.tolist())
    angles = np.array(angles)
    corner_term = float(np.sum(angles / np.pi - np.pi / angles) / 24.0) if len(angles) else 0.0
    return {
        "area": area,
        "perimeter": perimeter,
        "corner_angles": angles,
        "curvature_integral": curv,
        "corner_term": corner_term,
    }


def boundary_quadrature(shape: ObstacleShape, density: float) -> BoundaryQuadrature:
    """Composite trapezoidal rule in arclength, ``density`` nodes per unit length.

    Smooth closed components get the periodic trapezoidal rule.  On a component
    with corners each arc between corners is handled separately, so corner nodes
    appear twice, once with each one-sided tangent.
    """
    if not density > 0:
        raise GeometryError("quadrature density must be positive")
    chunks = []
    for ci, c in enumerate(shape.components):
        if c.is_smooth:
            n = int(np.ceil(c.length * density))
            if n < 3:
                raise GeometryError("quadrature density too low for a closed curve")
            s = c.length * np.arange(n) / n
            w = np.full(n, c.length / n)
            tang = c.tangent(s)
            chunks.append((s, w, tang, np.zeros(n, bool), ci))
            continue
        for a, b in c.smooth_arcs():
            if (b - a) * density < 2:
                raise GeometryError("quadrature density too low to resolve an arc between corners")
            n = int(np.ceil((b - a) * density))
            s = np.linspace(a, b, n + 1)
            w = np.full(n + 1, (b - a) / n)
            w[[0, -1]] *= 0.5
            tang = c.tangent(s)
            tang[-1] = c.tangent(np.array([b]), side=-1)[0]
            flags = np.zeros(n + 1, bool)
            flags[[0, -1]] = True
            chunks.append((s, w, tang, flags, ci))
    s = np.concatenate([ch[0] for ch in chunks])
    comp = np.concatenate([np.full(len(ch[0]), ch[4]) for ch in chunks])
    nodes = np.concatenate([shape.components[ch[4]].point(ch[0]) for ch in chunks])
    tang = np.concatenate([ch[2] for ch in chunks])
    return BoundaryQuadrature(
        nodes=nodes,
        normals=np.column_stack([tang[:, 1], -tang[:, 0]]),
        tangents=tang,
        weights=np.concatenate([ch[1] for ch in chunks]),
        corner=np.concatenate([ch[3] for ch in chunks]),
        component=comp,
        param=np.mod(s, np.array([shape.components[i].length for i in comp])),
    )
