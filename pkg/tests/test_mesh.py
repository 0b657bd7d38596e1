import numpy as np
import pytest
from hypothesis import given, strategies as st

from scatphase.geometry import builtin_shape, measures
from scatphase.mesh import (MeshError, ResolutionRule, build_annular_mesh, export_mesh, import_mesh,
                            quadratic_nodes)

SHAPES = [("disk", {"a": 1.0}), ("ellipse", {"ax": 1.0, "ay": 0.5}), ("star", {}), ("square", {"side": 1.0}),
          ("regular_polygon", {"sides": 5, "a": 1.0})]


def _mesh(name, params, mu=10, lam=5.0):
    shape = builtin_shape(name, **params)
    return shape, build_annular_mesh(shape, 2.0 * shape.circumradius, rule=ResolutionRule(mu, lam))


def _sorted_edges(mesh):
    p = mesh.vertices[mesh.triangles]
    e = np.stack([np.hypot(*(p[:, 1] - p[:, 0]).T), np.hypot(*(p[:, 2] - p[:, 1]).T),
                  np.hypot(*(p[:, 0] - p[:, 2]).T)], axis=1)
    return np.sort(e, axis=1)


@pytest.mark.parametrize("name,params", SHAPES)
def test_invariants(name, params):
    shape, mesh = _mesh(name, params)
    mesh.validate(shape)
    assert np.all(mesh.signed_areas() > 0)
    assert mesh.aspect_ratios().max() <= 20
    # covers the annulus: polygonal obstacle error is O(h^2)
    total = mesh.signed_areas().sum() + measures(shape)["area"]
    assert total == pytest.approx(np.pi * mesh.R_PML**2, rel=1e-3)


@pytest.mark.parametrize("name,params", SHAPES)
def test_resolution_rule(name, params):
    rule = ResolutionRule(10, 5.0)
    shape, mesh = _mesh(name, params)
    # cells are split quads: both legs follow grid lines and respect the spacing inside B_{R_DOM}
    legs = _sorted_edges(mesh)[:, 1]
    centre = np.hypot(*mesh.vertices[mesh.triangles].mean(axis=1).T)
    assert legs[centre < mesh.R_DOM].max() <= rule.spacing * (1 + 1e-9)


def test_rule_formula():
    rule = ResolutionRule(20, 10.0)
    assert rule.points_per_wavelength == pytest.approx(20 * (1 + 10**0.25))
    assert rule.spacing == pytest.approx(2 * np.pi / (10 * 20 * (1 + 10**0.25)))
    with pytest.raises(MeshError):
        ResolutionRule(0, 1.0)


def test_pml_layers():
    shape = builtin_shape("disk", a=1.0)
    rule = ResolutionRule(10, 10.0)
    mesh = build_annular_mesh(shape, 2.0, rule=rule)
    assert mesh.R_PML == pytest.approx(2.0 + 5 * mesh.spacing)
    radii = np.unique(np.round(np.hypot(*mesh.vertices.T), 9))
    assert np.sum(radii > 2.0 + 1e-9) >= 5


def test_square_corner_refinement():
    rule = ResolutionRule(10, 5.0)
    shape, mesh = _mesh("square", {"side": 1.0})
    corners = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
    assert mesh.min_size_near(corners, 1e-9) <= rule.spacing / 4


@pytest.mark.parametrize("kwargs,match", [
    ({"R_DOM": 0.9}, "R_DOM"),
    ({"R_DOM": 2.0, "R_PML": 1.5}, "R_PML"),
])
def test_build_errors(kwargs, match):
    with pytest.raises(MeshError, match=match):
        build_annular_mesh(builtin_shape("disk", a=1.0), rule=ResolutionRule(5, 1.0), **kwargs)


def test_non_star_shape_rejected():
    with pytest.raises(MeshError):
        build_annular_mesh(builtin_shape("two_disks", a=1.0, gap=0.5), 5.0, rule=ResolutionRule(5, 1.0))


def test_round_trip(tmp_path):
    shape, mesh = _mesh("star", {}, mu=5, lam=2.0)
    path = tmp_path / "m.txt"
    export_mesh(mesh, path)
    back = import_mesh(path, shape)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.boundary_edges, mesh.boundary_edges)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    export_mesh(back, tmp_path / "m2.txt")
    assert (tmp_path / "m2.txt").read_bytes() == path.read_bytes()


def _square_file(path, flip=False):
    tri2 = "1 4 3" if flip else "1 3 4"
    path.write_text(f"""# unit square, two triangles
4 2 4
0 0
1 0
1 1
0 1
1 2 3
{tri2}
1 2 2
2 3 2
3 4 2
4 1 2
""")


def test_two_triangle_mesh(tmp_path):
    p = tmp_path / "sq.txt"
    _square_file(p)
    mesh = import_mesh(p)
    assert mesh.h == pytest.approx(np.sqrt(2))
    space = quadratic_nodes(mesh)
    assert space.ndof == 4 + 5


def test_flipped_triangle(tmp_path):
    p = tmp_path / "sq.txt"
    _square_file(p, flip=True)
    with pytest.raises(MeshError, match="triangle 1 "):
        import_mesh(p)


@pytest.mark.parametrize("text,match", [
    ("3 1 3\n0 0\n1 0\n0 1\n1 2 3\n1 2 2\n2 3 2\n", "header"),
    ("3 1 3\n0 0\n1 x\n0 1\n1 2 3\n1 2 2\n2 3 2\n3 1 2\n", ":3:"),
    ("3 1 3\n0 0\n1 0\n0 1\n1 2 3\n1 2 2\n2 3 2\n3 1 7\n", "tags"),
    ("3 1 2\n0 0\n1 0\n0 1\n1 2 3\n1 2 2\n2 3 2\n", "nonconforming"),
])
def test_import_errors(tmp_path, text, match):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(MeshError, match=match):
        import_mesh(p)


def test_import_off_boundary(tmp_path):
    shape, mesh = _mesh("disk", {"a": 1.0}, mu=5, lam=1.0)
    mesh.vertices = mesh.vertices * 1.001
    export_mesh(mesh, tmp_path / "m.txt")
    with pytest.raises(MeshError, match="off the boundary"):
        import_mesh(tmp_path / "m.txt", shape)


def test_single_triangle_nodes(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("3 1 3\n0 0\n1 0\n0 1\n1 2 3\n1 2 2\n2 3 2\n3 1 2\n")
    space = quadratic_nodes(import_mesh(p))
    assert space.ndof == 6
    # outer-circle edge midpoints are moved onto r = R_PML
    mids = space.coords[space.tri_dofs[0, 3:]]
    np.testing.assert_allclose(np.hypot(*mids.T), 1.0, atol=1e-12)


@pytest.mark.parametrize("name,params", SHAPES)
def test_quadratic_nodes(name, params):
    shape, mesh = _mesh(name, params, mu=5, lam=3.0)
    space = quadratic_nodes(mesh, shape)
    edges, _ = mesh.edges()
    assert space.ndof == len(mesh.vertices) + len(edges)
    mids = space.obstacle[space.obstacle >= len(mesh.vertices)]
    c = shape.components[0]
    np.testing.assert_allclose(space.coords[mids], c.point(space.node_param[mids]), atol=1e-12)
    if name == "disk":
        np.testing.assert_allclose(np.hypot(*space.coords[mids].T), 1.0, atol=1e-12)


@given(st.floats(0.5, 30.0), st.floats(1.0, 30.0))
def test_spacing_decreases_with_mu(lam, mu):
    a, b = ResolutionRule(mu, lam), ResolutionRule(mu * 1.5, lam)
    assert b.spacing < a.spacing
    # h^4 lam^5 stays bounded: (2 pi / mu)^4 lam / (1 + lam^(1/4))^4 <= (2 pi / mu)^4
    assert a.spacing**4 * lam**5 <= (2 * np.pi / mu) ** 4
