import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nlap.mesh import (
    MeshError,
    build_mesh,
    build_space,
    interpolation_matrix,
    prolong,
    refine,
    space_at,
    xi_norm,
)
from nlap.quadrature import simplex_rule


@pytest.mark.parametrize("domain,levels", [("square", range(0, 5)), ("disk", range(0, 5)),
                                           ("cube", range(0, 3))])
def test_mesh_invariants(domain, levels):
    for L in levels:
        build_mesh(domain, L).check()


def test_unknown_domain():
    with pytest.raises(MeshError):
        build_mesh("torus", 1)


def test_refine_counts_and_vertex_nesting():
    s1 = build_space("square", 1)
    s2 = refine(s1)
    assert s2.mesh.num_vertices == 25 and s2.m == 9
    coarse = {tuple(v) for v in np.round(s1.mesh.vertices, 12)}
    fine = {tuple(v) for v in np.round(s2.mesh.vertices, 12)}
    assert coarse <= fine


def test_double_refinement_matches_direct():
    s = space_at(build_space("square", 1), 3)
    direct = build_mesh("square", 3)
    a = {tuple(v) for v in np.round(s.mesh.vertices, 12)}
    b = {tuple(v) for v in np.round(direct.vertices, 12)}
    assert a == b


def test_single_hat_prolongation_values():
    s1 = build_space("square", 1)
    s2 = refine(s1)
    xi = prolong(s1, np.array([1.0]), 2)
    x = s2.mesh.vertices[s2.dofs]
    centre = np.all(np.isclose(x, 0.5), axis=1)
    assert xi[centre] == pytest.approx([1.0])
    assert set(np.round(xi[~centre], 12)) <= {0.0, 0.5}
    assert np.sum(np.isclose(xi, 0.5)) == 6  # star of the centre vertex has six edges


@pytest.mark.parametrize("domain", ["square", "cube"])
def test_prolongation_preserves_function(domain):
    rng = np.random.default_rng(0)
    s = build_space(domain, 1 if domain == "cube" else 2)
    xi = rng.normal(size=s.m)
    fine = refine(s)
    pts = rng.uniform(0.01, 0.99, size=(50, s.dim))
    assert np.max(np.abs(s.evaluate(xi, pts) - fine.evaluate(prolong(s, xi, fine.level), pts))) <= 1e-14


@given(arrays(np.float64, 9, elements=st.floats(-10, 10)))
def test_prolongation_norm_isometry(xi):
    s = build_space("square", 2)
    a = xi_norm(s, xi)
    b = xi_norm(refine(s), prolong(s, xi, 3))
    assert abs(a - b) <= 1e-13 * max(a, 1e-300) or a == b == 0.0


@given(arrays(np.float64, 9, elements=st.floats(-10, 10)),
       arrays(np.float64, 9, elements=st.floats(-10, 10)),
       st.floats(-5, 5))
def test_norm_axioms(x, y, t):
    s = build_space("square", 2)
    nx, ny = xi_norm(s, x), xi_norm(s, y)
    assert xi_norm(s, x + y) <= (nx + ny) * (1 + 1e-12) + 1e-300
    assert xi_norm(s, t * x) == pytest.approx(abs(t) * nx, rel=1e-12, abs=1e-300)
    assert (nx == 0.0) == (not np.any(x))


def test_norm_against_quadrature_cube():
    rng = np.random.default_rng(3)
    s = build_space("cube", 2)
    xi = rng.normal(size=s.m)
    g = s.gradients(xi)
    rule = simplex_rule(3, 8)
    # integrate the piecewise-constant |grad u|^3 with an independent rule
    vol = s.volumes * 6.0 * rule.weights.sum()
    q = np.sum(vol * np.linalg.norm(g, axis=1) ** 3) ** (1 / 3)
    assert q == pytest.approx(xi_norm(s, xi), rel=1e-10)


def test_prolong_errors():
    s = build_space("square", 2)
    with pytest.raises(MeshError):
        prolong(s, np.zeros(3), 3)
    with pytest.raises(MeshError):
        prolong(s, np.zeros(s.m), 1)


def test_disk_interpolation_is_not_nested():
    # boundary vertices sit on the circle, so the coarse polygon is not contained
    # in the fine one and interpolation is only approximate there
    s = build_space("disk", 2)
    xi = np.ones(s.m)
    fine = refine(s)
    assert xi_norm(fine, prolong(s, xi, 3)) != pytest.approx(xi_norm(s, xi), rel=1e-6)


def test_interpolation_matrix_rows_partition_unity_inside():
    s = build_space("square", 2)
    f = refine(s)
    P = interpolation_matrix(s, f)
    assert P.shape == (f.m, s.m)
