import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from entropy_obstacle.mesh import (
    GridFunction,
    LevelSetKind,
    LevelSetQuery,
    Mesh,
    gradient,
    integrate,
    interpolate,
    level_set_measure,
    norm,
    sup_error,
    truncate,
    truncate_values,
)


@pytest.fixture(params=["1d", "2d"])
def mesh(request):
    if request.param == "1d":
        return Mesh.interval(0.0, 2.0, 16)
    return Mesh.rectangle((0.0, 2.0), (-1.0, 0.5), (8, 6))


def test_counts_and_boundary():
    m1 = Mesh.interval(0.0, 1.0, 10)
    assert (m1.n_nodes, m1.n_elements) == (11, 10)
    assert m1.boundary_nodes.tolist() == [0, 10]
    m2 = Mesh.rectangle(n=4)
    assert (m2.n_nodes, m2.n_elements) == (25, 32)
    assert len(m2.boundary_nodes) == 16
    assert m2.interior_mask.sum() == 9


def test_volumes_sum_to_measure(mesh):
    assert mesh.element_volume.sum() == pytest.approx(mesh.measure)
    assert mesh.lumped_volume.sum() == pytest.approx(mesh.measure)
    assert np.all(mesh.element_volume > 0)


def test_linear_functions_are_reproduced(mesh):
    coef = np.array([0.7, -1.3])[: mesh.dim]
    u = interpolate(mesh, lambda *xs: sum(c * x for c, x in zip(coef, xs)) + 0.25)
    assert np.allclose(gradient(u), coef)
    # vertex rule is exact for affine integrands
    centroid = np.array([0.5 * (a + b) for a, b in mesh.extent])
    assert integrate(mesh, u.values, "nodes") == pytest.approx((coef @ centroid + 0.25) * mesh.measure)
    assert sup_error(u, lambda *xs: sum(c * x for c, x in zip(coef, xs)) + 0.25) < 1e-13


def test_sup_error_sees_interior_of_cells():
    m = Mesh.interval(0.0, 1.0, 8)
    u = interpolate(m, lambda x: x**2)
    # nodal error is zero; the interpolation error of x^2 peaks at h^2/4 at cell midpoints
    assert np.max(np.abs(u.values - m.nodes[:, 0] ** 2)) == 0.0
    assert sup_error(u, lambda x: x**2) == pytest.approx(m.h**2 / 4)


def test_w1q_norm_of_identity():
    m = Mesh.interval(0.0, 1.0, 400)
    u = interpolate(m, lambda x: x)
    q = 1.5
    expected = (1.0 / (q + 1.0) + 1.0) ** (1.0 / q)
    assert norm(u, "W1q", q) == pytest.approx(expected, rel=1e-4)
    assert norm(u, "Linf") == 1.0
    with pytest.raises(ValueError):
        norm(u, "W1q", 0.5)
    with pytest.raises(ValueError):
        norm(u, "H2", 2.0)


def test_integrate_needs_target_when_ambiguous():
    m = Mesh.interval(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        integrate(m, np.ones(5), "bogus")


def test_grid_function_arithmetic_and_readonly(mesh):
    a = GridFunction(mesh, np.arange(mesh.n_nodes, dtype=float))
    b = GridFunction(mesh, np.ones(mesh.n_nodes))
    assert np.allclose((a - b + b).values, a.values)
    assert np.allclose((-a * 2.0).values, -2.0 * a.values)
    with pytest.raises(ValueError):
        a.values[0] = 5.0
    with pytest.raises(ValueError):
        GridFunction(mesh, np.ones(mesh.n_nodes + 1))


def test_csv_round_trip(mesh, tmp_path):
    u = GridFunction(mesh, np.random.default_rng(0).normal(size=mesh.n_nodes))
    path = tmp_path / "u.csv"
    text = u.to_csv(path)
    assert text.splitlines()[0] == ("x,value" if mesh.dim == 1 else "x,y,value")
    for source in (str(path), path, text):
        back = GridFunction.from_csv(mesh, source)
        assert np.array_equal(back.values, u.values)


def test_csv_rejects_other_mesh(tmp_path):
    u = GridFunction(Mesh.interval(0.0, 1.0, 4), np.zeros(5))
    with pytest.raises(ValueError):
        GridFunction.from_csv(Mesh.interval(0.0, 2.0, 4), u.to_csv())
    with pytest.raises(ValueError):
        GridFunction.from_csv(Mesh.interval(0.0, 1.0, 5), u.to_csv())


def test_level_sets():
    m = Mesh.interval(0.0, 1.0, 10)
    u = interpolate(m, lambda x: x - 0.5)
    below = level_set_measure(u, LevelSetQuery(0.0, LevelSetKind.Below))
    above = level_set_measure(u, LevelSetQuery(0.0, LevelSetKind.Above))
    assert below + above + m.lumped_volume[5] == pytest.approx(1.0)
    band = level_set_measure(u, LevelSetQuery(0.15, "Band", s=0.35, absolute=True))
    assert band == pytest.approx(4 * 0.1)
    with pytest.raises(ValueError):
        LevelSetQuery(1.0, LevelSetKind.Band, s=0.5)


def test_bad_meshes():
    with pytest.raises(ValueError):
        Mesh(3, [(0, 1)] * 3, 2)
    with pytest.raises(ValueError):
        Mesh.interval(1.0, 0.0, 4)
    with pytest.raises(ValueError):
        Mesh.rectangle(n=0)


def test_same_as_and_dict():
    a, b = Mesh.rectangle(n=4), Mesh.rectangle(n=4)
    assert a.same_as(b)
    assert not a.same_as(Mesh.rectangle(n=5))
    assert Mesh(**a.to_dict()).same_as(a)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 17, elements=st.floats(-1e3, 1e3)), st.floats(0.0, 100.0))
def test_truncation_properties(vals, s):
    t = truncate_values(vals, s)
    assert np.all(np.abs(t) <= s)
    assert np.array_equal(truncate_values(t, s), t)
    inside = np.abs(vals) <= s
    assert np.array_equal(t[inside], vals[inside])
    m = Mesh.interval(0.0, 1.0, 16)
    u = GridFunction(m, vals)
    # truncation does not increase the W^{1,q} seminorm
    assert norm(truncate(u, s), "W1q", 1.3) <= norm(u, "W1q", 1.3) + 1e-9


def test_truncation_rejects_negative_level():
    with pytest.raises(ValueError):
        truncate_values(np.zeros(3), -1.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 9, elements=st.floats(-100, 100)), st.floats(0, 50), st.floats(0, 50))
def test_truncation_composes(vals, s, t):
    assert np.array_equal(truncate_values(truncate_values(vals, s), t), truncate_values(vals, min(s, t)))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 25, elements=st.floats(-5, 5)), st.floats(0.1, 4.0))
def test_truncated_gradient_vanishes_on_saturated_elements(vals, s):
    m = Mesh.rectangle(n=4)
    u = GridFunction(m, vals)
    g = gradient(truncate(u, s))
    el = vals[m.elements]
    saturated = np.all(el >= s, axis=1) | np.all(el <= -s, axis=1)
    assert np.all(g[saturated] == 0.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 25, elements=st.floats(-5, 5)), arrays(np.float64, 25, elements=st.floats(-5, 5)),
       st.floats(-3, 3))
def test_integrate_linear_and_level_sets_monotone(a, b, c):
    m = Mesh.rectangle(n=4)
    assert integrate(m, a + c * b, "nodes") == pytest.approx(
        integrate(m, a, "nodes") + c * integrate(m, b, "nodes"), abs=1e-10)
    u = GridFunction(m, a)
    sizes = [level_set_measure(u, LevelSetQuery(t)) for t in np.linspace(-6, 6, 25)]
    assert all(y >= x for x, y in zip(sizes, sizes[1:]))


def test_integration_error_is_second_order():
    exact = (1 - np.cos(2.0)) / 2 * (np.e - 1)
    errs = []
    for n in (8, 16, 32):
        m = Mesh.rectangle((0.0, 1.0), (0.0, 1.0), n)
        vals = np.sin(2 * m.nodes[:, 0]) * np.exp(m.nodes[:, 1])
        errs.append(abs(integrate(m, vals, "nodes") - exact))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5
