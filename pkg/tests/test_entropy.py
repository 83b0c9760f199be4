import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from entropy_obstacle.entropy import (
    annulus_decomposition,
    apriori_profile,
    default_s_grid,
    entropy_residual,
    test_family as build_family,
    truncated_energy_bound,
    verify_entropy,
)
from entropy_obstacle.mesh import GridFunction, Mesh
from entropy_obstacle.pipeline import load_config
from entropy_obstacle.solver import InfeasibleError, vi_gap

SMOOTH = ["poisson_1d", "obstacle_1d", "zero_data_1d", "degenerate_1d", "plaplace_1d"]


@pytest.mark.parametrize("name", SMOOTH)
def test_solutions_pass_entropy_check(solved, name):
    cfg, prob, sol = solved(name)
    rep = verify_entropy(prob, sol.u, 50, None, seed=0, config=cfg.solver)
    assert rep.passed, rep.worst
    assert len(rep.pairs) == 50 * 9


def test_negative_control_fails():
    cfg = load_config("negative_control_1d")
    prob = cfg.build_problem()
    # u = psi violates the inequality: the operator pulls down where f pushes up
    rep = verify_entropy(prob, prob.psi, 50, seed=0, config=cfg.solver)
    assert not rep.passed
    assert rep.max_violation > 1e-3


def test_perturbed_solution_fails(solved):
    cfg, prob, sol = solved("obstacle_1d")
    m = prob.mesh
    bump = np.maximum(0.0, 1.0 - np.abs(m.nodes[:, 0] - 0.2) / 0.1) * 0.05
    rep = verify_entropy(prob, sol.u + GridFunction(m, bump), 50, seed=0, config=cfg.solver)
    assert not rep.passed


def test_untruncated_pair_equals_vi_gap(solved):
    _, prob, sol = solved("degenerate_1d")
    v = build_family(prob, sol.u, 5, 1)[-1][1]
    big = float(np.max(np.abs(sol.u.values - v.values))) + 1.0
    assert entropy_residual(prob, sol.u, v, big) == pytest.approx(vi_gap(prob, sol.u, v), abs=1e-14)


@pytest.mark.parametrize("s", [1e-3, 0.5, 100.0])
def test_residual_vanishes_for_v_equal_u(solved, s):
    _, prob, sol = solved("degenerate_1d")
    assert entropy_residual(prob, sol.u, sol.u, s) == 0.0


def test_untruncated_pair_equals_vi_gap_poisson(solved):
    _, prob, sol = solved("poisson_1d")
    for _, v in build_family(prob, sol.u, 10, 2):
        big = float(np.max(np.abs(sol.u.values - v.values)))
        assert entropy_residual(prob, sol.u, v, max(big, 1e-12)) == pytest.approx(
            vi_gap(prob, sol.u, v), rel=1e-14, abs=1e-15)


def test_profile_constant_above_sup(solved):
    _, prob, sol = solved("degenerate_1d")
    top = float(np.max(np.abs(sol.u.values)))
    prof = apriori_profile(prob, sol.u, [top * 1.001, top * 2, top * 10])
    assert prof.E_values[0] == prof.E_values[1] == prof.E_values[2]


def test_entropy_residual_input_checks(solved):
    _, prob, sol = solved("obstacle_1d")
    with pytest.raises(ValueError):
        entropy_residual(prob, sol.u, sol.u, 0.0)
    below = GridFunction(prob.mesh, prob.psi.values - 1.0)
    with pytest.raises(InfeasibleError):
        entropy_residual(prob, sol.u, below, 1.0)


def test_family_is_feasible_and_seeded(solved):
    _, prob, sol = solved("obstacle_1d")
    fam = build_family(prob, sol.u, 30, seed=4)
    assert len(fam) == 30
    bd = prob.mesh.boundary_nodes
    for _, v in fam:
        assert np.all(v.values >= prob.psi.values)
        assert np.array_equal(v.values[bd], prob.g.values[bd])
    again = build_family(prob, sol.u, 30, seed=4)
    assert all(np.array_equal(a.values, b.values) for (_, a), (_, b) in zip(fam, again))
    other = build_family(prob, sol.u, 30, seed=5)
    assert any(not np.array_equal(a.values, b.values) for (_, a), (_, b) in zip(fam, other))


def test_default_s_grid():
    u = GridFunction(Mesh.interval(0.0, 1.0, 4), np.array([0.0, 1.0, -3.0, 0.5, 0.0]))
    grid = default_s_grid(u)
    assert len(grid) == 8
    assert grid[0] == pytest.approx(0.4)
    assert np.allclose(np.diff(np.log2(grid)), 1.0)


def test_report_serialises(solved):
    _, prob, sol = solved("poisson_1d")
    d = verify_entropy(prob, sol.u, 3).to_dict()
    assert d["n_pairs"] == 27
    assert d["pass"] is True
    assert "family_size=3" in d["test_family_descriptor"]


@st.composite
def grid_functions(draw, n=12):
    vals = draw(arrays(np.float64, n + 1, elements=st.floats(-6, 6)))
    vals[[0, -1]] = 0.0
    return GridFunction(Mesh.interval(0.0, 1.0, n), vals)


@settings(max_examples=60, deadline=None)
@given(grid_functions(), st.integers(1, 6))
def test_annuli_telescope(u, K):
    prob = load_config("degenerate_1d").build_problem(12)
    ann = annulus_decomposition(prob, u, K)
    assert ann.telescoping_defect() <= 1e-12 * (1 + max(ann.D_energy))
    assert all(e >= 0 for e in ann.B_energy)
    assert ann.D_energy == sorted(ann.D_energy)


@settings(max_examples=60, deadline=None)
@given(grid_functions())
def test_profile_nondecreasing(u):
    prob = load_config("degenerate_1d").build_problem(12)
    prof = apriori_profile(prob, u, np.geomspace(0.01, 10.0, 15))
    assert prof.nondecreasing
    assert np.isfinite(prof.fitted_C) and prof.fitted_C >= 0


def test_profile_rejects_bad_grid(solved):
    _, prob, sol = solved("poisson_1d")
    with pytest.raises(ValueError):
        apriori_profile(prob, sol.u, [0.5, 0.1])
    with pytest.raises(ValueError):
        annulus_decomposition(prob, sol.u, 0)


def test_profile_csv(solved):
    _, prob, sol = solved("degenerate_1d")
    prof = apriori_profile(prob, sol.u, [0.1, 0.2, 1.0])
    lines = prof.to_csv().splitlines()
    assert lines[0] == "t,E,ratio"
    assert len(lines) == 4


def test_truncated_energy_bound(solved):
    _, prob, sol = solved("degenerate_1d")
    lhs_small, rhs_small, _ = truncated_energy_bound(prob, sol.u, 0.1)
    lhs_big, rhs_big, _ = truncated_energy_bound(prob, sol.u, 10.0)
    assert lhs_small <= lhs_big
    assert rhs_small < rhs_big
    with pytest.raises(ValueError):
        truncated_energy_bound(prob, sol.u, 0.0)
