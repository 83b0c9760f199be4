import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from entropy_obstacle.entropy import entropy_threshold
from entropy_obstacle.field import DegeneracySpec, FieldKind, FieldSpec, LowerOrderSpec
from entropy_obstacle.mesh import GridFunction, Mesh, interpolate, sup_error
from entropy_obstacle.pipeline import load_config
from entropy_obstacle.solver import (
    InfeasibleError,
    ProblemSpec,
    SolverConfig,
    _Inner,
    discrete_energy,
    element_factor,
    energy_gradient,
    residual_scale,
    solve_vi,
    vi_gap,
)

from conftest import ONE_D, all_configs, with_theta


def make_problem(mesh, p=2.0, theta=0.0, b=0.0, r=1.0, f=0.0, psi=-1.0, g=0.0, eps_reg=0.0):
    def grid(v):
        return v if isinstance(v, GridFunction) else interpolate(mesh, v if callable(v) else (lambda *xs: v + 0 * xs[0]))

    return ProblemSpec(
        mesh=mesh,
        field=FieldSpec(FieldKind.PLaplacian, p, eps_reg=eps_reg),
        degeneracy=DegeneracySpec(theta, p),
        lower_order=LowerOrderSpec(b, r),
        f=grid(f),
        psi=grid(psi),
        g=grid(g),
    )


@pytest.mark.parametrize("mesh", [Mesh.interval(0.0, 1.0, 12), Mesh.rectangle(n=(5, 4))], ids=["1d", "2d"])
@pytest.mark.parametrize("p, theta, b, r", [(2.0, 0.0, 0.0, 1.0), (1.7, 0.2, 0.5, 1.0), (3.0, 0.1, 1.0, 2.5)])
def test_kernel_residual_matches_reference(mesh, p, theta, b, r):
    prob = make_problem(mesh, p, theta, b, r, f=lambda *xs: np.sin(3 * xs[0]), eps_reg=1e-8)
    u = np.random.default_rng(1).normal(size=mesh.n_nodes)
    dfac = element_factor(prob, u)
    inner = _Inner(prob, SolverConfig(), residual_scale(prob))
    got = inner.residual(u.copy(), dfac)
    want = energy_gradient(prob, GridFunction(mesh, u), dfac)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_poisson_matches_closed_form():
    prob = make_problem(Mesh.interval(0.0, 1.0, 64), f=1.0)
    sol = solve_vi(prob, SolverConfig(inner_tol=1e-11))
    assert sol.converged
    assert len(sol.active_set) == 0
    assert sup_error(sol.u, lambda x: x * (1 - x) / 2) < 1e-4


def projected_gradient_oracle(f, psi, n, iters=60000):
    """Independent reference: projected gradient descent on the assembled P1 quadratic program."""
    h = 1.0 / n
    m = n - 1
    K = (np.diag(2.0 * np.ones(m)) - np.diag(np.ones(m - 1), 1) - np.diag(np.ones(m - 1), -1)) / h
    F = h * f * np.ones(m)
    lo = psi * np.ones(m)
    u = np.maximum(lo, 0.0)
    tau = h / 4.0
    for _ in range(iters):
        u = np.maximum(lo, u - tau * (K @ u - F))
    return np.concatenate([[0.0], u, [0.0]])


def test_obstacle_matches_independent_oracle():
    n = 32
    prob = make_problem(Mesh.interval(0.0, 1.0, n), f=-8.0, psi=-0.5)
    sol = solve_vi(prob, SolverConfig(inner_tol=1e-12))
    ref = projected_gradient_oracle(-8.0, -0.5, n)
    assert sol.converged
    assert np.max(np.abs(sol.u.values - ref)) < 1e-8


def test_zero_data_gives_zero():
    for mesh in (Mesh.interval(0.0, 1.0, 20), Mesh.rectangle(n=8)):
        prob = make_problem(mesh, p=2.5, theta=0.2, b=1.0, r=1.5, f=0.0, psi=-0.1)
        sol = solve_vi(prob)
        assert np.max(np.abs(sol.u.values)) <= sol.config.inner_tol


@pytest.mark.parametrize("name", ["degenerate_1d", "zero_data_1d", "plaplace_1d"])
def test_theta_zero_is_bit_identical_to_bypass(name):
    cfg = with_theta(load_config(name), 0.0)
    prob = cfg.build_problem(32)
    a = solve_vi(prob, cfg.solver)
    b = solve_vi(prob, dataclasses.replace(cfg.solver, bypass_degeneracy=True))
    assert np.array_equal(a.u.values, b.u.values)
    assert a.inner_iters_total == b.inner_iters_total


@pytest.mark.parametrize("name", ONE_D)
def test_solutions_feasible_and_complementary(solved, name):
    _, prob, sol = solved(name)
    assert sol.converged
    assert sol.is_feasible()
    assert sol.complementarity_ok()
    assert np.all(sol.residual[sol.active_set] >= -sol.scaled_tol)


@pytest.mark.parametrize("name", [n for n in ONE_D if n != "negative_control_1d"] + ["spike_2d"])
def test_variational_inequality_holds(solved, name):
    _, prob, sol = solved(name)
    rng = np.random.default_rng(5)
    u = sol.u
    bound = 10 * sol.config.outer_tol * sol.scale
    for _ in range(50):
        bump = rng.normal(size=prob.mesh.n_nodes) * (0.1 + np.abs(u.values).max())
        v = np.maximum(prob.psi.values, u.values + bump)
        v[prob.mesh.boundary_nodes] = prob.g.values[prob.mesh.boundary_nodes]
        v = GridFunction(prob.mesh, v)
        # <Au - f, u - v> <= 0 for every admissible v
        gap = vi_gap(prob, u, v)
        assert gap <= bound
        assert gap <= entropy_threshold(prob, u, u.values - v.values, sol.config)


@pytest.mark.parametrize("theta", [0.0, 0.3])
def test_mirrored_data_mirror_the_solution(theta):
    mesh = Mesh.interval(0.0, 1.0, 48)
    f = lambda x: 10 * x**2 - 3          # noqa: E731
    psi = lambda x: 0.1 - 2 * (x - 0.3) ** 2  # noqa: E731
    a = solve_vi(make_problem(mesh, p=2.5, theta=theta, b=0.5, r=1.5, f=f, psi=psi))
    b = solve_vi(make_problem(mesh, p=2.5, theta=theta, b=0.5, r=1.5, f=lambda x: f(1 - x), psi=lambda x: psi(1 - x)))
    assert np.max(np.abs(a.u.values - b.u.values[::-1])) < 1e-7


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, 33, elements=st.floats(-1, 0.3)), arrays(np.float64, 33, elements=st.floats(0, 0.5)))
def test_raising_the_obstacle_raises_the_solution(psi, lift):
    mesh = Mesh.interval(0.0, 1.0, 32)
    psi[[0, -1]] = 0.0
    lift[[0, -1]] = 0.0
    cfg = SolverConfig(inner_tol=1e-11)
    lo = make_problem(mesh, f=-5.0, psi=GridFunction(mesh, psi))
    hi = make_problem(mesh, f=-5.0, psi=GridFunction(mesh, psi + lift))
    u_lo, u_hi = solve_vi(lo, cfg).u.values, solve_vi(hi, cfg).u.values
    assert np.all(u_hi >= u_lo - 10 * cfg.inner_tol)


def test_solution_minimises_energy_when_theta_is_zero(solved):
    _, prob, sol = solved("plaplace_1d")
    dfac = np.ones(prob.mesh.n_elements)
    e0 = discrete_energy(prob, sol.u, dfac)
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = np.maximum(prob.psi.values, sol.u.values + 0.01 * rng.normal(size=prob.mesh.n_nodes))
        v[prob.mesh.boundary_nodes] = 0.0
        assert discrete_energy(prob, GridFunction(prob.mesh, v), dfac) >= e0 - 1e-10


@pytest.mark.parametrize("name", all_configs())
def test_outer_updates_decrease_eventually(solved, name):
    _, _, sol = solved(name)
    upd = sol.outer_updates
    assert upd[-1] <= sol.config.outer_tol
    tail = upd[len(upd) // 2:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, 17, elements=st.floats(-20, 20)), arrays(np.float64, 17, elements=st.floats(0, 10)))
def test_comparison_principle(f, df):
    mesh = Mesh.interval(0.0, 1.0, 16)
    lo = make_problem(mesh, p=1.8, b=0.5, r=1.5, f=GridFunction(mesh, f), psi=-0.3)
    hi = lo.with_f(GridFunction(mesh, f + df))
    u_lo, u_hi = solve_vi(lo).u.values, solve_vi(hi).u.values
    assert np.all(u_hi >= u_lo - 1e-8)


def test_infeasible_spec_rejected():
    mesh = Mesh.interval(0.0, 1.0, 8)
    with pytest.raises(InfeasibleError):
        make_problem(mesh, psi=0.5, g=0.0)
    with pytest.raises(ValueError):
        make_problem(mesh, f=lambda x: np.where(x > 0.5, np.nan, 0.0))


def test_unsupported_field_kind():
    mesh = Mesh.interval(0.0, 1.0, 8)
    prob = dataclasses.replace(make_problem(mesh), field=FieldSpec(FieldKind.WeightedPLaplacian, 2.0))
    with pytest.raises(NotImplementedError):
        solve_vi(prob)


@pytest.mark.parametrize("kwargs", [{"inner_tol": 0.0}, {"damping": 0.0}, {"damping": 1.5}, {"omega": 2.0}])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_inner_budget_exhaustion_is_flagged():
    prob = make_problem(Mesh.interval(0.0, 1.0, 64), f=1.0)
    sol = solve_vi(prob, SolverConfig(inner_max=20))
    assert not sol.converged
    assert sol.inner_iters_total <= 20
