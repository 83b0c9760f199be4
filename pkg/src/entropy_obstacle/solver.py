"""Discrete obstacle problem for the degenerate operator, and its solver.

The degeneracy factor is frozen at an outer iterate ``w``; each frozen problem
is a monotone variational inequality solved by projected nonlinear SOR
(``omega = 1`` is plain Gauss-Seidel).  Outer iterates are damped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .field import (
    DegeneracySpec,
    FieldKind,
    FieldSpec,
    LowerOrderSpec,
    degeneracy_factor,
    eval_a,
    lower_order_term,
    lower_order_potential,
)
from .mesh import GridFunction, Mesh, gradient, integrate

__all__ = [
    "ProblemSpec",
    "SolverConfig",
    "Solution",
    "InfeasibleError",
    "solve_vi",
    "vi_gap",
    "operator_pairing",
    "energy_gradient",
    "element_factor",
    "discrete_energy",
    "residual_scale",
    "check_feasible",
]

log = logging.getLogger(__name__)

FEAS_TOL = 1e-12


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    mesh: Mesh
    field: FieldSpec
    degeneracy: DegeneracySpec
    lower_order: LowerOrderSpec
    f: GridFunction
    psi: GridFunction
    g: GridFunction

    def __post_init__(self):
        for name in ("f", "psi", "g"):
            gf = getattr(self, name)
            if not gf.mesh.same_as(self.mesh):
                raise ValueError(f"{name} lives on a different mesh")
            if not np.all(np.isfinite(gf.values)):
                raise ValueError(f"{name} has non-finite nodal values")
        bd = self.mesh.boundary_nodes
        if np.any(self.psi.values[bd] > self.g.values[bd] + FEAS_TOL):
            raise InfeasibleError("obstacle exceeds the boundary datum on the boundary; K is empty")
        if self.degeneracy.p != self.field.p:
            raise ValueError("degeneracy and field exponents differ")

    @property
    def p(self) -> float:
        return self.field.p

    def with_f(self, f: GridFunction) -> "ProblemSpec":
        return replace(self, f=f)

    def initial_guess(self) -> np.ndarray:
        u0 = np.maximum(self.g.values, self.psi.values)
        u0[self.mesh.boundary_nodes] = self.g.values[self.mesh.boundary_nodes]
        return u0


@dataclass(frozen=True)
class SolverConfig:
    outer_tol: float = 1e-8
    outer_max: int = 200
    inner_tol: float = 1e-10
    inner_max: int = 100_000
    damping: float = 0.7
    newton_local: bool = True
    omega: float | None = None  # None: 2 / (1 + sin(pi h / L))
    local_max: int = 30
    check_every: int = 10
    bypass_degeneracy: bool = False

    def __post_init__(self):
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.omega is not None and not (0.0 < self.omega < 2.0):
            raise ValueError("omega must lie in (0, 2)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Solution:
    problem: ProblemSpec
    u: GridFunction
    active_set: np.ndarray
    outer_iters: int
    inner_iters_total: int
    converged: bool
    residual: np.ndarray  # frozen-problem energy gradient at u
    complementarity: np.ndarray  # min(u - psi, residual) at interior nodes, 0 on boundary
    outer_updates: list = field(default_factory=list)
    scale: float = 1.0
    config: SolverConfig = field(default_factory=SolverConfig)
    frozen: np.ndarray | None = None  # element factor of the last outer iterate

    @property
    def scaled_tol(self) -> float:
        return self.config.inner_tol * self.scale

    def feasibility_violation(self) -> float:
        """Largest amount by which u dips below psi (<= 0 means feasible)."""
        return float(np.max(self.problem.psi.values - self.u.values, initial=-math.inf))

    def is_feasible(self) -> bool:
        bd = self.problem.mesh.boundary_nodes
        return (self.feasibility_violation() <= 10 * self.config.inner_tol
                and np.array_equal(self.u.values[bd], self.problem.g.values[bd]))

    def complementarity_ok(self) -> bool:
        return bool(np.max(np.abs(self.complementarity), initial=0.0) <= self.scaled_tol)

    def diagnostics(self) -> dict:
        interior = self.problem.mesh.interior_mask
        inactive = interior.copy()
        inactive[self.active_set] = False
        stat = np.abs(self.residual[inactive])
        return {
            "converged": bool(self.converged),
            "outer_iters": int(self.outer_iters),
            "inner_iters_total": int(self.inner_iters_total),
            "outer_updates": [float(x) for x in self.outer_updates],
            "active_set_size": int(len(self.active_set)),
            "n_nodes": int(self.problem.mesh.n_nodes),
            "scale": float(self.scale),
            "scaled_tol": float(self.scaled_tol),
            "stationarity_inactive_max": float(stat.max()) if stat.size else 0.0,
            "active_residual_min": float(self.residual[self.active_set].min()) if len(self.active_set) else 0.0,
            "complementarity_max": float(np.max(np.abs(self.complementarity), initial=0.0)),
            "feasibility_violation": self.feasibility_violation(),
            "feasible": bool(self.is_feasible()),
            "complementarity_ok": bool(self.complementarity_ok()),
        }


def element_factor(problem: ProblemSpec, w, bypass: bool = False) -> np.ndarray:
    """Element-averaged degeneracy factor of the nodal values ``w``."""
    m = problem.mesh
    if bypass:
        return np.ones(m.n_elements)
    nodal = degeneracy_factor(problem.degeneracy, np.asarray(w, dtype=float))
    return nodal[m.elements].mean(axis=1)


def residual_scale(problem: ProblemSpec) -> float:
    """1 + ||f||_1 + ||grad g||_p^p."""
    m = problem.mesh
    gnorm = np.linalg.norm(gradient(problem.g), axis=1)
    return 1.0 + integrate(m, np.abs(problem.f.values), "nodes") + integrate(m, gnorm**problem.p, "elements")


def _flux(problem: ProblemSpec, u: GridFunction) -> np.ndarray:
    m = problem.mesh
    centroids = m.nodes[m.elements].mean(axis=1)
    return eval_a(problem.field, centroids, gradient(u))


def energy_gradient(problem: ProblemSpec, u: GridFunction, dfac=None) -> np.ndarray:
    """Nodal gradient of the frozen discrete energy (vectorised reference)."""
    m = problem.mesh
    if dfac is None:
        dfac = element_factor(problem, u.values)
    flux = _flux(problem, u)
    contrib = (m.element_volume * dfac)[:, None] * np.einsum("ed,ekd->ek", flux, m.basis_gradients)
    R = np.zeros(m.n_nodes)
    np.add.at(R, m.elements, contrib)
    R += m.lumped_volume * (lower_order_term(problem.lower_order, u.values) - problem.f.values)
    return R


def operator_pairing(problem: ProblemSpec, u: GridFunction, z, dfac=None) -> float:
    """<A u - f, z> in the discrete (lumped, element-frozen) sense."""
    m = problem.mesh
    zv = z.values if isinstance(z, GridFunction) else np.asarray(z, dtype=float)
    if dfac is None:
        dfac = element_factor(problem, u.values)
    flux = _flux(problem, u)
    gz = gradient(GridFunction(m, zv))
    principal = float(np.sum(m.element_volume * dfac * np.sum(flux * gz, axis=1)))
    lower = float(np.sum(m.lumped_volume * lower_order_term(problem.lower_order, u.values) * zv))
    source = float(np.sum(m.lumped_volume * problem.f.values * zv))
    return principal + lower - source


def discrete_energy(problem: ProblemSpec, u: GridFunction, dfac) -> float:
    m = problem.mesh
    p, eps = problem.p, problem.field.eps_reg
    gn2 = np.sum(gradient(u) ** 2, axis=1)
    phi = (eps * eps + gn2) ** (0.5 * p) / p
    return float(np.sum(m.element_volume * dfac * phi)
                 + integrate(m, lower_order_potential(problem.lower_order, u.values) - problem.f.values * u.values, "nodes"))


def check_feasible(problem: ProblemSpec, v: GridFunction, tol: float = FEAS_TOL) -> None:
    bd = problem.mesh.boundary_nodes
    if np.any(v.values < problem.psi.values - tol):
        raise InfeasibleError("test function dips below the obstacle")
    if np.any(np.abs(v.values[bd] - problem.g.values[bd]) > tol):
        raise InfeasibleError("test function misses the boundary datum")


def vi_gap(problem: ProblemSpec, u: GridFunction, v: GridFunction) -> float:
    """LHS - RHS of the variational inequality for candidate ``u`` and test ``v``."""
    check_feasible(problem, v)
    return operator_pairing(problem, u, u.values - v.values)


def _default_omega(mesh: Mesh) -> float:
    ratio = min((n for n in mesh.resolution))
    return 2.0 / (1.0 + math.sin(math.pi / ratio))


class _Inner:
    """Frozen-factor projected SOR on one problem; holds the sweep arrays."""

    def __init__(self, problem: ProblemSpec, config: SolverConfig, scale: float):
        m = problem.mesh
        if problem.field.kind is not FieldKind.PLaplacian:
            raise NotImplementedError("solver supports the PLaplacian field only")
        self.problem = problem
        self.config = config
        self.offsets, self.elem_ids, self.local = m.node_elements
        if np.max(np.diff(self.offsets)) > _kernels.MAX_ADJ:
            raise ValueError("node valence exceeds kernel limit")
        self.order = np.flatnonzero(m.interior_mask).astype(np.int64)
        self.elements = np.ascontiguousarray(m.elements)
        self.bgrad = np.ascontiguousarray(m.basis_gradients)
        self.vol = np.ascontiguousarray(m.element_volume)
        self.lumped = np.ascontiguousarray(m.lumped_volume)
        self.f = np.ascontiguousarray(problem.f.values)
        self.psi = np.ascontiguousarray(problem.psi.values)
        self.interior = np.ascontiguousarray(m.interior_mask)
        lo = problem.lower_order
        self.scalars = (float(problem.p), float(problem.field.eps_reg), float(lo.b), float(lo.r), float(lo.eps_sign))
        self.omega = config.omega if config.omega is not None else _default_omega(m)
        self.local_max = config.local_max if config.newton_local else 1
        self._R = np.zeros(m.n_nodes)
        self._pr = np.zeros(m.n_nodes)
        self.scale = scale

    def residual(self, u, dfac):
        p, eps, b, r, es = self.scalars
        _kernels.residual_all(u, self.elements, self.bgrad, self.vol, dfac, self.lumped,
                              self.f, p, eps, b, r, es, self._R)
        return self._R

    def measure(self, u, dfac) -> float:
        R = self.residual(u, dfac)
        return _kernels.projected_residual(u, self.psi, R, self.interior, self.config.inner_tol, self._pr)

    def solve(self, u, dfac, tol, budget):
        """Sweep until the projected residual is below ``tol``; returns (sweeps, ok)."""
        p, eps, b, r, es = self.scalars
        local_tol = 1e-3 * tol
        sweeps = 0
        best = self.measure(u, dfac)
        if best <= tol:
            return 0, True
        omega = self.omega
        worse = 0
        while sweeps < budget:
            n = min(self.config.check_every, budget - sweeps)
            for _ in range(n):
                _kernels.pgs_sweep(u, self.psi, self.order, self.offsets, self.elem_ids, self.local,
                                   self.elements, self.bgrad, self.vol, dfac, self.lumped, self.f,
                                   p, eps, b, r, es, omega, local_tol, self.local_max)
            sweeps += n
            res = self.measure(u, dfac)
            if not math.isfinite(res):
                raise FloatingPointError("projected SOR produced non-finite residuals")
            if res <= tol:
                return sweeps, True
            if res < best:
                best, worse = res, 0
            else:
                # SOR residuals are not monotone; only long stalls or blow-ups count
                worse += 1
                if (worse >= 50 or res > 1e6 * best) and omega > 1.0:
                    omega = 1.0 + 0.5 * (omega - 1.0)
                    worse = 0
                    log.debug("reducing SOR relaxation to %.4f", omega)
        return sweeps, False


def solve_vi(problem: ProblemSpec, config: SolverConfig | None = None) -> Solution:
    config = config or SolverConfig()
    m = problem.mesh
    scale = residual_scale(problem)
    final_tol = config.inner_tol * scale
    inner = _Inner(problem, config, scale)

    u = np.ascontiguousarray(problem.initial_guess())
    w = u.copy()
    constant_factor = config.bypass_degeneracy or problem.degeneracy.exponent == 0.0
    updates: list[float] = []
    sweeps_total = 0
    converged = False
    tol = final_tol if constant_factor else max(final_tol, 1e-4 * scale)
    dfac = element_factor(problem, w, config.bypass_degeneracy)
    outer = 0
    for outer in range(1, config.outer_max + 1):
        dfac = element_factor(problem, w, config.bypass_degeneracy)
        budget = config.inner_max - sweeps_total
        if budget <= 0:
            break
        sweeps, ok = inner.solve(u, dfac, tol, budget)
        sweeps_total += sweeps
        update = float(np.max(np.abs(u - w)))
        updates.append(update)
        log.debug("outer %d: update %.3e, sweeps %d, inner tol %.1e", outer, update, sweeps, tol)
        if not ok:
            break
        if update <= config.outer_tol and tol <= final_tol:
            converged = True
            break
        if constant_factor:
            w = u.copy()
        else:
            w = w + config.damping * (u - w)
        # inexact inner solves while the outer iteration is far from its fixed point
        tol = max(final_tol, min(1e-2 * update * scale, 1e-4 * scale))
        if constant_factor or update <= config.outer_tol:
            tol = final_tol

    R = inner.residual(u, dfac).copy()
    gap = u - problem.psi.values
    comp = np.where(m.interior_mask, np.minimum(gap, R), 0.0)
    active = np.flatnonzero(m.interior_mask & (np.abs(gap) <= config.inner_tol))
    return Solution(
        problem=problem,
        u=GridFunction(m, u),
        active_set=active,
        outer_iters=outer,
        inner_iters_total=sweeps_total,
        converged=converged,
        residual=R,
        complementarity=comp,
        outer_updates=updates,
        scale=scale,
        config=config,
        frozen=dfac,
    )
