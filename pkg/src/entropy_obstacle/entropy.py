"""Numerical checks of the entropy inequality and the energy estimates.

Set membership for sublevel sets and annuli is decided per node, and element
energies are shared equally among an element's vertices, so every set energy
here is O(h) accurate and the annulus accounting telescopes exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .field import eval_a
from .mesh import GridFunction, gradient, truncate_values
from .solver import (
    ProblemSpec,
    SolverConfig,
    check_feasible,
    element_factor,
    energy_gradient,
    operator_pairing,
    residual_scale,
)

__all__ = [
    "EntropyReport",
    "EnergyProfile",
    "AnnulusDecomposition",
    "entropy_residual",
    "entropy_threshold",
    "test_family",
    "default_s_grid",
    "verify_entropy",
    "nodal_energy",
    "apriori_profile",
    "truncated_energy_bound",
    "annulus_decomposition",
]


def entropy_residual(problem: ProblemSpec, u: GridFunction, v: GridFunction, s: float) -> float:
    """Discrete LHS - RHS of the truncated inequality for one (v, s) pair."""
    if not s > 0:
        raise ValueError("truncation level s must be positive")
    check_feasible(problem, v)
    z = truncate_values(u.values - v.values, s)
    return operator_pairing(problem, u, z)


def entropy_threshold(problem: ProblemSpec, u: GridFunction, z, config: SolverConfig | None = None) -> float:
    """Tolerance for the pairing <Au - f, z> at a solution returned by ``solve_vi``.

    Inner stopping leaves nodal residuals of size inner_tol * scale, which pair
    with z in the nodal l1 sense; the frozen factor lags u by at most
    outer_tol, which costs theta(p-1) outer_tol int |a(grad u)| |grad z|.
    """
    return _ThresholdCache(problem, u, config)(np.asarray(z, dtype=float))


def _tent(mesh, center, radius):
    d = np.linalg.norm(mesh.nodes - center, axis=1)
    return np.maximum(0.0, 1.0 - d / radius)


def _feasible(problem: ProblemSpec, vals) -> GridFunction:
    v = np.maximum(vals, problem.psi.values)
    bd = problem.mesh.boundary_nodes
    v[bd] = problem.g.values[bd]
    return GridFunction(problem.mesh, v)


def test_family(problem: ProblemSpec, u: GridFunction, family_size: int, seed: int):
    """Deterministic list of ``(descriptor, v)`` feasible test functions.

    Members, in order: the clamped boundary interpolant max(g, psi); the
    obstacle itself when it matches g on the boundary; truncations
    max(psi, T_k(u)) and tent perturbations max(psi, u +- c tent) of the
    solution; then random tent sums max(psi, g + sum c_j tent_j).  The list is
    cut to ``family_size``.
    """
    if family_size < 1:
        raise ValueError("family_size must be >= 1")
    m = problem.mesh
    rng = np.random.default_rng(seed)
    lo = np.array([e[0] for e in m.extent])
    hi = np.array([e[1] for e in m.extent])
    span = float(np.min(hi - lo))
    amp = 1.0 + float(np.max(np.abs(u.values)))
    out = [("clamped_boundary", _feasible(problem, problem.g.values.copy()))]
    bd = m.boundary_nodes
    if np.array_equal(problem.psi.values[bd], problem.g.values[bd]):
        out.append(("obstacle", GridFunction(m, problem.psi.values)))
    n_sol = max(0, (family_size - len(out)) // 3)
    umax = float(np.max(np.abs(u.values)))
    for j in range(n_sol):
        if j % 2 == 0 and umax > 0:
            k = umax * float(rng.uniform(0.05, 0.95))
            out.append((f"solution_truncated(k={k:.6g})", _feasible(problem, truncate_values(u.values, k))))
        else:
            c = lo + (hi - lo) * rng.uniform(0.1, 0.9, size=m.dim)
            rad = span * float(rng.uniform(0.05, 0.4))
            a = amp * float(rng.uniform(-1.0, 1.0))
            out.append((f"solution_tent(a={a:.3g})", _feasible(problem, u.values + a * _tent(m, c, rad))))
    while len(out) < family_size:
        vals = problem.g.values.copy()
        for _ in range(int(rng.integers(1, 5))):
            c = lo + (hi - lo) * rng.uniform(0.05, 0.95, size=m.dim)
            rad = span * float(rng.uniform(0.05, 0.5))
            vals += 2.0 * amp * float(rng.uniform(-1.0, 1.0)) * _tent(m, c, rad)
        out.append(("random_tents", _feasible(problem, vals)))
    return out[:family_size]


test_family.__test__ = False  # not a pytest test despite the name


def default_s_grid(u: GridFunction, points: int = 8) -> list[float]:
    s0 = 0.1 * (1.0 + float(np.max(np.abs(u.values))))
    return [s0 * 2.0**k for k in range(points)]


@dataclass
class EntropyReport:
    test_family_descriptor: str
    seed: int
    pairs: list = field(default_factory=list)  # dicts: v, descriptor, s, residual, threshold

    @property
    def violations(self) -> np.ndarray:
        return np.array([p["residual"] - p["threshold"] for p in self.pairs])

    @property
    def max_violation(self) -> float:
        return float(np.max(self.violations)) if self.pairs else -math.inf

    @property
    def worst(self) -> dict | None:
        if not self.pairs:
            return None
        return self.pairs[int(np.argmax(self.violations))]

    @property
    def passed(self) -> bool:
        return self.max_violation <= 0.0

    @property
    def max_residual(self) -> float:
        return max((p["residual"] for p in self.pairs), default=-math.inf)

    def to_dict(self) -> dict:
        return {
            "test_family_descriptor": self.test_family_descriptor,
            "seed": self.seed,
            "n_pairs": len(self.pairs),
            "max_residual": self.max_residual,
            "max_violation": self.max_violation,
            "worst": self.worst,
            "pass": self.passed,
            "pairs": self.pairs,
        }


def verify_entropy(problem: ProblemSpec, u: GridFunction, family_size: int = 50, s_list=None,
                   seed: int = 0, config: SolverConfig | None = None) -> EntropyReport:
    """Evaluate the truncated inequality over the sampled (v, s) grid.

    Each v is also tested at s = ||u - v||_inf + 1, where truncation is
    inactive.  A pair passes when its residual is at most
    ``entropy_threshold``.  The pairing is linear in the test direction, so
    the operator is applied to u once and dotted with every T_s(u - v).
    """
    s_list = list(default_s_grid(u) if s_list is None else s_list)
    family = test_family(problem, u, family_size, seed)
    descriptor = (f"family_size={family_size}; seed={seed}; members=clamped_boundary, obstacle (if g on boundary), "
                  f"solution truncations/tents, random tent sums; s_grid={[float(f'{s:.6g}') for s in s_list]} "
                  f"+ untruncated")
    report = EntropyReport(test_family_descriptor=descriptor, seed=seed)
    R = energy_gradient(problem, u)
    threshold = _ThresholdCache(problem, u, config)
    for iv, (desc, v) in enumerate(family):
        diff = u.values - v.values
        s_untrunc = float(np.max(np.abs(diff))) + 1.0
        for s in s_list + [s_untrunc]:
            z = truncate_values(diff, s)
            report.pairs.append({
                "v": iv,
                "descriptor": desc,
                "s": float(s),
                "residual": float(R @ z),
                "threshold": threshold(z),
            })
    return report


class _ThresholdCache:
    """``entropy_threshold`` with the u-dependent pieces computed once."""

    def __init__(self, problem, u, config):
        config = config or SolverConfig()
        m = problem.mesh
        self.mesh = m
        self.inner = config.inner_tol * residual_scale(problem)
        self.lag_w = None
        if problem.degeneracy.exponent > 0 and not config.bypass_degeneracy:
            flux = np.linalg.norm(eval_a(problem.field, None, gradient(u)), axis=1)
            self.lag_w = problem.degeneracy.exponent * config.outer_tol * m.element_volume * flux

    def __call__(self, z) -> float:
        val = self.inner * (1.0 + float(np.sum(np.abs(z))))
        if self.lag_w is not None:
            gz = np.linalg.norm(gradient(GridFunction(self.mesh, z)), axis=1)
            val += float(self.lag_w @ gz)
        return 10.0 * val


def nodal_energy(problem: ProblemSpec, u: GridFunction) -> np.ndarray:
    """|grad u|^p (1+|u|)^(-theta(p-1)) per element, shared equally among its vertices."""
    m = problem.mesh
    g = np.linalg.norm(gradient(u), axis=1)
    dens = m.element_volume * g**problem.p * element_factor(problem, u.values)
    out = np.zeros(m.n_nodes)
    np.add.at(out, m.elements, (dens / m.elements.shape[1])[:, None] * np.ones((1, m.elements.shape[1])))
    return out


@dataclass
class EnergyProfile:
    t_values: list
    E_values: list
    r: float

    @property
    def ratios(self) -> list:
        return [E / (1.0 + t**self.r) for t, E in zip(self.t_values, self.E_values)]

    @property
    def fitted_C(self) -> float:
        return float(max(self.ratios)) if self.t_values else 0.0

    @property
    def nondecreasing(self) -> bool:
        E = np.asarray(self.E_values)
        return bool(np.all(np.diff(E) >= 0.0))

    def to_dict(self) -> dict:
        return {"t": list(self.t_values), "E": list(self.E_values), "ratio": self.ratios,
                "r": self.r, "fitted_C": self.fitted_C, "nondecreasing": self.nondecreasing}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "E", "ratio"])
        for t, E, q in zip(self.t_values, self.E_values, self.ratios):
            w.writerow([repr(float(t)), repr(float(E)), repr(float(q))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def apriori_profile(problem: ProblemSpec, u: GridFunction, t_grid) -> EnergyProfile:
    t = np.asarray(t_grid, dtype=float)
    if t.size and (np.any(t <= 0) or np.any(np.diff(t) <= 0)):
        raise ValueError("t_grid must be positive and increasing")
    e = nodal_energy(problem, u)
    a = np.abs(u.values)
    E = [float(e[a < tk].sum()) for tk in t]
    return EnergyProfile(t_values=[float(x) for x in t], E_values=E, r=problem.lower_order.r)


def truncated_energy_bound(problem: ProblemSpec, u: GridFunction, t: float):
    """(int |grad T_t u|^p, (1+t)^(theta(p-1)) (1+t^r), ratio)."""
    if not t > 0:
        raise ValueError("t must be positive")
    m = problem.mesh
    gt = np.linalg.norm(gradient(GridFunction(m, truncate_values(u.values, t))), axis=1)
    lhs = float(np.sum(m.element_volume * gt**problem.p))
    rhs = (1.0 + t) ** problem.degeneracy.exponent * (1.0 + t**problem.lower_order.r)
    return lhs, rhs, lhs / rhs


@dataclass
class AnnulusDecomposition:
    k_values: list
    D_energy: list
    B_energy: list
    B_measure: list

    def telescoping_defect(self) -> float:
        """max_k |D_{k+1} - D_k - B_k|, zero up to summation order."""
        D, B = self.D_energy, self.B_energy
        return max((abs(D[k + 1] - D[k] - B[k]) for k in range(len(B) - 1)), default=0.0)

    def to_dict(self) -> dict:
        return {"k": list(self.k_values), "D_energy": list(self.D_energy),
                "B_energy": list(self.B_energy), "B_measure": list(self.B_measure)}


def annulus_decomposition(problem: ProblemSpec, u: GridFunction, K: int) -> AnnulusDecomposition:
    """Energies on D_k = {|u| <= k} and on the annuli B_k = {k < |u| <= k+1}, k = 0..K.

    The annuli are closed on the upper side so that D_{k+1} is the disjoint
    union of D_k and B_k node by node.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    e = nodal_energy(problem, u)
    a = np.abs(u.values)
    vol = problem.mesh.lumped_volume
    ks = list(range(K + 1))
    D, B, Bm = [], [], []
    for k in ks:
        D.append(float(e[a <= k].sum()))
        band = (a > k) & (a <= k + 1)
        B.append(float(e[band].sum()))
        Bm.append(float(vol[band].sum()))
    return AnnulusDecomposition(ks, D, B, Bm)
