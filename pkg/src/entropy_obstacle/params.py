"""Exponent arithmetic for the degenerate obstacle problem.

Every quantity here is a closed-form function of the tuple (N, p, r, theta, b):
the standing admissibility region, the W^{1,q} regularity window and its two
branches, Sobolev conjugates, and the consistency checks relating them.

All bound comparisons are strict and use an absolute tolerance ``TOL``; a
value that ties a bound to within ``TOL`` is reported as a failure.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

__all__ = [
    "TOL",
    "MIDPOINT_EPS",
    "ProblemParams",
    "Branch",
    "ExponentRange",
    "AdmissibilityReport",
    "Remark1Report",
    "InadmissibleParams",
    "check_admissible",
    "q_range",
    "sobolev_conjugate",
    "check_remark1",
    "strong_theta_bound",
    "midpoint",
]

TOL = 1e-12
MIDPOINT_EPS = 1e-9


class InadmissibleParams(ValueError):
    """Raised when an operation needs the standing assumptions to hold."""

    def __init__(self, report: "AdmissibilityReport"):
        self.report = report
        super().__init__("inadmissible parameters: failed " + ", ".join(report.failed()))


@dataclass(frozen=True)
class ProblemParams:
    N: int
    p: float
    r: float
    theta: float
    b: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class Branch(str, enum.Enum):
    HighR = "HighR"
    LowR = "LowR"


@dataclass(frozen=True)
class ExponentRange:
    """Open interval ``(lower, upper)`` of admissible integrability exponents."""

    lower: float
    upper: float
    branch: Branch

    @property
    def nonempty(self) -> bool:
        return self.lower < self.upper - TOL

    def contains(self, q: float) -> bool:
        return self.lower + TOL < q < self.upper - TOL

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "branch": self.branch.value,
            "nonempty": self.nonempty,
        }


@dataclass(frozen=True)
class AdmissibilityReport:
    params: ProblemParams
    p_lower: float  # 2 - 1/N
    p_lower_ok: bool
    p_upper_ok: bool
    r_ok: bool
    theta_bound_window: float  # N/(N-1) - 1/(p-1)
    theta_bound_absorption: float  # (p-r)/(p-1)
    theta_ok: bool

    @property
    def theta_bound(self) -> float:
        return min(self.theta_bound_window, self.theta_bound_absorption)

    @property
    def passed(self) -> bool:
        return self.p_lower_ok and self.p_upper_ok and self.r_ok and self.theta_ok

    def failed(self) -> list[str]:
        names = {
            "p > 2 - 1/N": self.p_lower_ok,
            "p < N": self.p_upper_ok,
            "1 <= r < p": self.r_ok,
            "0 <= theta < theta_bound": self.theta_ok,
        }
        return [k for k, ok in names.items() if not ok]

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "conditions": {
                "p > 2 - 1/N": {"pass": self.p_lower_ok, "bound": self.p_lower},
                "p < N": {"pass": self.p_upper_ok, "bound": float(self.params.N)},
                "1 <= r < p": {"pass": self.r_ok},
                "0 <= theta < theta_bound": {
                    "pass": self.theta_ok,
                    "bound_window": self.theta_bound_window,
                    "bound_absorption": self.theta_bound_absorption,
                    "bound": self.theta_bound,
                },
            },
            "pass": self.passed,
        }


@dataclass(frozen=True)
class Remark1Report:
    branch: Branch
    # None when the inclusion is vacuous (LowR branch)
    inclusion: bool | None
    conjugate_dominates: bool
    upper_below_p: bool

    @property
    def passed(self) -> bool:
        return self.inclusion is not False and self.conjugate_dominates and self.upper_below_p

    def to_dict(self) -> dict:
        return {
            "branch": self.branch.value,
            "inclusion": self.inclusion,
            "conjugate_dominates": self.conjugate_dominates,
            "upper_below_p": self.upper_below_p,
            "pass": self.passed,
        }


def _lt(a: float, b: float) -> bool:
    """Strict ``a < b``; ties within TOL count as failures."""
    return a < b - TOL


def _finite(*xs: float) -> bool:
    return all(math.isfinite(x) for x in xs)


def check_admissible(params: ProblemParams) -> AdmissibilityReport:
    N, p, r, theta = params.N, params.p, params.r, params.theta
    if not _finite(p, r, theta, params.b):
        raise ValueError("p, r, theta, b must be finite")
    p_lower = 2.0 - 1.0 / N
    if p > 1.0:
        window = N / (N - 1.0) - 1.0 / (p - 1.0)
        absorption = (p - r) / (p - 1.0)
    else:
        window = absorption = -math.inf
    theta_bound = min(window, absorption)
    return AdmissibilityReport(
        params=params,
        p_lower=p_lower,
        p_lower_ok=_lt(p_lower, p),
        p_upper_ok=_lt(p, N),
        r_ok=(r >= 1.0 - TOL) and _lt(r, p),
        theta_bound_window=window,
        theta_bound_absorption=absorption,
        theta_ok=(theta >= -TOL) and _lt(theta, theta_bound) and params.b >= 0.0,
    )


def _require_admissible(params: ProblemParams) -> None:
    report = check_admissible(params)
    if not report.passed:
        raise InadmissibleParams(report)


def _upper(N: int, p: float, theta: float) -> float:
    return N * (p - 1.0) * (1.0 - theta) / (N - 1.0 - theta * (p - 1.0))


def q_range(params: ProblemParams) -> ExponentRange:
    _require_admissible(params)
    N, p, r, theta = params.N, params.p, params.r, params.theta
    upper = _upper(N, p, theta)
    if r >= (2.0 * N - 1.0) / (N - 1.0):
        return ExponentRange(N * (r - 1.0) / (N + r - 1.0), upper, Branch.HighR)
    return ExponentRange(1.0, upper, Branch.LowR)


def sobolev_conjugate(q: float, N: int) -> float:
    if not (1.0 <= q < N):
        raise ValueError(f"Sobolev conjugate needs 1 <= q < N, got q={q}, N={N}")
    return N * q / (N - q)


def midpoint(rng: ExponentRange, eps: float = MIDPOINT_EPS) -> float:
    """Interior representative of an open window: geometric mean, clipped."""
    if not rng.nonempty:
        raise ValueError("empty exponent window has no interior point")
    q = math.sqrt(rng.lower * rng.upper)
    return min(max(q, rng.lower + eps), rng.upper - eps)


def check_remark1(params: ProblemParams) -> Remark1Report:
    rng = q_range(params)
    N, p, r = params.N, params.p, params.r
    if rng.branch is Branch.HighR:
        inclusion = rng.lower >= 1.0 - TOL and _lt(rng.lower, rng.upper)
    else:
        inclusion = None
    # q -> Nq/(N-q) is increasing, so the infimum of the window is the binding point
    q_inf = rng.lower + MIDPOINT_EPS
    dominates = q_inf < N and _lt(r - 1.0, sobolev_conjugate(q_inf, N))
    return Remark1Report(
        branch=rng.branch,
        inclusion=inclusion,
        conjugate_dominates=dominates,
        upper_below_p=_lt(rng.upper, p),
    )


def strong_theta_bound(N: int, p: float, r: float) -> float:
    """Theta threshold below which the flux also converges strongly in L^1."""
    return min(1.0 / (N - p + 1.0), N / (N - 1.0) - 1.0 / (p - 1.0), (p - r) / (p - 1.0))
