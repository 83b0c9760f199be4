"""JSON experiment configuration: schema, parsing and problem construction.

Data fields (``f``, ``psi``, ``g`` and ``exact.u``) accept a number (constant),
an expression string in ``x`` (and ``y`` in 2D) using the names in
``EXPR_NAMES``, or ``{"kind": "spike", "mass": m, "width": w, "center": [...]}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..field import DegeneracySpec, FieldKind, FieldSpec, LowerOrderSpec
from ..mesh import GridFunction, Mesh, interpolate
from ..params import ProblemParams
from ..solver import ProblemSpec, SolverConfig

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "builtin_configs",
    "eval_data",
    "spike_profile",
]

SCHEMA_VERSION = 1
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "maximum", "minimum", "where", "clip",
                 "tanh", "sign", "pi")
}


class ConfigError(ValueError):
    """Malformed configuration; ``where`` names the offending field or line."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


_TOP_KEYS = {
    "schema_version", "name", "params", "mesh", "field", "lower_order", "data", "exact", "solver",
    "sequence", "q_choice", "t_grid", "s_grid", "refinement", "verify", "allow_dim_mismatch", "seed",
    "output_dir", "annulus_K",
}


@dataclass
class ExperimentConfig:
    name: str
    params: ProblemParams
    mesh: dict
    field: dict
    lower_order: dict
    data: dict
    solver: SolverConfig
    exact: dict | None = None
    sequence: dict | None = None
    q_choice: Any = "midpoint"
    t_grid: list | None = None
    s_grid: list | None = None
    refinement: dict | None = None
    verify: dict = field(default_factory=lambda: {"family_size": 50})
    allow_dim_mismatch: bool = False
    seed: int = 0
    output_dir: str | None = None
    annulus_K: int = 4

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "params":
                val = val.to_dict()
            elif f.name == "solver":
                val = val.to_dict()
            out[f.name] = val
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def dim(self) -> int:
        return int(self.mesh["dim"])

    def build_mesh(self, resolution=None) -> Mesh:
        res = self.mesh["resolution"] if resolution is None else resolution
        return Mesh(self.dim, self.mesh["extent"], res)

    def field_spec(self) -> FieldSpec:
        return FieldSpec(
            kind=FieldKind(self.field.get("kind", "PLaplacian")),
            p=self.params.p,
            alpha=float(self.field.get("alpha", 1.0)),
            beta=float(self.field.get("beta", 1.0)),
            gamma=self.field.get("gamma"),
            eps_reg=float(self.field.get("eps_reg", 1e-8)),
        )

    def build_problem(self, resolution=None, f: GridFunction | None = None) -> ProblemSpec:
        m = self.build_mesh(resolution)
        p = self.params
        fv = f if f is not None else eval_data(m, self.data["f"], "data.f")
        return ProblemSpec(
            mesh=m,
            field=self.field_spec(),
            degeneracy=DegeneracySpec(theta=p.theta, p=p.p),
            lower_order=LowerOrderSpec(b=p.b, r=p.r, eps_sign=float(self.lower_order.get("eps_sign", 1e-10))),
            f=fv,
            psi=eval_data(m, self.data["psi"], "data.psi"),
            g=eval_data(m, self.data["g"], "data.g"),
        )

    def exact_solution(self):
        """Callable exact solution, or None."""
        if not self.exact or self.exact.get("u") is None:
            return None
        spec = self.exact["u"]
        dim = self.dim
        return lambda *xs: _eval_expr(spec, xs, dim, "exact.u")


def spike_profile(mesh: Mesh, mass: float, width: float, center) -> np.ndarray:
    """Nodal values of m (1 - rho^2)^2 / c_w with rho = |x - center| / width.

    c_w is the closed-form integral of the profile: 16 w / 15 in 1D and
    pi w^2 / 3 in 2D.
    """
    c = np.asarray(center, dtype=float).reshape(1, -1)
    rho2 = np.sum((mesh.nodes - c) ** 2, axis=1) / width**2
    bump = np.where(rho2 < 1.0, (1.0 - rho2) ** 2, 0.0)
    norm = 16.0 * width / 15.0 if mesh.dim == 1 else math.pi * width**2 / 3.0
    return mass * bump / norm


def _eval_expr(spec, coords, dim, where):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.full(np.shape(coords[0]), float(spec))
    if isinstance(spec, str):
        ns = dict(EXPR_NAMES)
        ns["x"] = coords[0]
        if dim == 2:
            ns["y"] = coords[1]
        try:
            val = eval(compile(spec, f"<{where}>", "eval"), {"__builtins__": {}}, ns)  # noqa: S307
        except Exception as exc:  # any failure in a user expression is a config error
            raise ConfigError(where, f"cannot evaluate expression {spec!r}: {exc}") from None
        return np.broadcast_to(np.asarray(val, dtype=float), np.shape(coords[0])).copy()
    raise ConfigError(where, f"unsupported data specification {spec!r}")


def eval_data(mesh: Mesh, spec, where: str = "data") -> GridFunction:
    if isinstance(spec, dict):
        if spec.get("kind") != "spike":
            raise ConfigError(where, f"unknown data kind {spec.get('kind')!r}")
        center = spec.get("center") or [0.5 * (a + b) for a, b in mesh.extent]
        return GridFunction(mesh, spike_profile(mesh, float(spec.get("mass", 1.0)), float(spec["width"]), center))
    vals = _eval_expr(spec, [mesh.nodes[:, d] for d in range(mesh.dim)], mesh.dim, where)
    if not np.all(np.isfinite(vals)):
        raise ConfigError(where, "expression produced non-finite values")
    return GridFunction(mesh, vals)


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}.{key}" if where else key, "missing required field")
    return d[key]


def _num(val, where, kind=float):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(where, f"expected a number, got {val!r}")
    if kind is int:
        if int(val) != val:
            raise ConfigError(where, f"expected an integer, got {val!r}")
        return int(val)
    return float(val)


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")

    pr = _req(raw, "params", "")
    if not isinstance(pr, dict):
        raise ConfigError("params", "expected an object")
    try:
        params = ProblemParams(
            N=_num(_req(pr, "N", "params"), "params.N", int),
            p=_num(_req(pr, "p", "params"), "params.p"),
            r=_num(_req(pr, "r", "params"), "params.r"),
            theta=_num(pr.get("theta", 0.0), "params.theta"),
            b=_num(pr.get("b", 0.0), "params.b"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("params", str(exc)) from None

    mesh = dict(_req(raw, "mesh", ""))
    dim = _num(_req(mesh, "dim", "mesh"), "mesh.dim", int)
    if dim not in (1, 2):
        raise ConfigError("mesh.dim", "must be 1 or 2")
    _req(mesh, "extent", "mesh")
    _req(mesh, "resolution", "mesh")
    mesh["dim"] = dim

    data = dict(_req(raw, "data", ""))
    for key in ("f", "psi", "g"):
        _req(data, key, "data")

    solver_raw = dict(raw.get("solver", {}))
    valid = {f.name for f in fields(SolverConfig)}
    bad = set(solver_raw) - valid
    if bad:
        raise ConfigError(f"solver.{sorted(bad)[0]}", "unknown solver setting")
    try:
        solver = SolverConfig(**solver_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("solver", str(exc)) from None

    seq = raw.get("sequence")
    if seq is not None:
        seq = dict(seq)
        if _req(seq, "kind", "sequence") not in ("TruncateData", "MollifySpike"):
            raise ConfigError("sequence.kind", f"unknown sequence kind {seq['kind']!r}")
        ns = [_num(n, "sequence.n_values", int) for n in _req(seq, "n_values", "sequence")]
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ConfigError("sequence.n_values", "must be a nonempty strictly increasing list of integers >= 1")
        seq["n_values"] = ns

    q_choice = raw.get("q_choice", "midpoint")
    if q_choice != "midpoint":
        if not (isinstance(q_choice, dict) and set(q_choice) == {"explicit"}):
            raise ConfigError("q_choice", "expected \"midpoint\" or {\"explicit\": q}")
        q_choice = {"explicit": _num(q_choice["explicit"], "q_choice.explicit")}

    def grid(key):
        val = raw.get(key)
        if val is None:
            return None
        vals = [_num(v, key) for v in val]
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(key, "must be a positive increasing list")
        return vals

    refinement = raw.get("refinement")
    if refinement is not None:
        res = _req(refinement, "resolutions", "refinement")
        res = [_num(r, "refinement.resolutions", int) for r in res]
        if any(b != 2 * a for a, b in zip(res, res[1:])):
            raise ConfigError("refinement.resolutions", "resolutions must be nested (each twice the previous)")
        refinement = dict(refinement, resolutions=res)

    verify = dict(raw.get("verify", {"family_size": 50}))
    verify["family_size"] = _num(verify.get("family_size", 50), "verify.family_size", int)

    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        params=params,
        mesh=mesh,
        field=dict(raw.get("field", {})),
        lower_order=dict(raw.get("lower_order", {})),
        data=data,
        solver=solver,
        exact=raw.get("exact"),
        sequence=seq,
        q_choice=q_choice,
        t_grid=grid("t_grid"),
        s_grid=grid("s_grid"),
        refinement=refinement,
        verify=verify,
        allow_dim_mismatch=bool(raw.get("allow_dim_mismatch", False)),
        seed=_num(raw.get("seed", 0), "seed", int),
        output_dir=raw.get("output_dir"),
        annulus_K=_num(raw.get("annulus_K", 4), "annulus_K", int),
    )
    # surface geometry and data errors now rather than mid-run
    try:
        cfg.build_problem()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("mesh/data", str(exc)) from None
    return cfg


def builtin_configs() -> dict[str, Path]:
    return {p.stem: p for p in sorted(CONFIG_DIR.glob("*.json"))}


def load_config(source) -> ExperimentConfig:
    """Load from a path, a builtin name (e.g. ``poisson_1d``) or a dict."""
    if isinstance(source, dict):
        return parse_config(source)
    path = Path(source)
    if not path.exists():
        builtins = builtin_configs()
        if str(source) in builtins:
            path = builtins[str(source)]
        else:
            raise ConfigError(str(source), "no such file or builtin configuration")
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return parse_config(raw)
