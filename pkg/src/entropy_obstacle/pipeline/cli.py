"""Command line entry point.

Exit status: 0 when every check passes, 1 when a check fails, 2 on a usage or
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from ..field import FieldKind, FieldSpec, check_structure
from ..mesh import GridFunction
from ..params import InadmissibleParams, ProblemParams, check_admissible, check_remark1, q_range, strong_theta_bound
from .config import ConfigError, builtin_configs, load_config
from .experiments import StabilityAborted, dumps, run_refinement, run_solve, run_stability, run_verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], dict):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return dumps(report)
    rows = [(k, v) for k, v in _flatten(report)]
    if fmt == "csv":
        import csv
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows(rows)
        return buf.getvalue()
    width = max((len(k) for k, _ in rows), default=0)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)


def _common(parser: argparse.ArgumentParser, need_config: bool = True) -> None:
    parser.add_argument("--config", required=need_config,
                        help="JSON config file or builtin name (%s)" % ", ".join(builtin_configs()))
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--format", choices=("json", "csv", "table"), default="json")
    parser.add_argument("--quiet", action="store_true", help="print nothing, only set the exit status")
    parser.add_argument("--allow-dim-mismatch", action="store_true",
                        help="allow params.N != mesh dim (window checks become warnings)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="entropy-obstacle", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponents", help="admissibility, regularity window and consistency checks")
    _common(p, need_config=False)
    p.add_argument("--N", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.0)

    p = sub.add_parser("solve", help="solve one obstacle problem")
    _common(p)
    p.add_argument("--resolution", type=int, nargs="+", default=None)

    p = sub.add_parser("verify", help="entropy inequality, energy profile and annuli for a solution")
    _common(p)
    p.add_argument("--solution", type=Path, default=None,
                   help="solution CSV (default: solve the config first)")

    p = sub.add_parser("stability", help="solve along an approximating data sequence")
    _common(p)
    p.add_argument("--resolution", type=int, nargs="+", default=None)

    p = sub.add_parser("refine", help="nested mesh refinement study")
    _common(p)

    p = sub.add_parser("structure", help="sample the vector field structure conditions")
    _common(p, need_config=False)
    p.add_argument("--p", type=float)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--eps-reg", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=2)
    return ap


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.allow_dim_mismatch:
        cfg.allow_dim_mismatch = True
    return cfg


def _resolution(values):
    if values is None:
        return None
    return values[0] if len(values) == 1 else values


def cmd_exponents(args):
    if args.config:
        params = _config(args).params
    else:
        missing = [k for k in ("N", "p", "r") if getattr(args, k) is None]
        if missing:
            raise ConfigError("--" + missing[0], "required unless --config is given")
        try:
            params = ProblemParams(N=args.N, p=args.p, r=args.r, theta=args.theta, b=args.b)
        except ValueError as exc:
            raise ConfigError("--N", str(exc)) from None
    adm = check_admissible(params)
    report = {"params": params.to_dict(), "admissibility": adm.to_dict(), "range": None, "remark1": None}
    ok = adm.passed
    if ok:
        rng = q_range(params)
        rem = check_remark1(params)
        report["range"] = rng.to_dict()
        report["remark1"] = rem.to_dict()
        report["strong_theta_bound"] = strong_theta_bound(params.N, params.p, params.r)
        ok = rng.nonempty and rem.passed
    report["pass"] = ok
    return report, ok


def cmd_solve(args):
    cfg = _config(args)
    out = args.out or cfg.output_dir
    sol, diag = run_solve(cfg, out, _resolution(args.resolution))
    ok = sol.converged and sol.is_feasible() and sol.complementarity_ok()
    diag["pass"] = ok
    return diag, ok


def cmd_verify(args):
    cfg = _config(args)
    if args.solution is not None:
        mesh = cfg.build_mesh()
        try:
            u = GridFunction.from_csv(mesh, args.solution)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(args.solution), str(exc)) from None
    else:
        u = run_solve(cfg, None)[0].u
    report = run_verify(cfg, u, args.out or cfg.output_dir, args.seed)
    return report, report["pass"]


def cmd_stability(args):
    cfg = _config(args)
    try:
        report = run_stability(cfg, args.out or cfg.output_dir, _resolution(args.resolution))
    except StabilityAborted as exc:
        return exc.report, False
    return report, report["pass"]


def cmd_refine(args):
    cfg = _config(args)
    report = run_refinement(cfg, args.out or cfg.output_dir)
    return report, report["pass"]


def cmd_structure(args):
    if args.config:
        cfg = _config(args)
        spec = cfg.field_spec()
        spec = FieldSpec(spec.kind, spec.p, spec.alpha, spec.beta, spec.gamma, eps_reg=args.eps_reg)
    elif args.p is not None:
        spec = FieldSpec(FieldKind.PLaplacian, args.p, eps_reg=args.eps_reg)
    else:
        raise ConfigError("--p", "required unless --config is given")
    seed = 0 if args.seed is None else args.seed
    rep = check_structure(spec, args.samples, seed, args.dim)
    report = rep.to_dict()
    return report, rep.passed


COMMANDS = {
    "exponents": cmd_exponents,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "stability": cmd_stability,
    "refine": cmd_refine,
    "structure": cmd_structure,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        report, ok = COMMANDS[args.command](args)
    except InadmissibleParams as exc:
        report, ok = {"admissibility": exc.report.to_dict(), "pass": False}, False
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.quiet:
        sys.stdout.write(render(report, args.format))
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
