"""Command line interface: ``lenard <command> ...``.

Exit codes: 0 success, 1 verification failed or computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from fractions import Fraction
from typing import List, Sequence

import numpy as np
import sympy

from . import catalog, golden
from .errors import Blowup, IllConditioned, LenardError, NotConstant, UnknownName, XiVanishes
from .hierarchy import (
    ConstraintSpec,
    HierarchyCache,
    constraint_residual,
    lenard_F,
    lenard_U,
    symmetry_constraint,
)
from .numlab import eval_diffpoly, fit_constants, numeric_commutator_check, residual_poly
from .potential import SampledPotential, diffpoly_to_sympy
from .ring import format_rational, parse_rational
from .symmetry import (
    SymmetryOperator,
    build_first_order,
    build_Q_eps_elimination,
    build_Q_recurrence,
    dilation_symmetry,
    verify_commutator,
)

__all__ = ["main", "build_parser"]

NUMERIC_TOL = 1e-8


class UsageError(Exception):
    pass


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"expected an exact rational such as -1 or 3/4, got {text!r}") from exc


def _rational_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(_rational(t) for t in text.split(","))


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_odd(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"order must be a positive odd integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from exc
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


# -- output helpers -------------------------------------------------------------


def _emit(obj) -> None:
    sys.stdout.write(golden.dumps(obj))


def _render(poly, fmt: str) -> str:
    return poly.to_latex() if fmt == "latex" else poly.to_plain()


def _spec(level: int, kappa, constants, bconstants=()) -> ConstraintSpec:
    constants = tuple(constants) if constants else (Fraction(0),) * level
    if len(constants) != level:
        raise UsageError(f"level {level} needs {level} constants C, got {len(constants)}")
    if len(bconstants) > level + 1:
        raise UsageError(f"level {level} takes at most {level + 1} constants B")
    return ConstraintSpec(level, kappa, constants, tuple(bconstants))


def _potential(args):
    if getattr(args, "samples", None):
        return SampledPotential.from_csv(args.samples), None
    entry = catalog.get(args.potential)
    return entry.potential, entry


def _sample_points(pot, entry, npts: int) -> np.ndarray:
    if entry is not None:
        return entry.sample_points(npts)
    lo, hi = pot.domain
    # stay off the spline ends
    pad = 0.05 * (hi - lo)
    return np.linspace(lo + pad, hi - pad, npts)


# -- commands -----------------------------------------------------------------


def cmd_hierarchy(args) -> int:
    cache = HierarchyCache()
    golden.load_cache(cache)
    F = lenard_F(args.level, cache)
    U = lenard_U(args.level, cache)
    golden.save_cache(cache)
    if args.format == "json":
        _emit({"level": args.level, "F": F.to_json(), "U": U.to_json(), "weight": F.weight()})
    elif args.format == "latex":
        print(f"F_{{{args.level}}} = {F.to_latex()}")
        if args.density:
            print(f"U_{{{args.level}}} = {U.to_latex()}")
    else:
        print(f"F_{args.level} = {F.to_plain()}")
        if args.density:
            print(f"U_{args.level} = {U.to_plain()}")
    return 0


def cmd_constraint(args) -> int:
    spec = _spec(args.level, args.kappa, args.constants)
    G = constraint_residual(spec) if args.form == "hierarchy" else symmetry_constraint(spec)
    if args.format == "json":
        _emit({"spec": spec.to_json(), "form": args.form, "G": G.to_json()})
    elif args.format == "latex":
        print(f"G = {G.to_latex()} = 0")
    else:
        print(f"G = {G.to_plain()}")
    return 0


def _build_symmetry(args) -> SymmetryOperator:
    n = args.order
    N = (n - 1) // 2
    if n == 1 and args.kappa:
        return dilation_symmetry(args.kappa, args.shift, args.bconstants[0] if args.bconstants else 0)
    spec = _spec(N, args.kappa, args.constants, args.bconstants)
    if args.method == "eps":
        if spec.kappa:
            raise UsageError("the epsilon route needs kappa = 0; use --method recurrence")
        return build_Q_eps_elimination(build_first_order(spec), spec)
    return build_Q_recurrence(spec)


def _substituted(Q: SymmetryOperator, entry) -> dict:
    V_expr = entry.potential.expr
    return {str(j): sympy.sstr(sympy.simplify(diffpoly_to_sympy(q, V_expr))) for j, q in sorted(Q.Q.coeffs.items())}


def cmd_symmetry(args) -> int:
    Q = _build_symmetry(args)
    entry = catalog.get(args.potential) if args.potential else None
    if args.format == "json":
        out = Q.to_json()
        if entry is not None:
            out["potential"] = entry.name
            out["coefficients_at_potential"] = _substituted(Q, entry)
        _emit(out)
        return 0
    if args.format == "latex":
        print(f"Q = {Q.Q.to_latex()}")
        print(f"G = {Q.constraint.to_latex()} = 0")
    else:
        print(f"Q = {Q.Q.to_plain()}")
        print(f"G = {Q.constraint.to_plain()}")
    if entry is not None:
        for j, q in _substituted(Q, entry).items():
            print(f"q_{j}({entry.name}) = {q}")
    return 0


def cmd_verify(args) -> int:
    Q = _build_symmetry(args)
    if args.numeric:
        if not args.potential:
            raise UsageError("--numeric needs --potential")
        entry = catalog.get(args.potential)
        xs = entry.sample_points(args.points)
        info = numeric_commutator_check(Q, entry.potential, xs, detail=True)
        residual, scale = info["residual"], info["scale"]
        ok = residual < args.tol * scale
        if args.format == "json":
            _emit({"mode": "numeric", "potential": entry.name, "pass": ok, "residual": residual, "scale": scale,
                   "operator": Q.to_json()})
        else:
            print(f"{'PASS' if ok else 'FAIL'} residual {residual:.2g}")
        return 0 if ok else 1
    red = verify_commutator(Q)
    ok = red.is_zero()
    potential_ok = True
    G_at = None
    if args.potential:
        # the potential must satisfy the operator's constraint identically
        entry = catalog.get(args.potential)
        G_at = sympy.simplify(diffpoly_to_sympy(Q.constraint, entry.potential.expr).rewrite(sympy.exp))
        potential_ok = G_at == 0
    passed = ok and potential_ok
    if args.format == "json":
        out = {"mode": "symbolic", "pass": passed, "reduced_residual": red.to_json(), "operator": Q.to_json()}
        if G_at is not None:
            out["constraint_at_potential"] = sympy.sstr(G_at)
        _emit(out)
    else:
        if passed:
            print("PASS residual 0")
        else:
            detail = red.to_plain() if not ok else f"constraint at {args.potential} = {G_at}"
            print(f"FAIL {detail}")
    return 0 if passed else 1


def cmd_solve(args) -> int:
    from .quadrature import find_xi, solve

    entry = catalog.get(args.potential)
    lo, hi = args.x0, args.x1
    if not lo < hi:
        raise UsageError("--x0 must be smaller than --x1")
    if args.xi == "auto":
        mid = 0.5 * (lo + hi)
        xi = find_xi(entry.potential, (lo, hi), args.init, x0=mid)
    else:
        xi = args.xi
    sol = solve(xi, entry.potential, (lo, hi), tol=args.tol)
    table = sol.sample(args.points)
    if args.output == "json":
        out = {
            "potential": entry.name,
            "interval": [lo, hi],
            "branch": sol.branch,
            "alpha": sol.alpha,
            "alpha_exact": None if sol.alpha_exact is None else sympy.sstr(sol.alpha_exact),
            "a": sol.a,
            "residual": sol.residual,
            "basis": None if sol.basis_exprs is None else [sympy.sstr(e) for e in sol.basis_exprs],
            "samples": {k: table[:, i].tolist() for i, k in enumerate(["x", "psi1", "psi2", "residual1", "residual2"])},
        }
        _emit(out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "psi1", "psi2", "residual1", "residual2"])
        for row in table:
            w.writerow([repr(float(v)) for v in row])
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_check(args) -> int:
    pot, entry = _potential(args)
    xs = _sample_points(pot, entry, args.points)
    if args.fit:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IllConditioned)
            res = fit_constants(args.level, args.kappa, pot, xs, fit_kappa=args.fit_kappa, form=args.form)
        ok = res.residual_norm < args.tol
        out = {
            "potential": pot.name,
            "level": args.level,
            "form": args.form,
            "constants": list(res.constants),
            "kappa": res.kappa,
            "residual_norm": res.residual_norm,
            "conditioning": res.conditioning if math.isfinite(res.conditioning) else "inf",
            "ill_conditioned": res.ill_conditioned,
            "pass": ok,
        }
        if args.format == "json":
            _emit(out)
        else:
            consts = ", ".join(f"C_{i} = {c:.10g}" for i, c in enumerate(res.constants))
            kap = f" kappa = {res.kappa:.10g}" if args.fit_kappa else ""
            print(f"{'PASS' if ok else 'FAIL'} residual {res.residual_norm:.2g} {consts}{kap}".rstrip())
            if caught:
                print(f"warning: design matrix ill-conditioned ({out['conditioning']})", file=sys.stderr)
        return 0 if ok else 1
    spec = _spec(args.level, args.kappa, args.constants)
    values = eval_diffpoly(residual_poly(spec, args.form), pot, xs)
    residual = float(np.max(np.abs(values)))
    ok = residual < args.tol
    if args.format == "json":
        _emit({"potential": pot.name, "spec": spec.to_json(), "form": args.form, "residual": residual, "pass": ok})
    else:
        print(f"{'PASS' if ok else 'FAIL'} residual {residual:.2g}")
    return 0 if ok else 1


def cmd_catalog(args) -> int:
    if args.action == "list":
        if args.format == "json":
            _emit({"names": catalog.names()})
        else:
            for e in catalog.list_entries():
                print(f"{e.name:24s} V = {sympy.sstr(e.potential.expr)}")
        return 0
    if not args.name:
        raise UsageError("catalog show needs a NAME")
    entry = catalog.get(args.name)
    data = entry.to_json()
    ok = True
    if args.verify:
        for claim, item in zip(entry.claims, data["claims"]):
            passed, res = catalog.verify_claim(entry, claim)
            item["verified"] = passed
            item["residual"] = res
            ok = ok and passed
    if args.format == "json":
        _emit(data)
    else:
        print(f"{entry.name}: V = {data['V']}")
        if entry.notes:
            print(f"  {entry.notes}")
        for item in data["claims"]:
            status = "holds" if item["holds"] else "fails"
            line = f"  {status}: {'/'.join(item['families'])} form={item['form']} N={item['level']} kappa={item['kappa']}"
            if item["C"] is not None:
                line += f" C=({', '.join(item['C'])})"
            if "verified" in item:
                line += f"  [{'verified' if item['verified'] else 'NOT verified'}, residual {item['residual']:.2g}]"
            print(line)
    return 0 if ok else 1


def cmd_golden(args) -> int:
    if args.regenerate:
        for path in golden.write_golden(args.dir):
            print(f"wrote {path}")
        return 0
    bad = golden.compare_golden(args.dir)
    if bad:
        print("FAIL golden files differ: " + ", ".join(bad))
        return 1
    print("PASS golden files match")
    return 0


# -- parser -------------------------------------------------------------------


def _add_symmetry_args(p):
    p.add_argument("--order", type=_positive_odd, required=True, help="odd order n = 2N+1")
    p.add_argument("--kappa", type=_rational, default=Fraction(0))
    p.add_argument("--constants", type=_rational_list, default=(), help="C_0,...,C_{N-1} (default zeros)")
    p.add_argument("--bconstants", type=_rational_list, default=(), help="B_0,...,B_N (default zeros)")
    p.add_argument("--shift", type=_rational, default=Fraction(0), help="c in the first-order dilation (-kappa x/2 + c) d/dx")
    p.add_argument("--method", choices=["recurrence", "eps"], default="recurrence")
    p.add_argument("--potential", help="catalog name or expr:<expression in x>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lenard", description="Stationary KdV hierarchy and Schrödinger symmetry operators.")
    parser.add_argument("--config", help="key=value file supplying defaults for flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hierarchy", help="print F_N (and U_N)")
    p.add_argument("--level", type=_nonneg, required=True)
    p.add_argument("--format", choices=["json", "latex", "plain"], default="plain")
    p.add_argument("--density", action="store_true", help="also print U_N")
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("constraint", help="print the level-N constraint")
    p.add_argument("--level", type=_nonneg, required=True)
    p.add_argument("--kappa", type=_rational, default=Fraction(0))
    p.add_argument("--constants", type=_rational_list, default=())
    p.add_argument("--form", choices=["hierarchy", "schrodinger"], default="hierarchy")
    p.add_argument("--format", choices=["json", "latex", "plain"], default="plain")
    p.set_defaults(func=cmd_constraint)

    p = sub.add_parser("symmetry", help="build the symmetry operator Q")
    _add_symmetry_args(p)
    p.add_argument("--format", choices=["json", "latex", "plain"], default="plain")
    p.set_defaults(func=cmd_symmetry)

    p = sub.add_parser("verify", help="check [Q, H] = kappa H")
    _add_symmetry_args(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--symbolic", action="store_true", help="reduce modulo the constraint (default)")
    mode.add_argument("--numeric", action="store_true", help="apply to test functions on the potential")
    p.add_argument("--tol", type=_positive_float, default=NUMERIC_TOL)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--format", choices=["json", "plain"], default="plain")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve", help="solve H psi = 0 by quadratures")
    p.add_argument("--potential", required=True)
    p.add_argument("--xi", default="auto", help="auto or an expression in x")
    p.add_argument("--init", type=_float_list, default=(1.0, 0.0, 0.0), help="xi, xi', xi'' at the midpoint for --xi auto")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--tol", type=_positive_float, default=NUMERIC_TOL)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--output", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="residual or fitted constants of a potential")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--potential")
    src.add_argument("--samples", help="CSV with header x,V[,V1,...]")
    p.add_argument("--level", type=_nonneg, required=True)
    p.add_argument("--kappa", type=_rational, default=Fraction(0))
    p.add_argument("--constants", type=_rational_list, default=())
    p.add_argument("--fit", action="store_true")
    p.add_argument("--fit-kappa", action="store_true")
    p.add_argument("--form", choices=["hierarchy", "schrodinger"], default="hierarchy")
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--tol", type=_positive_float, default=NUMERIC_TOL)
    p.add_argument("--format", choices=["json", "plain"], default="plain")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("catalog", help="list or show catalog entries")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.add_argument("--format", choices=["json", "plain"], default="plain")
    p.add_argument("--verify", action="store_true", help="re-check membership claims")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("golden", help="compare or regenerate golden files")
    p.add_argument("--regenerate", action="store_true")
    p.add_argument("--dir", help="golden directory (default: the packaged one)")
    p.set_defaults(func=cmd_golden)
    return parser


def _read_config(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = _read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in values.items():
            action = dests.get(key)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                # argparse applies ``type`` to string defaults
                defaults[key] = value
                action.required = False
        sp.set_defaults(**defaults)
    known_keys = {a.dest for sp in subparsers.choices.values() for a in sp._actions}
    unknown = set(values) - known_keys
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")


def main(argv: List[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (UsageError, OSError) as exc:
        print(f"lenard: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, UnknownName) as exc:
        msg = exc.args[0] if isinstance(exc, UnknownName) else str(exc)
        print(f"lenard: error: {msg}", file=sys.stderr)
        return 2
    except (LenardError, ValueError, OSError) as exc:
        print(f"lenard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
