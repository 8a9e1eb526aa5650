"""
Command-line front end

    contilog [global flags] <command> [options]

Every command prints one JSON report on stdout (schema, command, inputs digest,
result, timing, version). Exit codes: 0 ok, 1 a check found a violation, 2 bad input.
"""

import argparse
import hashlib
import json
import math
import re
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, config, console
from .axioms import Scheme, pq_from_open_set, scheme_defect
from .catgrp import (
    approx_oligo, automorphisms, boundedness_battery, catreport, cayley_bound, chain_validate,
    closed_ball,
)
from .errors import ContilogError, FormulaSyntaxError, InputError
from .evaluator import check_modulus, evaluate
from .mstruct import FiniteCarrier, MetricStructure, group_view, load_structure, structure_from_spec
from .sigform import check_caps, free_vars, parse_formula, print_formula, to_rational
from .typespace import default_family, eps_net, formula_pseudometric, tp, type_distance, type_table
from .ultra import gn_sequence, sequence_from_spec, sym_sequence, ultra_eval

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

_SHORTHAND = re.compile(r"^(gn|sym|cyclic):(\d+)$")
_KINDS = {"gn": "gn", "sym": "sym_hamming", "cyclic": "cyclic"}


# ====== Report serialization ======

def _plain(value: Any) -> Any:
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


def dumps(value: Any, indent: int = 0) -> str:
    """JSON text with floats written to 17 significant digits and keys in insertion order."""
    value = _plain(value)
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return format(value, ".17g") if math.isfinite(value) else "null"
    if isinstance(value, (int, str)):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, set, frozenset)):
        if not value:
            return "[]"
        items = [f"{inner}{dumps(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    return json.dumps(str(value))


class Context:
    """Per-invocation state: settings, input digest and timing."""

    def __init__(self, argv: Sequence[str], settings: config.Settings):
        self.argv = list(argv)
        self.settings = settings
        self.digest = hashlib.sha256()
        self.started = time.perf_counter()

    def note_input(self, data: Any) -> None:
        self.digest.update(data if isinstance(data, bytes) else str(data).encode())

    def report(self, result: Any) -> Dict[str, Any]:
        return {
            "schema": config.REPORT_SCHEMA,
            "command": self.argv,
            "inputs": {"sha256": self.digest.hexdigest()},
            "result": result,
            "timing": round(time.perf_counter() - self.started, 6),
            "version": __version__,
        }

    # -- input loading --

    def structure(self, source: str) -> MetricStructure:
        match = _SHORTHAND.match(source)
        path = Path(source)
        if _is_file(path):
            self.note_input(path.read_bytes())
            return load_structure(path)
        if match:
            self.note_input(source)
            return structure_from_spec({"kind": _KINDS[match.group(1)], "n": int(match.group(2))})
        raise InputError(f"no structure file {source!r} (shorthands: gn:N, sym:N, cyclic:N)")

    def formula(self, M: MetricStructure, text: str, free: Optional[Dict[str, str]] = None):
        self.note_input(text)
        return parse_formula(text, M.signature, self.settings.cap, free)

    def json_arg(self, text: str) -> Any:
        path = Path(text)
        raw = path.read_text() if _is_file(path) else text
        self.note_input(raw)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from exc


def _is_file(path: Path) -> bool:
    try:
        return path.is_file()
    except OSError:
        return False


def _point(M: MetricStructure, sort: str, label: str) -> Any:
    carrier = M.carrier(sort)
    if not isinstance(carrier, FiniteCarrier):
        try:
            return np.array([float(v) for v in label.split(",")])
        except ValueError as exc:
            raise InputError(f"vector for {sort} must be comma-separated numbers, got {label!r}") from exc
    for p in carrier.points:
        if carrier.label(p) == label or str(p) == label:
            return p
    raise InputError(f"no point labelled {label!r} in sort {sort}")


def _group_points(M: MetricStructure, labels: str, sort: Optional[str] = None) -> List[Any]:
    G = group_view(M, sort)
    names = [s.strip() for s in labels.split(";") if s.strip()]
    return [_point(M, G.sort, name) for name in names]


def _pairs(items: Sequence[str], what: str) -> Dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"{what} must look like name=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


# ====== Commands ======

def cmd_eval(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    f = ctx.formula(M, args.formula, _pairs(args.free, "--free"))
    assignment = {}
    given = _pairs(args.assign, "--assign")
    for name, sort in free_vars(f):
        if name in given:
            assignment[name] = _point(M, sort, given[name])
    bounds = evaluate(M, f, assignment, tol=ctx.settings.tol, settings=ctx.settings)
    result = {"structure": M.label, "formula": print_formula(f), "cap": float(f.cap),
              **bounds.to_json(), "warnings": check_caps(f, M.signature)}
    return result, EXIT_OK


def cmd_modulus(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    eps = [to_rational(e) for e in args.eps] if args.eps else None
    kwargs = {"eps_grid": eps} if eps else {}
    arity = tuple(args.arity.split(",")) if args.arity else None
    report = check_modulus(M, args.symbol, arity=arity, tol=ctx.settings.tol, seed=ctx.settings.seed, **kwargs)
    return report.to_json(), EXIT_VIOLATION if report.violated(ctx.settings.tol) else EXIT_OK


def cmd_scheme(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    params = ctx.json_arg(args.params) if args.params else {}
    scheme = Scheme.from_json({"name": args.name, **params})
    if args.open_radius is not None:
        G = group_view(M)
        M = pq_from_open_set(M, closed_ball(G, to_rational(args.open_radius)))
    report = scheme_defect(M, scheme, tol=ctx.settings.tol, settings=ctx.settings)
    return report.to_json(), EXIT_VIOLATION if report.violated(ctx.settings.tol) else EXIT_OK


def cmd_ultra(args, ctx: Context) -> Tuple[Any, int]:
    window = args.window or ctx.settings.ultra_window
    if args.sequence:
        seq = sequence_from_spec(ctx.json_arg(args.sequence), ctx.settings.exact_limit)
    elif args.family and not args.range:
        raise InputError("--family needs --range FIRST LAST")
    elif args.family == "gn":
        seq = gn_sequence(args.range[0], args.range[1], ctx.settings.exact_limit)
    elif args.family == "sym":
        seq = sym_sequence(args.range[0], args.range[1])
    else:
        raise InputError("ultra needs --family with --range, or --sequence")
    f = ctx.formula(seq.member(seq.indices[0]), args.formula)
    report = ultra_eval(seq, f, window, ctx.settings.tol, ctx.settings)
    return {"sequence": seq.label, "formula": print_formula(f), **report.to_json()}, EXIT_OK


def cmd_aut(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    aut = automorphisms(M, args.sort, ctx.settings.aut_cap, ctx.settings.tol)
    return aut.to_json(), EXIT_OK


def cmd_oligo(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    report = approx_oligo(M, args.n, to_rational(args.eps), sort=args.sort, tol=ctx.settings.tol,
                          cap=ctx.settings.aut_cap)
    return report.to_json(), EXIT_OK


def cmd_bound(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    entries = boundedness_battery(M, to_rational(args.radius), args.k, max_f=args.max_f)
    failed = any(not e.achieved for e in entries)
    return {"radius": args.radius, "k": args.k, "forms": [e.to_json() for e in entries]}, \
        EXIT_VIOLATION if failed else EXIT_OK


def cmd_cayley(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    report = cayley_bound(M, _group_points(M, args.subset), args.cap_n)
    ok = report.generates and not report.exceeded
    return report.to_json(), EXIT_OK if ok else EXIT_VIOLATION


def cmd_chain(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    chain = [_group_points(M, level) for level in args.level]
    report = chain_validate(M, chain)
    return report.to_json(), EXIT_OK if report.valid else EXIT_VIOLATION


def cmd_catreport(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    result = catreport(M, to_rational(args.rho), to_rational(args.eps), args.n, tol=ctx.settings.tol,
                       settings=ctx.settings)
    defect = result["definability_defect"]["hi"]
    bad = defect > ctx.settings.tol or result["openness_violations"]
    return result, EXIT_VIOLATION if bad else EXIT_OK


def cmd_types(args, ctx: Context) -> Tuple[Any, int]:
    M = ctx.structure(args.structure)
    if args.phi or args.psi:
        if not (args.phi and args.psi):
            raise InputError("the formula pseudometric needs both --phi and --psi")
        phi, psi = ctx.formula(M, args.phi), ctx.formula(M, args.psi)
        bounds = formula_pseudometric([M], phi, psi, ctx.settings.tol, ctx.settings)
        return {"phi": print_formula(phi), "psi": print_formula(psi), **bounds.to_json()}, EXIT_OK
    sort = args.sort or M.signature.default_sort
    family = default_family(M.signature, args.n, sort, args.depth, ctx.settings.enum_limit)
    if args.tuple:
        points = [_point(M, sort, s.strip()) for s in args.tuple.split(";")]
        p = tp(M, points, family, ctx.settings.tol, ctx.settings)
        result: Dict[str, Any] = {"type": p.to_json()}
        if args.other:
            table = type_table(M, family, ctx.settings.tol, ctx.settings)
            q = tp(M, [_point(M, sort, s.strip()) for s in args.other.split(";")], family,
                   ctx.settings.tol, ctx.settings)
            result["other"] = q.to_json()
            result["realized_d_distance"] = type_distance(M, p, q, ctx.settings.tol, table)
            result["logic_distance"] = p.logic_distance(q)
        return result, EXIT_OK
    report = eps_net(M, args.n, to_rational(args.eps if args.eps is not None else 0), family, sort,
                     ctx.settings.tol, ctx.settings)
    return report.to_json(), EXIT_OK if report.validate(ctx.settings.tol) else EXIT_VIOLATION


COMMANDS: Dict[str, Callable[[argparse.Namespace, Context], Tuple[Any, int]]] = {
    "eval": cmd_eval, "modulus": cmd_modulus, "scheme": cmd_scheme, "ultra": cmd_ultra,
    "aut": cmd_aut, "oligo": cmd_oligo, "bound": cmd_bound, "cayley": cmd_cayley,
    "chain": cmd_chain, "catreport": cmd_catreport, "types": cmd_types,
}


# ====== Argument parsing ======

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--tol", type=float, default=default, help="numerical tolerance (default 1e-9)")
    parser.add_argument("--cap", type=to_rational, default=default, help="formula cap C (default 1)")
    parser.add_argument("--seed", type=int, default=default, help="optimizer seed")
    parser.add_argument("--max-points", type=int, default=default, dest="max_points",
                        help="assignment cap per evaluation")
    parser.add_argument("--config", default=default, help="Python config file (see config.example.py)")
    parser.add_argument("--theme", default=default, choices=sorted(console.THEMES),
                        help="JSON highlighting theme on terminals")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contilog", description="Continuous first-order logic toolkit")
    _global_flags(parser, suppress=False)
    parser.add_argument("--version", action="version", version=f"contilog {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        return p

    p = command("eval", "evaluate a formula in a structure")
    p.add_argument("--structure", required=True)
    p.add_argument("--formula", required=True)
    p.add_argument("--assign", action="append", metavar="VAR=LABEL")
    p.add_argument("--free", action="append", metavar="VAR=SORT")

    p = command("modulus", "test a symbol's continuity modulus")
    p.add_argument("--structure", required=True)
    p.add_argument("--symbol", required=True)
    p.add_argument("--arity", help="comma-separated argument sorts")
    p.add_argument("--eps", nargs="+")

    p = command("scheme", "evaluate an axiom scheme")
    p.add_argument("--structure", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--params", help="JSON object or file with the scheme parameters")
    p.add_argument("--open-radius", dest="open_radius", help="interpret P, Q from the closed ball of this radius")

    p = command("ultra", "tail limits along a structure sequence")
    p.add_argument("--family", choices=["gn", "sym"])
    p.add_argument("--range", nargs=2, type=int, metavar=("FIRST", "LAST"))
    p.add_argument("--sequence", help="JSON sequence spec or file")
    p.add_argument("--formula", required=True)
    p.add_argument("--window", type=int)

    p = command("aut", "automorphism group of a finite structure")
    p.add_argument("--structure", required=True)
    p.add_argument("--sort")

    p = command("oligo", "approximate oligomorphicity witness")
    p.add_argument("--structure", required=True)
    p.add_argument("-n", type=int, default=1)
    p.add_argument("--eps", default="0")
    p.add_argument("--sort")

    p = command("bound", "boundedness covering battery")
    p.add_argument("--structure", required=True)
    p.add_argument("--radius", required=True)
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--max-f", type=int, dest="max_f")

    p = command("cayley", "Cayley-graph covering exponent of a subset")
    p.add_argument("--structure", required=True)
    p.add_argument("--subset", required=True, help="semicolon-separated element labels")
    p.add_argument("--cap-n", type=int, dest="cap_n")

    p = command("chain", "validate an increasing chain of subsets")
    p.add_argument("--structure", required=True)
    p.add_argument("--level", action="append", required=True, help="one level, semicolon-separated labels")

    p = command("catreport", "rho-ball subgroup, definability, coset orbits and near-homogeneity")
    p.add_argument("--structure", required=True)
    p.add_argument("--rho", required=True)
    p.add_argument("--eps", default="0")
    p.add_argument("-n", type=int, default=1)

    p = command("types", "types, eps-nets and the formula pseudometric")
    p.add_argument("--structure", required=True)
    p.add_argument("-n", type=int, default=1)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--sort")
    p.add_argument("--eps")
    p.add_argument("--tuple", help="semicolon-separated labels")
    p.add_argument("--other", help="second tuple for the realized d-distance")
    p.add_argument("--phi")
    p.add_argument("--psi")
    return parser


def _settings(args: argparse.Namespace) -> config.Settings:
    base = config.Settings.from_file(args.config) if getattr(args, "config", None) else config.DEFAULTS
    return base.with_overrides(tol=getattr(args, "tol", None), cap=getattr(args, "cap", None),
                               seed=getattr(args, "seed", None), max_points=getattr(args, "max_points", None),
                               theme=getattr(args, "theme", None))


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    console.configure_logging(getattr(args, "verbose", 0))
    try:
        settings = _settings(args)
        console.set_theme(settings.theme)
        ctx = Context(argv, settings)
        result, code = COMMANDS[args.command](args, ctx)
    except FormulaSyntaxError as exc:
        console.print_error(str(exc))
        if exc.text:
            console.color_print(exc.caret(), console.YELLOW)
        return EXIT_INPUT
    except ContilogError as exc:
        console.print_error(str(exc))
        witness = getattr(exc, "witness", None)
        if witness is not None:
            console.color_print(f"witness: {witness}", console.YELLOW)
        return EXIT_INPUT
    console.print_json_block(dumps(ctx.report(result)))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
