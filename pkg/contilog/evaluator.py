"""
Formula evaluation

- ``evaluate``: value of a formula in a structure under an assignment, as ValueBounds.
  Connectives are computed literally with the formula's cap C. Quantifiers over finite
  sorts enumerate the carrier exactly; quantifiers over Hilbert balls run the
  multistart optimizer, certifying one side only.
- ``check_modulus``: tests a symbol's declared continuity modulus.
- ``enum_formulas``: deterministic enumeration of formulas up to a depth.
- ``elem_equiv_depth``: depth-k equivalence of two structures.
"""

import itertools
import logging
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import config
from .errors import (
    CapExceededError, EmptySortError, InputError, SignatureMismatchError, SortMismatchError,
    UnboundVariableError,
)
from .mstruct import BallCarrier, FiniteCarrier, MetricStructure, Point
from .optimize import minimize_on_balls
from .sigform import (
    BINARY_OPS, COMMUTATIVE_OPS, QUANTIFIERS, Atomic, Binary, Const, Dist, Formula, Node,
    Quant, Signature, Term, Unary, Var, atoms, depth, format_rational, free_vars, print_node,
)

logger = logging.getLogger(__name__)

Assignment = Mapping[str, Point]


@dataclass(frozen=True)
class ValueBounds:
    """An evaluated value as an interval, each side flagged certified or heuristic."""

    lo: Any
    hi: Any
    lo_certified: bool = True
    hi_certified: bool = True
    witness: Optional[Dict[str, str]] = None

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def exact(cls, value: Any, witness: Optional[Dict[str, str]] = None) -> "ValueBounds":
        return cls(value, value, True, True, witness)

    @property
    def certified(self) -> bool:
        return self.lo_certified and self.hi_certified

    @property
    def is_exact(self) -> bool:
        return self.certified and self.lo == self.hi

    @property
    def value(self) -> Any:
        return self.lo if self.lo == self.hi else (self.lo + self.hi) / 2

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "lo": float(self.lo), "hi": float(self.hi),
            "lo_certified": self.lo_certified, "hi_certified": self.hi_certified,
            "certified": self.certified,
        }
        if self.is_exact and isinstance(self.lo, (int, Fraction)):
            out["exact"] = format_rational(Fraction(self.lo))
        if self.witness:
            out["witness"] = dict(self.witness)
        return out


# ====== Interval semantics of the connectives ======

def _half(x: ValueBounds) -> ValueBounds:
    return ValueBounds(x.lo / 2, x.hi / 2, x.lo_certified, x.hi_certified)


def _neg(x: ValueBounds, cap: Fraction) -> ValueBounds:
    return ValueBounds(cap - x.hi, cap - x.lo, x.hi_certified, x.lo_certified)


def _binary(op: str, x: ValueBounds, y: ValueBounds, cap: Fraction) -> ValueBounds:
    if op == "sub":
        return ValueBounds(max(x.lo - y.hi, 0), max(x.hi - y.lo, 0),
                           x.lo_certified and y.hi_certified, x.hi_certified and y.lo_certified)
    if op == "add":
        return ValueBounds(min(x.lo + y.lo, cap), min(x.hi + y.hi, cap),
                           x.lo_certified and y.lo_certified, x.hi_certified and y.hi_certified)
    if op == "min":
        return ValueBounds(min(x.lo, y.lo), min(x.hi, y.hi),
                           x.lo_certified and y.lo_certified, x.hi_certified and y.hi_certified)
    if op == "max":
        return ValueBounds(max(x.lo, y.lo), max(x.hi, y.hi),
                           x.lo_certified and y.lo_certified, x.hi_certified and y.hi_certified)
    if op == "absdiff":
        flag = x.certified and y.certified
        return ValueBounds(max(0, x.lo - y.hi, y.lo - x.hi), max(x.hi - y.lo, y.hi - x.lo), flag, flag)
    raise ValueError(f"unknown connective {op}")


# ====== Evaluator ======

class Evaluator:
    """Evaluates formula nodes of one structure; holds the optimizer state."""

    def __init__(self, M: MetricStructure, cap: Fraction, settings: config.Settings = config.DEFAULTS,
                 rng: Optional[np.random.Generator] = None):
        self.M = M
        self.cap = cap
        self.settings = settings
        self.rng = rng if rng is not None else np.random.default_rng(settings.seed)
        self._continuous_depth = 0

    def term(self, t: Term, env: Mapping[str, Point]) -> Point:
        if isinstance(t, Var):
            try:
                return env[t.name]
            except KeyError:
                raise UnboundVariableError(t.name) from None
        fn = self.M.function(t.symbol, t.arity)
        return fn(*(self.term(a, env) for a in t.args))

    def value(self, node: Node, env: Dict[str, Point]) -> ValueBounds:
        if isinstance(node, Const):
            return ValueBounds.exact(node.value)
        if isinstance(node, Dist):
            return ValueBounds.exact(self.M.dist(node.sort, self.term(node.left, env), self.term(node.right, env)))
        if isinstance(node, Atomic):
            fn = self.M.predicate(node.predicate, node.arity)
            return ValueBounds.exact(fn(*(self.term(a, env) for a in node.args)))
        if isinstance(node, Unary):
            inner = self.value(node.arg, env)
            return _half(inner) if node.op == "half" else _neg(inner, self.cap)
        if isinstance(node, Binary):
            return _binary(node.op, self.value(node.left, env), self.value(node.right, env), self.cap)
        if isinstance(node, Quant):
            carrier = self.M.carrier(node.sort)
            if isinstance(carrier, FiniteCarrier):
                return self._finite_quantifier(node, carrier, env)
            return self._ball_quantifier(node, env)
        raise TypeError(f"not a formula node: {node!r}")

    def _finite_quantifier(self, node: Quant, carrier: FiniteCarrier, env: Dict[str, Point]) -> ValueBounds:
        if len(carrier) == 0:
            raise EmptySortError(node.sort)
        is_sup = node.kind == "sup"
        agg = max if is_sup else min
        best: Optional[ValueBounds] = None
        best_point = None
        lo = hi = None
        lo_c = hi_c = True
        saved = env.get(node.var, _MISSING)
        try:
            for p in carrier:
                env[node.var] = p
                v = self.value(node.body, env)
                lo_c &= v.lo_certified
                hi_c &= v.hi_certified
                lo = v.lo if lo is None else agg(lo, v.lo)
                hi = v.hi if hi is None else agg(hi, v.hi)
                if best is None or (v.hi > best.hi if is_sup else v.lo < best.lo):
                    best, best_point = v, p
        finally:
            if saved is _MISSING:
                env.pop(node.var, None)
            else:
                env[node.var] = saved
        witness = {node.var: carrier.label(best_point)}
        if isinstance(node.body, Quant) and node.body.kind == node.kind and best.witness:
            witness.update(best.witness)
        return ValueBounds(lo, hi, lo_c, hi_c, witness)

    def _ball_quantifier(self, node: Quant, env: Dict[str, Point]) -> ValueBounds:
        block: List[Tuple[str, BallCarrier]] = []
        body: Node = node
        while isinstance(body, Quant) and body.kind == node.kind and isinstance(self.M.carrier(body.sort), BallCarrier):
            block.append((body.var, self.M.carrier(body.sort)))
            body = body.body
        is_sup = node.kind == "sup"
        names = [v for v, _ in block]
        saved = {v: env.get(v, _MISSING) for v in names}

        def bounds_at(points: Tuple[np.ndarray, ...]) -> ValueBounds:
            for v, p in zip(names, points):
                env[v] = p
            return self.value(body, env)

        def objective(points: Tuple[np.ndarray, ...]) -> float:
            b = bounds_at(points)
            return -float(b.lo) if is_sup else float(b.hi)

        starts = self.settings.multistart if self._continuous_depth == 0 else self.settings.inner_starts
        self._continuous_depth += 1
        try:
            result = minimize_on_balls(objective, [c for _, c in block], self.rng, starts,
                                       self.settings.max_descent_steps, self.settings.stationarity)
            best = bounds_at(result.point)
        finally:
            self._continuous_depth -= 1
            for v, old in saved.items():
                if old is _MISSING:
                    env.pop(v, None)
                else:
                    env[v] = old
        witness = {v: np.array2string(p, precision=6) for v, p in zip(names, result.point)}
        logger.debug("%s over %s: %d evaluations, converged=%s", node.kind, names,
                     result.evaluations, result.converged)
        if is_sup:
            return ValueBounds(best.lo, max(best.lo, best.hi), best.lo_certified, False, witness)
        return ValueBounds(min(best.lo, best.hi), best.hi, False, best.hi_certified, witness)


_MISSING = object()


def workload(M: MetricStructure, node: Node) -> int:
    """Number of assignments visited by exhaustive quantification."""
    if isinstance(node, Quant):
        carrier = M.carrier(node.sort)
        size = len(carrier) if isinstance(carrier, FiniteCarrier) else 1
        return size * workload(M, node.body)
    if isinstance(node, Unary):
        return workload(M, node.arg)
    if isinstance(node, Binary):
        return workload(M, node.left) + workload(M, node.right)
    return 1


def _bind(M: MetricStructure, f: Formula, a: Optional[Assignment]) -> Dict[str, Point]:
    env: Dict[str, Point] = {}
    a = dict(a or {})
    for name, sort in free_vars(f):
        if name not in a:
            raise UnboundVariableError(name)
        carrier = M.carrier(sort)
        point = a[name]
        if isinstance(carrier, FiniteCarrier):
            if point not in carrier:
                raise SortMismatchError(f"{name} = {point!r} is not a point of sort {sort}")
        else:
            point = np.asarray(point, dtype=float)
            if point.shape != (carrier.real_dim,) or not carrier.contains(point):
                raise SortMismatchError(f"{name} is not a vector of ball {sort}")
        env[name] = point
    return env


def evaluate(M: MetricStructure, f: Formula, a: Optional[Assignment] = None, tol: float = config.TOL,
             settings: config.Settings = config.DEFAULTS,
             rng: Optional[np.random.Generator] = None) -> ValueBounds:
    """Evaluate ``f`` in ``M`` under ``a`` (a mapping from free variables to points)."""
    env = _bind(M, f, a)
    load = workload(M, f.root)
    if load > settings.max_points:
        raise CapExceededError("quantifier assignments", load, settings.max_points)
    result = Evaluator(M, f.cap, settings, rng).value(f.root, env)
    return _clamp(result, f.cap, tol)


def _clamp(v: ValueBounds, cap: Fraction, tol: float) -> ValueBounds:
    """Snap float noise within tol of [0, C] back into the range."""
    lo, hi = v.lo, v.hi
    if isinstance(lo, float) and -tol <= lo < 0:
        lo = 0.0
    if isinstance(hi, float) and float(cap) < hi <= float(cap) + tol:
        hi = float(cap)
    if lo is v.lo and hi is v.hi:
        return v
    return replace(v, lo=min(lo, hi), hi=hi)


# ====== Defect reports ======

@dataclass
class DefectEntry:
    name: str
    bounds: ValueBounds
    witness: Any = None
    formula: Optional[str] = None
    violated: Optional[bool] = None
    detail: Dict[str, Any] = field(default_factory=dict)

    def is_violation(self, tol: float) -> bool:
        return self.violated if self.violated is not None else float(self.bounds.hi) > tol

    def to_json(self) -> Dict[str, Any]:
        out = {"name": self.name, "bounds": self.bounds.to_json()}
        if self.formula:
            out["formula"] = self.formula
        if self.witness is not None:
            out["witness"] = self.witness
        if self.violated is not None:
            out["violated"] = self.violated
        out.update(self.detail)
        return out


@dataclass
class DefectReport:
    """Per-entry bounds; the worst defect is the largest upper bound."""

    subject: str
    entries: List[DefectEntry] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    diagnostics: List[DefectEntry] = field(default_factory=list)

    @property
    def worst_entry(self) -> Optional[DefectEntry]:
        if not self.entries:
            return None
        return max(self.entries, key=lambda e: e.bounds.hi)

    @property
    def worst(self) -> Any:
        entry = self.worst_entry
        return entry.bounds.hi if entry is not None else Fraction(0)

    @property
    def witness(self) -> Any:
        entry = self.worst_entry
        return entry.witness if entry is not None else None

    def entry(self, name: str) -> DefectEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def violated(self, tol: float = config.TOL) -> bool:
        return any(e.is_violation(tol) for e in self.entries)

    def to_json(self) -> Dict[str, Any]:
        worst = self.worst
        out = {
            "subject": self.subject,
            "worst": float(worst),
            "entries": [e.to_json() for e in self.entries],
            "notes": list(self.notes),
            "diagnostics": [e.to_json() for e in self.diagnostics],
        }
        if isinstance(worst, (int, Fraction)):
            out["worst_exact"] = format_rational(Fraction(worst))
        return out


# ====== Modulus checks ======

def check_modulus(M: MetricStructure, symbol: str,
                  eps_grid: Sequence[Any] = (Fraction(1, 8), Fraction(1, 4), Fraction(1, 2)),
                  arity: Optional[Tuple[str, ...]] = None, samples: int = 200, tol: float = config.TOL,
                  seed: int = config.SEED) -> DefectReport:
    """Test d(x_j, x'_j) < gamma_j(eps) => |R(..x_j..) - R(..x'_j..)| < eps for each argument j.

    Finite sorts are enumerated exhaustively; Hilbert-ball arguments are sampled.
    """
    sig = M.signature
    if symbol == "d":
        sorts = [arity[0]] if arity else [s for s in sig.sorts if M.is_finite(s)]
        decls = [sig.metric_decl(s) for s in sorts]
    else:
        decls = [d for d in sig.overloads("predicate", symbol) + sig.overloads("function", symbol)
                 if arity is None or d.arity == tuple(arity)]
        if not decls and arity is not None:
            decls = [sig.decl("function", symbol, tuple(arity))]
        if not decls:
            raise InputError(f"no symbol {symbol!r} in {M.label}")
    rng = np.random.default_rng(seed)
    report = DefectReport(f"modulus of {symbol} on {M.label}")
    for decl in decls:
        if decl.name == "d":
            impl = lambda x, y, s=decl.arity[0]: M.dist(s, x, y)  # noqa: E731
            as_predicate = True
        elif decl.is_predicate:
            impl, as_predicate = M.predicate(decl.name, decl.arity), True
        else:
            impl, as_predicate = M.function(decl.name, decl.arity), False
        for j, gamma in enumerate(decl.moduli):
            for eps in eps_grid:
                eps = Fraction(eps) if not isinstance(eps, float) else eps
                bound = gamma(eps)
                worst, witness = None, None
                for args, alt in _pairs(M, decl.arity, j, bound, rng, samples):
                    base, moved = impl(*args), impl(*alt)
                    diff = abs(base - moved) if as_predicate else M.dist(decl.result, base, moved)
                    if worst is None or diff > worst:
                        worst = diff
                        witness = [[M.carrier(s).label(p) for s, p in zip(decl.arity, args)],
                                   [M.carrier(s).label(p) for s, p in zip(decl.arity, alt)]]
                if worst is None:
                    worst = Fraction(0)
                margin = max(worst - eps, 0)
                report.entries.append(DefectEntry(
                    f"{decl.name}{list(decl.arity)} arg {j} eps {eps}",
                    ValueBounds.exact(margin),
                    witness if worst >= eps else None,
                    violated=bool(worst >= eps),
                    detail={"eps": float(eps), "gamma": float(bound), "worst_difference": float(worst),
                            "modulus": gamma.to_json()},
                ))
    return report


def _pairs(M: MetricStructure, arity: Tuple[str, ...], j: int, bound: Any,
           rng: np.random.Generator, samples: int) -> Iterator[Tuple[tuple, tuple]]:
    carriers = [M.carrier(s) for s in arity]
    if all(isinstance(c, FiniteCarrier) for c in carriers):
        for args in itertools.product(*(c.points for c in carriers)):
            for q in carriers[j]:
                if q != args[j] and carriers[j].dist(args[j], q) < bound:
                    yield args, args[:j] + (q,) + args[j + 1:]
        return
    for _ in range(samples):
        args = tuple(c.sample(rng)[0] if isinstance(c, BallCarrier) else c.points[rng.integers(len(c))]
                     for c in carriers)
        c = carriers[j]
        if isinstance(c, BallCarrier):
            direction = rng.standard_normal(c.real_dim)
            direction /= np.linalg.norm(direction)
            q = c.project(args[j] + direction * float(bound) * 0.99 * rng.random())
        else:
            close = [q for q in c if c.dist(args[j], q) < bound]
            q = close[rng.integers(len(close))]
        yield args, args[:j] + (q,) + args[j + 1:]


# ====== Enumeration ======

def enum_formulas(sig: Signature, max_depth: int, variables: Sequence[Tuple[str, str]] = (),
                  term_depth: int = 1, limit: Optional[int] = config.ENUM_LIMIT,
                  cap: Any = 1) -> Iterator[Formula]:
    """Sort-correct formulas up to ``max_depth``, deduplicated by printed form.

    Order: by depth; within a depth, quantified forms, then unary, then binary
    connectives (unordered pairs for commutative ones). Bound variables are z1, z2, ...
    Every depth level is truncated at ``limit`` members, and so is the whole stream.
    """
    if not 1 <= max_depth <= 4:
        raise InputError("enumeration depth must be between 1 and 4")
    variables = tuple(variables)
    quant_sorts = [s for s in sig.sorts if sig.sorts[s].kind != "hilbert-ball"]
    memo: Dict[Tuple[int, tuple], List[Node]] = {}

    def capped(out: List[Node]) -> bool:
        return limit is not None and len(out) >= limit

    def level(d: int, scope: tuple) -> List[Node]:
        key = (d, scope)
        if key in memo:
            return memo[key]
        if d == 1:
            out = atoms(sig, scope, term_depth)
        else:
            prev = level(d - 1, scope)
            out = list(prev)
            z = f"z{len(scope) - len(variables) + 1}"
            for sort in quant_sorts:
                for body in level(d - 1, scope + ((z, sort),)):
                    if capped(out):
                        break
                    if (z, sort) in free_vars(body):
                        out.extend(Quant(kind, z, sort, body) for kind in QUANTIFIERS)
            fresh = [n for n in prev if depth(n) == d - 1]
            for op in ("half", "not"):
                for n in fresh:
                    if capped(out):
                        break
                    out.append(Unary(op, n))
            for op in BINARY_OPS:
                for i, left in enumerate(prev):
                    rights = prev[i:] if op in COMMUTATIVE_OPS else prev
                    for right in rights:
                        if capped(out):
                            break
                        if depth(left) == d - 1 or depth(right) == d - 1:
                            out.append(Binary(op, left, right))
        memo[key] = out[:limit] if limit is not None else out
        return memo[key]

    seen = set()
    for d in range(1, max_depth + 1):
        for node in level(d, variables):
            text = print_node(node)
            if text in seen:
                continue
            seen.add(text)
            yield Formula(node, cap)
            if limit is not None and len(seen) >= limit:
                return


@dataclass
class EquivalenceReport:
    depth: int
    sentences: int
    max_discrepancy: Any
    distinguishing: Optional[str]
    values: Optional[Tuple[Any, Any]]
    substructure: bool
    label: str = "depth-k equivalence"

    @property
    def equivalent(self) -> bool:
        return self.distinguishing is None

    def to_json(self) -> Dict[str, Any]:
        return {
            "label": self.label, "depth": self.depth, "sentences": self.sentences,
            "max_discrepancy": float(self.max_discrepancy),
            "distinguishing": self.distinguishing,
            "values": [float(v) for v in self.values] if self.values else None,
            "substructure": self.substructure,
        }


def elem_equiv_depth(M: MetricStructure, N: MetricStructure, max_depth: int, tol: float = config.TOL,
                     limit: Optional[int] = config.ENUM_LIMIT,
                     settings: config.Settings = config.DEFAULTS,
                     require_substructure: bool = True) -> EquivalenceReport:
    """Compare every enumerated sentence up to ``max_depth`` in M and in N.

    N's finite carriers must sit inside M's, sort by sort; pass
    ``require_substructure=False`` to compare unrelated structures of one signature.
    """
    if M.signature != N.signature:
        raise SignatureMismatchError(f"{M.label} and {N.label} have different signatures")
    outside = next(
        (s for s in N.signature.sorts if isinstance(M.carrier(s), FiniteCarrier) and not (
            isinstance(N.carrier(s), FiniteCarrier) and all(p in M.carrier(s) for p in N.carrier(s)))),
        None,
    )
    if outside is not None and require_substructure:
        raise InputError(f"carrier mismatch: sort {outside} of {N.label} is not contained in {M.label}")
    substructure = outside is None
    worst, first, first_values = Fraction(0), None, None
    count = 0
    for sentence in enum_formulas(M.signature, max_depth, (), limit=limit):
        count += 1
        vm = evaluate(M, sentence, tol=tol, settings=settings).value
        vn = evaluate(N, sentence, tol=tol, settings=settings).value
        gap = abs(vm - vn)
        if gap > worst:
            worst = gap
        if first is None and gap > tol:
            first, first_values = print_node(sentence.root), (vm, vn)
    logger.info("compared %d sentences up to depth %d", count, max_depth)
    return EquivalenceReport(max_depth, count, worst, first, first_values, substructure)


def random_restriction(M: MetricStructure, sort: str, rng: random.Random) -> List[Point]:
    """A random nonempty subset of a finite sort."""
    points = list(M.carrier(sort).points)
    size = rng.randint(1, len(points))
    return rng.sample(points, size)
