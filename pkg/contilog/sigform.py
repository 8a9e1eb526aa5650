"""
Signatures and formulas of continuous logic

This module covers the syntactic side of the toolkit:
- Sorts with diameters (finite sorts and Hilbert/tree ball towers)
- Continuity moduli as piecewise-linear maps with rational breakpoints
- Function and predicate declarations, overloaded by argument sorts,
  and parameterized symbol families such as ``lam[3/2]`` or ``I[1,2]``
- The formula AST, a recursive descent parser with sort checking,
  and the printer (``parse_formula(print_formula(f))`` gives back ``f``)
- Free variables, occurrence counts, the derived modulus and the
  cap-discipline checker
- A random formula generator for property tests
"""

import itertools
import json
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import (
    Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union,
)

from .errors import (
    ArityError, ConstantRangeError, FormulaSyntaxError, InputError, SortMismatchError,
    UnknownSymbolError,
)

Number = Union[int, float, Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)

FINITE = "finite"
HILBERT_BALL = "hilbert-ball"
TREE_BALL = "tree-ball"
SORT_KINDS = (FINITE, HILBERT_BALL, TREE_BALL)
TOWER_KINDS = (HILBERT_BALL, TREE_BALL)

UNARY_OPS = ("half", "not")
BINARY_OPS = ("sub", "add", "min", "max", "absdiff")
COMMUTATIVE_OPS = ("add", "min", "max", "absdiff")
QUANTIFIERS = ("sup", "inf")
KEYWORDS = frozenset(UNARY_OPS + BINARY_OPS + QUANTIFIERS + ("d",))


def to_rational(value: Any) -> Fraction:
    """Read an int, decimal float, Fraction or ``"p/q"`` string as an exact rational.

    Floats are read through their shortest decimal form, so ``0.45`` becomes ``9/20``.
    """
    if isinstance(value, bool):
        raise InputError(f"expected a rational number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"not a rational number: {value!r}") from exc
    raise InputError(f"expected a rational number, got {value!r}")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_params(params: Sequence[Fraction]) -> str:
    return ",".join(format_rational(p) for p in params)


# ====== Sorts and moduli ======

@dataclass(frozen=True)
class Sort:
    name: str
    diameter: Fraction
    kind: str = FINITE
    ball_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "diameter", to_rational(self.diameter))
        if self.kind not in SORT_KINDS:
            raise InputError(f"sort {self.name}: unknown kind {self.kind!r}")
        if self.diameter <= 0:
            raise InputError(f"sort {self.name}: diameter must be positive")
        if (self.ball_index is not None) != (self.kind in TOWER_KINDS):
            raise InputError(f"sort {self.name}: ball index is required exactly for tower sorts")

    @property
    def is_finite(self) -> bool:
        return self.kind != HILBERT_BALL


@dataclass(frozen=True)
class Modulus:
    """Monotone piecewise-linear map on (0, inf) through the origin.

    ``points`` are the kinks (x strictly increasing, y positive and nondecreasing);
    before the first kink the map is linear from the origin, after the last one it
    continues with slope ``tail``. Instances are kept in canonical form, so equal
    maps compare equal whatever their tag.
    """

    points: Tuple[Tuple[Fraction, Fraction], ...]
    tail: Fraction
    tag: Optional[str] = field(default=None, compare=False)

    @classmethod
    def identity(cls) -> "Modulus":
        return cls(((ONE, ONE),), ONE, "id")

    @classmethod
    def scale(cls, c: Number) -> "Modulus":
        """The map z -> z/|c|."""
        c = abs(to_rational(c))
        if c == 0:
            raise InputError("scale modulus needs a nonzero factor")
        return cls(((ONE, 1 / c),), 1 / c, f"scale({format_rational(c)})")

    @classmethod
    def from_breakpoints(cls, pairs: Iterable[Sequence[Any]], tail: Any = 0) -> "Modulus":
        pts = [(to_rational(x), to_rational(y)) for x, y in pairs]
        tail = to_rational(tail)
        if not pts:
            raise InputError("modulus needs at least one breakpoint")
        for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
            if xb <= xa or yb < ya:
                raise InputError("modulus breakpoints must increase in x and not decrease in y")
        if pts[0][0] <= 0 or pts[0][1] <= 0 or tail < 0:
            raise InputError("modulus must be strictly positive on positive inputs")
        return _canonical(pts, tail, "breakpoints")

    def __call__(self, x: Number) -> Number:
        if x <= 0:
            raise ValueError("moduli are defined on positive inputs only")
        x0, y0 = self.points[0]
        if x <= x0:
            return y0 * x / x0
        for (xa, ya), (xb, yb) in zip(self.points, self.points[1:]):
            if x <= xb:
                return ya + (yb - ya) * (x - xa) / (xb - xa)
        xk, yk = self.points[-1]
        return yk + self.tail * (x - xk)

    def slope_after(self, x: Fraction) -> Fraction:
        x0, y0 = self.points[0]
        if x < x0:
            return y0 / x0
        for (xa, ya), (xb, yb) in zip(self.points, self.points[1:]):
            if xa <= x < xb:
                return (yb - ya) / (xb - xa)
        return self.tail

    def minimum(self, other: "Modulus") -> "Modulus":
        """Pointwise minimum."""
        xs = sorted({x for x, _ in self.points} | {x for x, _ in other.points})
        cand = set(xs)
        for a, b in zip(xs, xs[1:]):
            ha, hb = self(a) - other(a), self(b) - other(b)
            if ha * hb < 0:
                cand.add(a + ha * (b - a) / (ha - hb))
        last = xs[-1]
        h = self(last) - other(last)
        dt = self.tail - other.tail
        if h * dt < 0:
            cand.add(last - h / dt)
        xs = sorted(cand)
        beyond = xs[-1] + 1
        fa, ga = self(beyond), other(beyond)
        tail = self.tail if fa < ga else other.tail if ga < fa else min(self.tail, other.tail)
        return _canonical([(x, min(self(x), other(x))) for x in xs], tail, "min")

    def compose(self, inner: "Modulus") -> "Modulus":
        """The map x -> self(inner(x))."""
        cand = {x for x, _ in inner.points}
        pieces = [(ZERO, ZERO)] + list(inner.points)
        for u, _ in self.points:
            found = None
            for (xa, ya), (xb, yb) in zip(pieces, pieces[1:]):
                if ya < u <= yb:
                    found = xa + (u - ya) * (xb - xa) / (yb - ya)
                    break
            if found is None:
                xk, yk = pieces[-1]
                if u > yk and inner.tail > 0:
                    found = xk + (u - yk) / inner.tail
            if found is not None and found > 0:
                cand.add(found)
        xs = sorted(cand)
        last = xs[-1]
        tail = self.slope_after(inner(last)) * inner.tail
        return _canonical([(x, self(inner(x))) for x in xs], tail, "compose")

    def is_identity(self) -> bool:
        return self == Modulus.identity()

    def to_json(self) -> Any:
        if self.is_identity():
            return "id"
        if len(self.points) == 1 and self.points[0][0] == 1 and self.points[0][1] == self.tail:
            return {"scale": format_rational(1 / self.tail)}
        return {
            "breakpoints": [[format_rational(x), format_rational(y)] for x, y in self.points],
            "tail": format_rational(self.tail),
        }

    @classmethod
    def from_json(cls, data: Any) -> "Modulus":
        if data is None or data == "id":
            return cls.identity()
        if isinstance(data, dict) and "scale" in data:
            return cls.scale(to_rational(data["scale"]))
        if isinstance(data, dict) and "breakpoints" in data:
            return cls.from_breakpoints(data["breakpoints"], data.get("tail", 0))
        raise InputError(f"unrecognized modulus {data!r}")

    def __str__(self) -> str:
        js = self.to_json()
        return js if isinstance(js, str) else json.dumps(js)


def _canonical(points: List[Tuple[Fraction, Fraction]], tail: Fraction, tag: str) -> Modulus:
    points = [(Fraction(x), Fraction(y)) for x, y in points if x > 0]
    kept = []
    for i, (x, y) in enumerate(points):
        px, py = points[i - 1] if i else (ZERO, ZERO)
        before = (y - py) / (x - px)
        if i + 1 < len(points):
            nx, ny = points[i + 1]
            after = (ny - y) / (nx - x)
        else:
            after = Fraction(tail)
        if before != after:
            kept.append((x, y))
    if not kept:
        x, y = points[0]
        slope = y / x
        return Modulus(((ONE, slope),), slope, tag)
    return Modulus(tuple(kept), Fraction(tail), tag)


# ====== Declarations and signatures ======

@dataclass(frozen=True)
class SymbolDecl:
    name: str
    arity: Tuple[str, ...]
    result: Optional[str] = None
    range: Optional[Tuple[Fraction, Fraction]] = None
    moduli: Tuple[Modulus, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "arity", tuple(self.arity))
        if (self.result is None) == (self.range is None):
            raise InputError(f"symbol {self.name}: give a result sort (function) or a range (predicate)")
        if self.range is not None:
            lo, hi = (to_rational(v) for v in self.range)
            if lo > hi:
                raise InputError(f"predicate {self.name}: empty range")
            object.__setattr__(self, "range", (lo, hi))
        moduli = tuple(self.moduli) or tuple(Modulus.identity() for _ in self.arity)
        if len(moduli) != len(self.arity):
            raise InputError(f"symbol {self.name}: one modulus per argument expected")
        object.__setattr__(self, "moduli", moduli)

    @property
    def is_predicate(self) -> bool:
        return self.range is not None

    @property
    def key(self) -> Tuple[str, Tuple[str, ...]]:
        return (self.name, self.arity)


@dataclass(frozen=True)
class SymbolFamily:
    """Parameterized function symbols ``prefix[p1,...](args)``.

    ``build(params, arg_sorts)`` returns the declaration for those parameters and
    argument sorts, or None when the family has no member there.
    """

    prefix: str
    build: Callable[[Tuple[Fraction, ...], Tuple[str, ...]], Optional[SymbolDecl]]


class Signature:
    """Sorts plus function and predicate declarations.

    Symbol names may be overloaded by argument sorts; parameterized families are
    resolved on demand. The metric symbol ``d`` is implicit for every sort.
    """

    def __init__(self, sorts: Iterable[Sort], functions: Iterable[SymbolDecl] = (),
                 predicates: Iterable[SymbolDecl] = (), families: Iterable[SymbolFamily] = (),
                 default_sort: Optional[str] = None, name: str = "signature"):
        self.name = name
        self.sorts: Dict[str, Sort] = {}
        for s in sorts:
            if s.name in self.sorts:
                raise InputError(f"duplicate sort {s.name}")
            self.sorts[s.name] = s
        self._functions: Dict[str, List[SymbolDecl]] = {}
        self._predicates: Dict[str, List[SymbolDecl]] = {}
        for decl in functions:
            self._add(self._functions, decl, predicate=False)
        for decl in predicates:
            self._add(self._predicates, decl, predicate=True)
        self.families: Dict[str, SymbolFamily] = {f.prefix: f for f in families}
        if default_sort is None and len(self.sorts) == 1:
            default_sort = next(iter(self.sorts))
        if default_sort is not None and default_sort not in self.sorts:
            raise InputError(f"default sort {default_sort} is not declared")
        self.default_sort = default_sort
        self._family_cache: Dict[Tuple[str, Tuple[str, ...]], Optional[SymbolDecl]] = {}

    def _add(self, table: Dict[str, List[SymbolDecl]], decl: SymbolDecl, predicate: bool) -> None:
        if decl.is_predicate != predicate:
            raise InputError(f"symbol {decl.name} declared in the wrong section")
        if decl.name in KEYWORDS:
            raise InputError(f"symbol name {decl.name!r} is reserved")
        for s in decl.arity + ((decl.result,) if decl.result else ()):
            if s not in self.sorts:
                raise InputError(f"symbol {decl.name}: undeclared sort {s}")
        overloads = table.setdefault(decl.name, [])
        if any(d.arity == decl.arity for d in overloads):
            raise InputError(f"duplicate declaration of {decl.name}{decl.arity}")
        overloads.append(decl)

    # -- lookup --

    def sort(self, name: str) -> Sort:
        try:
            return self.sorts[name]
        except KeyError:
            raise UnknownSymbolError(name) from None

    def functions(self) -> List[SymbolDecl]:
        return [d for ds in self._functions.values() for d in ds]

    def predicates(self) -> List[SymbolDecl]:
        return [d for ds in self._predicates.values() for d in ds]

    def overloads(self, kind: str, name: str) -> List[SymbolDecl]:
        table = self._predicates if kind == "predicate" else self._functions
        return list(table.get(name, ()))

    def has_symbol(self, name: str) -> bool:
        return name in self._functions or name in self._predicates or name in self.families

    def constants(self, sort: Optional[str] = None) -> List[SymbolDecl]:
        return [d for d in self.functions() if not d.arity and (sort is None or d.result == sort)]

    def family_member(self, prefix: str, params: Tuple[Fraction, ...],
                      arg_sorts: Tuple[str, ...]) -> Optional[SymbolDecl]:
        family = self.families.get(prefix)
        if family is None:
            return None
        key = (f"{prefix}[{format_params(params)}]", arg_sorts)
        if key not in self._family_cache:
            self._family_cache[key] = family.build(params, arg_sorts)
        return self._family_cache[key]

    def decl(self, kind: str, name: str, arity: Tuple[str, ...]) -> SymbolDecl:
        """Exact lookup by name and argument sorts (family names included)."""
        for d in self.overloads(kind, name):
            if d.arity == arity:
                return d
        if kind == "function" and "[" in name:
            prefix, params = split_family_name(name)
            member = self.family_member(prefix, params, arity)
            if member is not None:
                return member
        raise UnknownSymbolError(f"{name}{arity}")

    def metric_decl(self, sort: str) -> SymbolDecl:
        s = self.sort(sort)
        return SymbolDecl("d", (sort, sort), range=(ZERO, s.diameter))

    # -- derived signatures --

    def extend(self, functions: Iterable[SymbolDecl] = (), predicates: Iterable[SymbolDecl] = (),
               sorts: Iterable[Sort] = ()) -> "Signature":
        return Signature(list(self.sorts.values()) + list(sorts),
                         self.functions() + list(functions),
                         self.predicates() + list(predicates),
                         self.families.values(), self.default_sort, self.name)

    def fingerprint(self) -> Tuple:
        return (
            tuple(sorted((s.name, s.diameter, s.kind, s.ball_index) for s in self.sorts.values())),
            tuple(sorted((d.name, d.arity, d.result or "", str(d.range)) for d in self.functions())),
            tuple(sorted((d.name, d.arity, str(d.range)) for d in self.predicates())),
            tuple(sorted(self.families)),
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Signature) and self.fingerprint() == other.fingerprint()

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __repr__(self) -> str:
        return f"Signature({self.name}: sorts={list(self.sorts)})"


def split_family_name(name: str) -> Tuple[str, Tuple[Fraction, ...]]:
    prefix, _, rest = name.partition("[")
    return prefix, tuple(to_rational(p) for p in rest.rstrip("]").split(",") if p)


def group_signature(sort: str = "G", diameter: Number = 1,
                    predicates: Iterable[SymbolDecl] = ()) -> Signature:
    """Single-sorted metric group language: mul, inv, 1 with identity moduli."""
    return Signature(
        [Sort(sort, to_rational(diameter))],
        [SymbolDecl("mul", (sort, sort), result=sort),
         SymbolDecl("inv", (sort,), result=sort),
         SymbolDecl("1", (), result=sort)],
        predicates, default_sort=sort, name="group",
    )


@dataclass(frozen=True)
class SortMapNu:
    """Finite table nu(n, m), nondecreasing in each argument."""

    table: Tuple[Tuple[Tuple[int, int], int], ...]

    def __post_init__(self):
        mapping = dict(self.table)
        for (n, m), value in mapping.items():
            for (n2, m2) in ((n + 1, m), (n, m + 1)):
                if (n2, m2) in mapping and mapping[(n2, m2)] < value:
                    raise InputError(f"nu must be increasing in each argument: nu{(n, m)} > nu{(n2, m2)}")

    @classmethod
    def from_rule(cls, rule: Callable[[int, int], int], n_max: int, m_max: int) -> "SortMapNu":
        return cls(tuple(((n, m), int(rule(n, m)))
                         for n in range(1, n_max + 1) for m in range(1, m_max + 1)))

    @classmethod
    def from_json(cls, data: Any, n_max: int, m_max: int) -> "SortMapNu":
        if isinstance(data, dict) and "shift" in data:
            shift = int(data["shift"])
            return cls.from_rule(lambda n, m: m + shift, n_max, m_max)
        if isinstance(data, dict) and "table" in data:
            entries = []
            for key, value in data["table"].items():
                n, m = (int(v) for v in key.split(","))
                entries.append(((n, m), int(value)))
            return cls(tuple(sorted(entries)))
        raise InputError(f"unrecognized nu table {data!r}")

    def __call__(self, n: int, m: int) -> int:
        try:
            return dict(self.table)[(n, m)]
        except KeyError:
            raise InputError(f"nu is not defined at {(n, m)}") from None

    def domain(self) -> List[Tuple[int, int]]:
        return [k for k, _ in self.table]


# ====== Formula AST ======

@dataclass(frozen=True)
class Var:
    name: str
    sort: str


@dataclass(frozen=True)
class App:
    symbol: str
    args: Tuple["Term", ...]
    sort: str
    arity: Tuple[str, ...]


Term = Union[Var, App]


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Atomic:
    predicate: str
    args: Tuple[Term, ...]
    arity: Tuple[str, ...]


@dataclass(frozen=True)
class Dist:
    left: Term
    right: Term
    sort: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Quant:
    kind: str
    var: str
    sort: str
    body: "Node"


Node = Union[Const, Atomic, Dist, Unary, Binary, Quant]


@dataclass(frozen=True)
class Formula:
    root: Node
    cap: Fraction = ONE

    def __post_init__(self):
        object.__setattr__(self, "cap", to_rational(self.cap))
        if self.cap <= 0:
            raise InputError("formula cap must be positive")

    def __str__(self) -> str:
        return print_formula(self)


def print_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if not t.args:
        return t.symbol
    return f"{t.symbol}({','.join(print_term(a) for a in t.args)})"


def print_node(n: Node) -> str:
    if isinstance(n, Const):
        return format_rational(n.value)
    if isinstance(n, Atomic):
        return f"{n.predicate}({', '.join(print_term(a) for a in n.args)})"
    if isinstance(n, Dist):
        return f"d({print_term(n.left)}, {print_term(n.right)})"
    if isinstance(n, Unary):
        return f"{n.op}({print_node(n.arg)})"
    if isinstance(n, Binary):
        return f"{n.op}({print_node(n.left)}, {print_node(n.right)})"
    if isinstance(n, Quant):
        return f"{n.kind} {n.var}:{n.sort}. {print_node(n.body)}"
    raise TypeError(f"not a formula node: {n!r}")


def print_formula(f: Union[Formula, Node]) -> str:
    return print_node(f.root if isinstance(f, Formula) else f)


# ====== Tokenizer and parser ======

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<punct>[(),:.\[\]\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


@dataclass
class _RawTerm:
    name: str
    params: Tuple[Fraction, ...]
    args: Optional[List["_RawTerm"]]
    pos: int
    numeric: bool = False


class _Deferred(Exception):
    """A free variable's sort cannot be decided from the current position alone."""


class _Parser:
    def __init__(self, text: str, sig: Signature, cap: Fraction,
                 free_sorts: Optional[Mapping[str, str]]):
        self.text = text
        self.sig = sig
        self.cap = cap
        self.tokens = tokenize(text)
        self.pos = 0
        self.free: Dict[str, str] = dict(free_sorts or {})
        self.bound: List[Tuple[str, str]] = []

    # -- token helpers --

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, cls=FormulaSyntaxError, pos: Optional[int] = None):
        return cls(message, self.current.pos if pos is None else pos, self.text)

    def eat(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or "end of input"
            raise self.error(f"expected {text!r}, got {found!r}")
        return self.advance()

    def eat_kind(self, kind: str) -> Token:
        if self.current.kind != kind:
            found = self.current.text or "end of input"
            raise self.error(f"expected {kind}, got {found!r}")
        return self.advance()

    # -- formulas --

    def parse(self) -> Node:
        node = self.formula()
        if self.current.kind != "eof":
            raise self.error(f"unexpected {self.current.text!r} after formula")
        return node

    def formula(self) -> Node:
        tok = self.current
        if tok.kind == "number":
            self.advance()
            value = to_rational(tok.text)
            if not 0 <= value <= self.cap:
                raise self.error(f"constant {tok.text} outside [0, {format_rational(self.cap)}]",
                                 ConstantRangeError, tok.pos)
            return Const(value)
        if tok.kind != "ident":
            found = tok.text or "end of input"
            raise self.error(f"expected a formula, got {found!r}")
        word = tok.text
        if word in QUANTIFIERS:
            return self.quantifier()
        if word in UNARY_OPS:
            self.advance()
            args = self.formula_args(word, 1)
            return Unary(word, args[0])
        if word in BINARY_OPS:
            self.advance()
            left, right = self.formula_args(word, 2)
            return Binary(word, left, right)
        if word == "d":
            return self.distance()
        return self.atom()

    def formula_args(self, op: str, count: int) -> List[Node]:
        start = self.current.pos
        self.eat("(")
        args = [self.formula()]
        while self.current.text == ",":
            self.advance()
            args.append(self.formula())
        if self.current.text != ")" or len(args) != count:
            if self.current.text in (")", ","):
                raise self.error(f"{op} expects {count} argument{'s' if count > 1 else ''}, "
                                 f"got {len(args)}", ArityError, start)
            raise self.error(f"expected ')' closing {op}")
        self.advance()
        return args

    def quantifier(self) -> Node:
        kind = self.advance().text
        var = self.eat_kind("ident").text
        if var in KEYWORDS:
            raise self.error(f"{var!r} cannot be used as a variable")
        self.eat(":")
        sort_tok = self.eat_kind("ident")
        if sort_tok.text not in self.sig.sorts:
            raise UnknownSymbolError(sort_tok.text, sort_tok.pos, self.text)
        self.eat(".")
        self.bound.append((var, sort_tok.text))
        try:
            body = self.formula()
        finally:
            self.bound.pop()
        return Quant(kind, var, sort_tok.text, body)

    def distance(self) -> Node:
        start = self.advance().pos
        self.eat("(")
        left = self.raw_term()
        if self.current.text != ",":
            raise self.error("d expects 2 arguments", ArityError, start)
        self.advance()
        right = self.raw_term()
        if self.current.text == ",":
            raise self.error("d expects 2 arguments", ArityError, start)
        self.eat(")")
        try:
            l_term = self.check_term(left, None)
            r_term = self.check_term(right, l_term.sort)
        except _Deferred:
            r_term = self.check_term(right, None, allow_default=True)
            l_term = self.check_term(left, r_term.sort)
        return Dist(l_term, r_term, l_term.sort)

    def atom(self) -> Node:
        raw = self.raw_term()
        if raw.args is None:
            raise self.error(f"expected '(' after predicate {raw.name}", pos=raw.pos)
        if raw.params:
            raise self.error("predicates take no parameters", pos=raw.pos)
        overloads = [d for d in self.sig.overloads("predicate", raw.name)]
        if not overloads:
            if self.sig.has_symbol(raw.name):
                raise self.error(f"{raw.name} is a function symbol, not a predicate",
                                 SortMismatchError, raw.pos)
            raise UnknownSymbolError(raw.name, raw.pos, self.text)
        decl, args = self.resolve(raw, overloads, expected=None)
        return Atomic(decl.name, args, decl.arity)

    # -- terms --

    def raw_term(self) -> _RawTerm:
        tok = self.current
        if tok.kind == "number":
            self.advance()
            return _RawTerm(tok.text, (), None, tok.pos, numeric=True)
        name = self.eat_kind("ident").text
        if name in KEYWORDS:
            raise self.error(f"{name!r} cannot appear inside a term", pos=tok.pos)
        params: Tuple[Fraction, ...] = ()
        if self.current.text == "[":
            self.advance()
            values = [self.signed_number()]
            while self.current.text == ",":
                self.advance()
                values.append(self.signed_number())
            self.eat("]")
            params = tuple(values)
        args = None
        if self.current.text == "(":
            self.advance()
            args = [self.raw_term()]
            while self.current.text == ",":
                self.advance()
                args.append(self.raw_term())
            self.eat(")")
        return _RawTerm(name, params, args, tok.pos)

    def signed_number(self) -> Fraction:
        sign = 1
        if self.current.text == "-":
            self.advance()
            sign = -1
        return sign * to_rational(self.eat_kind("number").text)

    def lookup_bound(self, name: str) -> Optional[str]:
        for var, sort in reversed(self.bound):
            if var == name:
                return sort
        return None

    def check_term(self, raw: _RawTerm, expected: Optional[str], allow_default: bool = False) -> Term:
        if raw.args is None and not raw.params:
            bound_sort = self.lookup_bound(raw.name)
            if bound_sort is not None:
                return self.expect_sort(Var(raw.name, bound_sort), expected, raw.pos)
            constants = [d for d in self.sig.overloads("function", raw.name) if not d.arity]
            if constants or raw.numeric:
                if not constants:
                    raise UnknownSymbolError(raw.name, raw.pos, self.text)
                decl, args = self.resolve(raw, constants, expected)
                return App(decl.name, args, decl.result, decl.arity)
            if self.sig.has_symbol(raw.name):
                raise self.error(f"{raw.name} needs arguments", ArityError, raw.pos)
            sort = self.free.get(raw.name) or expected
            if sort is None:
                if allow_default and self.sig.default_sort:
                    sort = self.sig.default_sort
                else:
                    raise _Deferred(raw.name)
            self.free.setdefault(raw.name, sort)
            return self.expect_sort(Var(raw.name, sort), expected, raw.pos)
        args = raw.args or []
        if raw.params:
            return self.check_family(raw, expected)
        overloads = [d for d in self.sig.overloads("function", raw.name) if len(d.arity) == len(args)]
        if not overloads:
            if self.sig.overloads("function", raw.name):
                raise self.error(f"{raw.name} called with {len(args)} arguments", ArityError, raw.pos)
            if self.sig.overloads("predicate", raw.name):
                raise self.error(f"predicate {raw.name} used as a term", SortMismatchError, raw.pos)
            raise UnknownSymbolError(raw.name, raw.pos, self.text)
        decl, checked = self.resolve(raw, overloads, expected)
        return App(decl.name, checked, decl.result, decl.arity)

    def check_family(self, raw: _RawTerm, expected: Optional[str]) -> Term:
        if raw.name not in self.sig.families:
            raise UnknownSymbolError(raw.name, raw.pos, self.text)
        args = tuple(self.check_term(a, None, allow_default=True) for a in raw.args or [])
        decl = self.sig.family_member(raw.name, raw.params, tuple(a.sort for a in args))
        if decl is None:
            raise self.error(f"{raw.name}[{format_params(raw.params)}] is not defined on "
                             f"{tuple(a.sort for a in args)}", SortMismatchError, raw.pos)
        return self.expect_sort(App(decl.name, args, decl.result, decl.arity), expected, raw.pos)

    def resolve(self, raw: _RawTerm, overloads: List[SymbolDecl],
                expected: Optional[str]) -> Tuple[SymbolDecl, Tuple[Term, ...]]:
        args = raw.args or []
        successes = []
        failure: Optional[Exception] = None
        for decl in overloads:
            if len(decl.arity) != len(args):
                continue
            if expected is not None and decl.result is not None and decl.result != expected:
                failure = self.error(f"{raw.name} has sort {decl.result}, expected {expected}",
                                     SortMismatchError, raw.pos)
                continue
            saved = dict(self.free)
            try:
                checked = tuple(self.check_term(a, s) for a, s in zip(args, decl.arity))
            except (SortMismatchError, _Deferred) as exc:
                self.free = saved
                failure = exc if isinstance(exc, SortMismatchError) else failure
                continue
            successes.append((decl, checked, dict(self.free)))
            self.free = saved
        if not successes:
            if len(overloads) > 0 and all(len(d.arity) != len(args) for d in overloads):
                raise self.error(f"{raw.name} called with {len(args)} arguments", ArityError, raw.pos)
            if failure is not None:
                raise failure
            raise self.error(f"no overload of {raw.name} fits here", SortMismatchError, raw.pos)
        if len(successes) > 1:
            if expected is None and all(d.result is None for d, _, _ in successes):
                raise self.error(f"ambiguous use of {raw.name}; declare the free variable sorts",
                                 SortMismatchError, raw.pos)
            if expected is None:
                raise _Deferred(raw.name)
            raise self.error(f"ambiguous use of {raw.name}", SortMismatchError, raw.pos)
        decl, checked, free = successes[0]
        self.free = free
        return decl, checked

    def expect_sort(self, term: Term, expected: Optional[str], pos: int) -> Term:
        if expected is not None and term.sort != expected:
            raise self.error(f"{print_term(term)} has sort {term.sort}, expected {expected}",
                             SortMismatchError, pos)
        return term


def parse_formula(text: str, sig: Signature, cap: Number = 1,
                  free_sorts: Optional[Mapping[str, str]] = None) -> Formula:
    """Parse and sort-check formula text.

    Free-variable sorts come from ``free_sorts``, from the argument positions where
    the variables occur, or from the signature's default sort.
    """
    cap = to_rational(cap)
    return Formula(_Parser(text, sig, cap, free_sorts).parse(), cap)


# ====== Syntactic measurements ======

def iter_nodes(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, Unary):
        yield from iter_nodes(node.arg)
    elif isinstance(node, Binary):
        yield from iter_nodes(node.left)
        yield from iter_nodes(node.right)
    elif isinstance(node, Quant):
        yield from iter_nodes(node.body)


def depth(node: Union[Formula, Node]) -> int:
    node = node.root if isinstance(node, Formula) else node
    if isinstance(node, Unary):
        return 1 + depth(node.arg)
    if isinstance(node, Binary):
        return 1 + max(depth(node.left), depth(node.right))
    if isinstance(node, Quant):
        return 1 + depth(node.body)
    return 1


def _term_vars(t: Term) -> Iterator[Var]:
    if isinstance(t, Var):
        yield t
    else:
        for a in t.args:
            yield from _term_vars(a)


def _free_occurrences(node: Node, bound: frozenset = frozenset()) -> Iterator[Var]:
    if isinstance(node, (Atomic, Dist)):
        terms = node.args if isinstance(node, Atomic) else (node.left, node.right)
        for t in terms:
            for v in _term_vars(t):
                if v.name not in bound:
                    yield v
    elif isinstance(node, Unary):
        yield from _free_occurrences(node.arg, bound)
    elif isinstance(node, Binary):
        yield from _free_occurrences(node.left, bound)
        yield from _free_occurrences(node.right, bound)
    elif isinstance(node, Quant):
        yield from _free_occurrences(node.body, bound | {node.var})


def free_vars(f: Union[Formula, Node]) -> List[Tuple[str, str]]:
    """Free variables with their sorts, in first-occurrence order."""
    node = f.root if isinstance(f, Formula) else f
    seen: Dict[str, str] = {}
    for v in _free_occurrences(node):
        seen.setdefault(v.name, v.sort)
    return list(seen.items())


def occurrences(f: Union[Formula, Node], var: str) -> int:
    node = f.root if isinstance(f, Formula) else f
    return sum(1 for v in _free_occurrences(node) if v.name == var)


def _term_requirements(t: Term, need: Modulus, sig: Signature,
                       bound: frozenset) -> Iterator[Tuple[str, Modulus]]:
    if isinstance(t, Var):
        if t.name not in bound:
            yield t.name, need
        return
    decl = sig.decl("function", t.symbol, t.arity)
    for j, a in enumerate(t.args):
        yield from _term_requirements(a, decl.moduli[j].compose(need), sig, bound)


def _requirements(node: Node, sig: Signature, bound: frozenset = frozenset()
                  ) -> Iterator[Tuple[str, Modulus]]:
    if isinstance(node, Atomic):
        decl = sig.decl("predicate", node.predicate, node.arity)
        for j, a in enumerate(node.args):
            yield from _term_requirements(a, decl.moduli[j], sig, bound)
    elif isinstance(node, Dist):
        for a in (node.left, node.right):
            yield from _term_requirements(a, Modulus.identity(), sig, bound)
    elif isinstance(node, Unary):
        yield from _requirements(node.arg, sig, bound)
    elif isinstance(node, Binary):
        yield from _requirements(node.left, sig, bound)
        yield from _requirements(node.right, sig, bound)
    elif isinstance(node, Quant):
        yield from _requirements(node.body, sig, bound | {node.var})


def derived_modulus(f: Union[Formula, Node], sig: Signature, var: Optional[str] = None,
                    multiplicity: bool = False) -> Modulus:
    """Continuity modulus of a formula in its free variables.

    Each free occurrence of a variable contributes the moduli of the symbols above
    it, composed outward through term nesting; the result is their pointwise
    minimum. With ``multiplicity`` a variable occurring k times contributes
    gamma(eps / k), which stays sound when the variable is repeated.
    """
    node = f.root if isinstance(f, Formula) else f
    per_var: Dict[str, List[Modulus]] = {}
    for name, need in _requirements(node, sig):
        if var is None or name == var:
            per_var.setdefault(name, []).append(need)
    result: Optional[Modulus] = None
    for name, needs in per_var.items():
        for need in needs:
            if multiplicity and len(needs) > 1:
                need = need.compose(Modulus.scale(len(needs)))
            result = need if result is None else result.minimum(need)
    return result if result is not None else Modulus.identity()


def check_caps(f: Formula, sig: Signature) -> List[str]:
    """List cap-discipline problems: constants outside [0, C], ranges above C under not."""
    issues: List[str] = []

    def walk(node: Node, under_not: bool) -> None:
        if isinstance(node, Const):
            if not 0 <= node.value <= f.cap:
                issues.append(f"constant {format_rational(node.value)} outside [0, {format_rational(f.cap)}]")
        elif isinstance(node, Atomic):
            lo, hi = sig.decl("predicate", node.predicate, node.arity).range
            if under_not and (hi > f.cap or lo < 0):
                issues.append(f"{print_node(node)} ranges over [{format_rational(lo)}, "
                              f"{format_rational(hi)}] under not with cap {format_rational(f.cap)}")
        elif isinstance(node, Dist):
            diam = sig.sort(node.sort).diameter
            if under_not and diam > f.cap:
                issues.append(f"{print_node(node)} reaches {format_rational(diam)} under not "
                              f"with cap {format_rational(f.cap)}")
        elif isinstance(node, Unary):
            walk(node.arg, under_not or node.op == "not")
        elif isinstance(node, Binary):
            walk(node.left, under_not)
            walk(node.right, under_not)
        elif isinstance(node, Quant):
            walk(node.body, under_not)

    walk(f.root, False)
    return issues


# ====== Term and formula generation ======

def terms_of_depth(sig: Signature, variables: Sequence[Tuple[str, str]], term_depth: int = 1
                   ) -> Dict[str, List[Term]]:
    """All terms over the variables and static symbols, per sort, nested up to term_depth."""
    by_sort: Dict[str, List[Term]] = {s: [] for s in sig.sorts}
    seen = set()

    def add(t: Term) -> None:
        key = print_term(t)
        if key not in seen:
            seen.add(key)
            by_sort[t.sort].append(t)

    for name, sort in variables:
        add(Var(name, sort))
    for decl in sig.constants():
        add(App(decl.name, (), decl.result, ()))
    for _ in range(term_depth):
        snapshot = {s: list(ts) for s, ts in by_sort.items()}
        for decl in sig.functions():
            if not decl.arity:
                continue
            pools = [snapshot[s] for s in decl.arity]
            for args in itertools.product(*pools):
                add(App(decl.name, tuple(args), decl.result, decl.arity))
    return by_sort


def atoms(sig: Signature, variables: Sequence[Tuple[str, str]], term_depth: int = 1) -> List[Node]:
    """Atomic formulas over the given variables in a deterministic order."""
    pool = terms_of_depth(sig, variables, term_depth)
    out: List[Node] = []
    for sort in sig.sorts:
        if not sig.sorts[sort].is_finite:
            continue
        for left, right in itertools.product(pool[sort], repeat=2):
            out.append(Dist(left, right, sort))
    for decl in sig.predicates():
        for args in itertools.product(*(pool[s] for s in decl.arity)):
            out.append(Atomic(decl.name, tuple(args), decl.arity))
    return out


def random_formula(sig: Signature, max_depth: int, variables: Sequence[Tuple[str, str]],
                   rng: random.Random, cap: Number = 1, half: bool = True,
                   quantifiers: bool = True, term_depth: int = 1,
                   constants: Optional[Sequence[Number]] = None) -> Formula:
    """Random sort-correct formula over finite sorts, depth at most ``max_depth``.

    Constants are drawn from ``constants`` (default: quarters of the cap).
    """
    cap = to_rational(cap)
    counter = itertools.count(1)
    quant_sorts = [s for s, srt in sig.sorts.items() if srt.kind == FINITE]
    const_values = [to_rational(c) for c in constants] if constants else [ZERO, cap / 4, cap / 2, 3 * cap / 4, cap]

    def term(sort: str, scope: List[Tuple[str, str]], d: int) -> Optional[Term]:
        options: List[Callable[[], Optional[Term]]] = []
        vars_here = [Var(n, s) for n, s in scope if s == sort]
        consts = [App(c.name, (), sort, ()) for c in sig.constants(sort)]
        if vars_here:
            options.append(lambda: rng.choice(vars_here))
        if consts:
            options.append(lambda: rng.choice(consts))
        funcs = [f for f in sig.functions() if f.arity and f.result == sort]
        if d > 0 and funcs:
            def build() -> Optional[Term]:
                decl = rng.choice(funcs)
                args = [term(s, scope, d - 1) for s in decl.arity]
                if any(a is None for a in args):
                    return None
                return App(decl.name, tuple(args), sort, decl.arity)
            options.append(build)
        rng.shuffle(options)
        for option in options:
            t = option()
            if t is not None:
                return t
        return None

    def atom(scope: List[Tuple[str, str]]) -> Node:
        choices: List[Callable[[], Optional[Node]]] = []
        for sort in sig.sorts:
            if sig.sorts[sort].is_finite:
                def dist(sort=sort) -> Optional[Node]:
                    a, b = term(sort, scope, term_depth), term(sort, scope, term_depth)
                    return None if a is None or b is None else Dist(a, b, sort)
                choices.append(dist)
        for decl in sig.predicates():
            def pred(decl=decl) -> Optional[Node]:
                args = [term(s, scope, term_depth) for s in decl.arity]
                if any(a is None for a in args):
                    return None
                return Atomic(decl.name, tuple(args), decl.arity)
            choices.append(pred)
        rng.shuffle(choices)
        for choice in choices:
            node = choice()
            if node is not None:
                return node
        return Const(rng.choice(const_values))

    def node(d: int, scope: List[Tuple[str, str]]) -> Node:
        if d <= 1:
            return Const(rng.choice(const_values)) if rng.random() < 0.1 else atom(scope)
        kinds = ["binary", "binary", "not"] + (["half"] if half else [])
        if quantifiers and quant_sorts:
            kinds += ["quant", "quant"]
        kinds.append("leaf")
        kind = rng.choice(kinds)
        if kind == "leaf":
            return atom(scope)
        if kind in ("half", "not"):
            return Unary(kind, node(d - 1, scope))
        if kind == "binary":
            return Binary(rng.choice(BINARY_OPS), node(d - 1, scope), node(rng.randint(1, d - 1), scope))
        var = f"z{next(counter)}"
        sort = rng.choice(quant_sorts)
        return Quant(rng.choice(QUANTIFIERS), var, sort, node(d - 1, scope + [(var, sort)]))

    return Formula(node(max_depth, list(variables)), cap)


# ====== Signature files ======

def _decl_from_json(entry: Mapping[str, Any], predicate: bool) -> SymbolDecl:
    try:
        arity = tuple(entry.get("arity", ()))
        modulus = entry.get("modulus", "id")
        if isinstance(modulus, list):
            moduli = tuple(Modulus.from_json(m) for m in modulus)
        else:
            moduli = tuple(Modulus.from_json(modulus) for _ in arity)
        if predicate:
            lo, hi = entry["range"]
            return SymbolDecl(entry["name"], arity, range=(to_rational(lo), to_rational(hi)), moduli=moduli)
        return SymbolDecl(entry["name"], arity, result=entry["result"], moduli=moduli)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed symbol entry {entry!r}: {exc}") from exc


def signature_from_json(data: Mapping[str, Any]) -> Signature:
    try:
        sorts = [Sort(s["name"], to_rational(s.get("diameter", 1)), s.get("kind", FINITE),
                      s.get("ball_index")) for s in data.get("sorts", [])]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed sort entry: {exc}") from exc
    return Signature(
        sorts,
        [_decl_from_json(e, predicate=False) for e in data.get("functions", [])],
        [_decl_from_json(e, predicate=True) for e in data.get("predicates", [])],
        default_sort=data.get("default_sort"),
        name=data.get("name", "signature"),
    )


def signature_to_json(sig: Signature) -> Dict[str, Any]:
    def moduli(decl: SymbolDecl) -> Any:
        return [m.to_json() for m in decl.moduli]

    return {
        "name": sig.name,
        "sorts": [{"name": s.name, "diameter": format_rational(s.diameter), "kind": s.kind,
                   "ball_index": s.ball_index} for s in sig.sorts.values()],
        "functions": [{"name": d.name, "arity": list(d.arity), "result": d.result,
                       "modulus": moduli(d)} for d in sig.functions()],
        "predicates": [{"name": d.name, "arity": list(d.arity),
                        "range": [format_rational(d.range[0]), format_rational(d.range[1])],
                        "modulus": moduli(d)} for d in sig.predicates()],
        "default_sort": sig.default_sort,
    }


def load_signature(path: Union[str, Path]) -> Signature:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from exc
    return signature_from_json(data)
