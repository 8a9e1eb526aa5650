"""
Metric structures

Constructors and validators for the structures the toolkit evaluates on:
- ``sym_hamming(n)``: Sym(n) with the normalized Hamming metric
- ``gn_family(n)``: Z(2)^n x S3 inside Sym(2^n + 3)
- ``discrete_wrap``: a finite group with the {0,1} metric
- ``hilbert_tower``: real or complex balls B_1..B_N of a finite-dimensional space
- ``tree_space``: pointed weighted trees with their ball sorts
- ``metric_space``: a bare finite metric space
- ``load_structure``: the JSON structure-file reader (generator shorthands included)
"""

import itertools
import json
import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, ClassVar, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from . import config
from .errors import CapExceededError, InputError, StructureError
from .sigform import (
    FINITE, HILBERT_BALL, ONE, TREE_BALL, ZERO, Modulus, Signature, Sort, SymbolDecl, SymbolFamily,
    group_signature, signature_from_json, split_family_name, to_rational,
)

logger = logging.getLogger(__name__)

Point = Any
Key = Tuple[str, Tuple[str, ...]]


# ====== Carriers ======

class FiniteCarrier:
    """Finite point list with a metric and printable labels."""

    kind = FINITE

    def __init__(self, points: Sequence[Hashable], metric: Callable[[Point, Point], Any],
                 labels: Optional[Callable[[Point], str]] = None):
        self.points = tuple(points)
        self._index = {p: i for i, p in enumerate(self.points)}
        if len(self._index) != len(self.points):
            raise StructureError("carrier points must be distinct")
        self.metric = metric
        self._labels = labels
        self._cache: Dict[Tuple[Point, Point], Any] = {}

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, p: Point) -> bool:
        try:
            return p in self._index
        except TypeError:
            return False

    def index(self, p: Point) -> int:
        return self._index[p]

    def dist(self, a: Point, b: Point) -> Any:
        key = (a, b)
        if key not in self._cache:
            self._cache[key] = self.metric(a, b)
        return self._cache[key]

    def label(self, p: Point) -> str:
        return self._labels(p) if self._labels else str(p)

    def subset(self, points: Iterable[Point]) -> "FiniteCarrier":
        keep = set(points)
        return FiniteCarrier([p for p in self.points if p in keep], self.metric, self._labels)


@dataclass(frozen=True)
class BallCarrier:
    """Closed ball of a given radius in R^dim or C^dim.

    Points are real numpy vectors; complex vectors are stored as [real parts, imaginary parts].
    """

    field: str
    dim: int
    radius: float
    kind: ClassVar[str] = HILBERT_BALL

    @property
    def real_dim(self) -> int:
        return self.dim if self.field == "real" else 2 * self.dim

    def project(self, x: np.ndarray) -> np.ndarray:
        norm = float(np.linalg.norm(x))
        return x if norm <= self.radius else x * (self.radius / norm)

    def sample(self, rng: np.random.Generator, count: int = 1) -> np.ndarray:
        """Uniform samples from the ball, one per row."""
        direction = rng.standard_normal((count, self.real_dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * rng.random(count) ** (1.0 / self.real_dim)
        return direction * radii[:, None]

    def sphere(self, rng: np.random.Generator, count: int = 1, radius: Optional[float] = None) -> np.ndarray:
        direction = rng.standard_normal((count, self.real_dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * (self.radius if radius is None else radius)

    def dist(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    def contains(self, x: np.ndarray, tol: float = config.TOL) -> bool:
        return float(np.linalg.norm(x)) <= self.radius + tol

    def label(self, p: np.ndarray) -> str:
        return np.array2string(np.asarray(p), precision=6)

    def __len__(self) -> int:
        raise TypeError("Hilbert balls have no finite point list")


Carrier = Union[FiniteCarrier, BallCarrier]


# ====== Structures ======

class MetricStructure:
    """A signature with an interpretation: carriers, function and predicate implementations.

    Implementations are keyed by ``(name, argument sorts)``. Parameterized families
    (``lam[r]``, ``I[m,n]``) are interpreted by ``family_impls[prefix](params, arity)``.
    """

    def __init__(self, signature: Signature, carriers: Mapping[str, Carrier],
                 functions: Mapping[Key, Callable] = None, predicates: Mapping[Key, Callable] = None,
                 family_impls: Mapping[str, Callable] = None, label: str = "structure",
                 meta: Optional[Dict[str, Any]] = None):
        missing = set(signature.sorts) - set(carriers)
        if missing:
            raise StructureError(f"no carrier for sorts {sorted(missing)}")
        self.signature = signature
        self.carriers = dict(carriers)
        self.functions = dict(functions or {})
        self.predicates = dict(predicates or {})
        self.family_impls = dict(family_impls or {})
        self.label = label
        self.meta = dict(meta or {})
        for decl in signature.functions():
            if decl.key not in self.functions:
                raise StructureError(f"function {decl.name}{decl.arity} has no interpretation")
        for decl in signature.predicates():
            if decl.key not in self.predicates:
                raise StructureError(f"predicate {decl.name}{decl.arity} has no interpretation")
        self._family_cache: Dict[Key, Callable] = {}

    def __repr__(self) -> str:
        return f"MetricStructure({self.label})"

    def carrier(self, sort: str) -> Carrier:
        try:
            return self.carriers[sort]
        except KeyError:
            raise InputError(f"structure {self.label} has no sort {sort!r}") from None

    def is_finite(self, sort: str) -> bool:
        return isinstance(self.carrier(sort), FiniteCarrier)

    def dist(self, sort: str, a: Point, b: Point) -> Any:
        return self.carrier(sort).dist(a, b)

    def function(self, name: str, arity: Tuple[str, ...]) -> Callable:
        key = (name, tuple(arity))
        if key in self.functions:
            return self.functions[key]
        if key not in self._family_cache:
            prefix, params = split_family_name(name)
            if prefix not in self.family_impls:
                raise InputError(f"no interpretation for {name}{arity}")
            self._family_cache[key] = self.family_impls[prefix](params, tuple(arity))
        return self._family_cache[key]

    def predicate(self, name: str, arity: Tuple[str, ...]) -> Callable:
        try:
            return self.predicates[(name, tuple(arity))]
        except KeyError:
            raise InputError(f"no interpretation for predicate {name}{arity}") from None

    # -- derived structures --

    def _copy(self, **changes: Any) -> "MetricStructure":
        kwargs = dict(signature=self.signature, carriers=self.carriers, functions=self.functions,
                      predicates=self.predicates, family_impls=self.family_impls,
                      label=self.label, meta=self.meta)
        kwargs.update(changes)
        return MetricStructure(**kwargs)

    def expand(self, predicates: Iterable[Tuple[SymbolDecl, Callable]] = (),
               label: Optional[str] = None, **meta: Any) -> "MetricStructure":
        """Add predicate symbols together with their interpretations."""
        pairs = list(predicates)
        sig = self.signature.extend(predicates=[d for d, _ in pairs])
        impls = dict(self.predicates)
        impls.update({d.key: fn for d, fn in pairs})
        return self._copy(signature=sig, predicates=impls, label=label or self.label,
                          meta={**self.meta, **meta})

    def with_function(self, name: str, arity: Tuple[str, ...], fn: Callable) -> "MetricStructure":
        self.signature.decl("function", name, tuple(arity))
        functions = dict(self.functions)
        functions[(name, tuple(arity))] = fn
        return self._copy(functions=functions, label=f"{self.label}*")

    def with_metric(self, sort: str, metric: Callable[[Point, Point], Any]) -> "MetricStructure":
        old = self.carrier(sort)
        if not isinstance(old, FiniteCarrier):
            raise InputError("only finite carriers can take a replacement metric")
        carriers = dict(self.carriers)
        carriers[sort] = FiniteCarrier(old.points, metric, old._labels)
        return self._copy(carriers=carriers, label=f"{self.label}*")

    def restrict(self, subsets: Mapping[str, Iterable[Point]], label: Optional[str] = None,
                 check: bool = True) -> "MetricStructure":
        """Substructure on the given subsets.

        With ``check`` the subsets must be closed under every function symbol; without it
        only the quantifier domains shrink and terms are still computed in the full structure.
        """
        carriers = dict(self.carriers)
        for sort, pts in subsets.items():
            carrier = self.carrier(sort)
            if not isinstance(carrier, FiniteCarrier):
                raise InputError(f"cannot restrict the continuous sort {sort}")
            pts = list(pts)
            outside = [p for p in pts if p not in carrier]
            if outside:
                raise StructureError(f"{outside[0]!r} is not a point of {sort}", outside[0])
            if not pts:
                raise StructureError(f"restriction of {sort} is empty")
            carriers[sort] = carrier.subset(pts)
        for decl in (self.signature.functions() if check else ()):
            if not all(isinstance(carriers[s], FiniteCarrier) for s in decl.arity + (decl.result,)):
                continue
            fn = self.functions[decl.key]
            for args in itertools.product(*(carriers[s].points for s in decl.arity)):
                value = fn(*args)
                if value not in carriers[decl.result]:
                    raise StructureError(f"subset not closed under {decl.name}", (decl.name, args))
        return self._copy(carriers=carriers, label=label or f"{self.label}|restricted")


# ====== Validation ======

def _above(a: Any, b: Any, tol: float) -> bool:
    if isinstance(a, (int, Fraction)) and isinstance(b, (int, Fraction)):
        return a > b
    return float(a) > float(b) + tol


def validate_metric(M: MetricStructure, sort: str, limit: int = config.METRIC_CHECK_LIMIT,
                    tol: float = config.TOL) -> None:
    """Check metric axioms and the declared diameter; exhaustive up to ``limit`` points.

    Larger carriers are checked on a fixed sample of ``limit`` points.
    """
    carrier = M.carrier(sort)
    if not isinstance(carrier, FiniteCarrier):
        return
    points = list(carrier.points)
    if len(points) > limit:
        points = random.Random(config.SEED).sample(points, limit)
        logger.debug("metric check on %s sampled %d of %d points", sort, limit, len(carrier))
    diameter = M.signature.sort(sort).diameter
    for x in points:
        if _above(abs(carrier.dist(x, x)), 0, tol):
            raise StructureError(f"d(x,x) != 0 in {sort}", (carrier.label(x),))
    for x, y in itertools.combinations(points, 2):
        dxy, dyx = carrier.dist(x, y), carrier.dist(y, x)
        if _above(abs(dxy - dyx), 0, tol):
            raise StructureError(f"metric on {sort} is not symmetric", (carrier.label(x), carrier.label(y)))
        if not _above(dxy, 0, tol):
            raise StructureError(f"distinct points at distance 0 in {sort}", (carrier.label(x), carrier.label(y)))
        if _above(dxy, diameter, tol):
            raise StructureError(f"distance exceeds the declared diameter of {sort}",
                                 (carrier.label(x), carrier.label(y)))
    for x, y, z in itertools.permutations(points, 3):
        if _above(carrier.dist(x, z), carrier.dist(x, y) + carrier.dist(y, z), tol):
            raise StructureError(f"triangle inequality fails in {sort}",
                                 tuple(carrier.label(p) for p in (x, y, z)))


@dataclass(frozen=True)
class GroupView:
    """Group operations of a single-sorted metric group, read off a structure."""

    sort: str
    elements: Tuple[Point, ...]
    mul: Callable[[Point, Point], Point]
    inv: Callable[[Point], Point]
    unit: Point
    dist: Callable[[Point, Point], Any]
    label: Callable[[Point], str]

    def product(self, word: Sequence[Point]) -> Point:
        out = self.unit
        for g in word:
            out = self.mul(out, g)
        return out


def group_view(M: MetricStructure, sort: Optional[str] = None) -> GroupView:
    sort = sort or M.signature.default_sort
    if sort is None:
        raise InputError("structure has several sorts; name the group sort")
    carrier = M.carrier(sort)
    if not isinstance(carrier, FiniteCarrier):
        raise InputError(f"sort {sort} is not finite")
    try:
        mul = M.function("mul", (sort, sort))
        inv = M.function("inv", (sort,))
        unit = M.function("1", ())()
    except InputError as exc:
        raise InputError(f"{M.label} is not a metric group on {sort}: {exc}") from exc
    return GroupView(sort, carrier.points, mul, inv, unit, carrier.dist, carrier.label)


def validate_group(M: MetricStructure, sort: Optional[str] = None) -> None:
    """Exhaustive check of closure, associativity, unit and inverse laws."""
    G = group_view(M, sort)
    members = set(G.elements)
    if G.unit not in members:
        raise StructureError("the unit is not a carrier point", G.unit)
    for x, y in itertools.product(G.elements, repeat=2):
        if G.mul(x, y) not in members:
            raise StructureError("multiplication leaves the carrier", (G.label(x), G.label(y)))
    for x in G.elements:
        if G.mul(x, G.unit) != x or G.mul(G.unit, x) != x:
            raise StructureError("unit law fails", (G.label(x),))
        if G.mul(x, G.inv(x)) != G.unit:
            raise StructureError("inverse law fails", (G.label(x),))
    for x, y, z in itertools.product(G.elements, repeat=3):
        if G.mul(G.mul(x, y), z) != G.mul(x, G.mul(y, z)):
            raise StructureError("multiplication is not associative",
                                 (G.label(x), G.label(y), G.label(z)))


# ====== Permutation groups ======

def perm_mul(p: Tuple[int, ...], q: Tuple[int, ...]) -> Tuple[int, ...]:
    """Composition, p applied after q."""
    return tuple(p[i] for i in q)


def perm_inv(p: Tuple[int, ...]) -> Tuple[int, ...]:
    out = [0] * len(p)
    for i, j in enumerate(p):
        out[j] = i
    return tuple(out)


def hamming(p: Tuple[int, ...], q: Tuple[int, ...]) -> Fraction:
    return Fraction(sum(1 for a, b in zip(p, q) if a != b), len(p))


def cycle_notation(p: Tuple[int, ...]) -> str:
    """Cycle notation on 1-based points, ``()`` for the identity."""
    seen = set()
    cycles = []
    sep = "" if len(p) <= 9 else " "
    for start in range(len(p)):
        if start in seen or p[start] == start:
            continue
        cycle = []
        i = start
        while i not in seen:
            seen.add(i)
            cycle.append(str(i + 1))
            i = p[i]
        cycles.append("(" + sep.join(cycle) + ")")
    return "".join(cycles) or "()"


def _permutation_group(elements: Sequence[Tuple[int, ...]], label: str,
                       meta: Dict[str, Any]) -> MetricStructure:
    sig = group_signature("G", 1)
    n = len(elements[0])
    identity = tuple(range(n))
    carrier = FiniteCarrier(elements, hamming, cycle_notation)
    return MetricStructure(
        sig, {"G": carrier},
        functions={
            ("mul", ("G", "G")): perm_mul,
            ("inv", ("G",)): perm_inv,
            ("1", ()): lambda: identity,
        },
        label=label, meta=meta,
    )


def sym_hamming(n: int, cap: int = config.SYM_CAP) -> MetricStructure:
    """Sym(n) with d(s, t) = |{i : s(i) != t(i)}| / n."""
    if n < 1:
        raise InputError("sym_hamming needs n >= 1")
    if n > cap:
        raise CapExceededError("n", n, cap)
    elements = list(itertools.permutations(range(n)))
    return _permutation_group(elements, f"Sym({n})", {"family": "sym", "n": n, "degree": n})


def gn_element(n: int, a: int, s: Sequence[int]) -> Tuple[int, ...]:
    """The permutation of 2^n + 3 points: i -> i xor a on the block of 2^n, s on the last 3."""
    m = 2 ** n
    return tuple([i ^ a for i in range(m)] + [m + j for j in s])


def gn_flip(n: int) -> Tuple[int, ...]:
    """The element flipping all n coordinates."""
    return gn_element(n, 2 ** n - 1, (0, 1, 2))


def gn_transposition(n: int) -> Tuple[int, ...]:
    """The transposition of the first two points of the 3-point block."""
    return gn_element(n, 0, (1, 0, 2))


def gn_family(n: int, cap: int = config.GN_CAP) -> MetricStructure:
    """G_n = Z(2)^n x S3 inside Sym(2^n + 3) with the Hamming metric."""
    if n < 0:
        raise InputError("gn_family needs n >= 0")
    if n > cap:
        raise CapExceededError("n", n, cap)
    elements = [gn_element(n, a, s)
                for a in range(2 ** n) for s in itertools.permutations(range(3))]
    return _permutation_group(elements, f"G_{n}", {"family": "gn", "n": n, "degree": 2 ** n + 3})


# ====== Discrete wrappers ======

def cyclic_table(n: int) -> List[List[int]]:
    return [[(i + j) % n for j in range(n)] for i in range(n)]


def _table_group(table: Sequence[Sequence[int]]) -> Tuple[int, Dict[int, int]]:
    """Validate a Cayley table; return the unit and the inverse map."""
    size = len(table)
    if size == 0 or any(len(row) != size for row in table):
        raise StructureError("Cayley table must be square and nonempty")
    if any(not isinstance(v, int) or not 0 <= v < size for row in table for v in row):
        raise StructureError("Cayley table entries must be element indices")
    units = [e for e in range(size) if all(table[e][x] == x and table[x][e] == x for x in range(size))]
    if not units:
        raise StructureError("Cayley table has no identity element")
    unit = units[0]
    inverse = {}
    for x in range(size):
        found = [y for y in range(size) if table[x][y] == unit]
        if not found:
            raise StructureError("element without inverse", x)
        inverse[x] = found[0]
    for x, y, z in itertools.product(range(size), repeat=3):
        if table[table[x][y]][z] != table[x][table[y][z]]:
            raise StructureError("Cayley table is not associative", (x, y, z))
    return unit, inverse


def discrete_wrap(group: Union[Sequence[Sequence[int]], MetricStructure],
                  names: Optional[Sequence[str]] = None, check: bool = True) -> MetricStructure:
    """The group with the discrete {0,1} metric.

    ``group`` is either a Cayley table over indices 0..k-1 or a metric group structure
    whose multiplication is kept and whose metric is replaced.
    """
    discrete = lambda a, b: ZERO if a == b else ONE  # noqa: E731
    sig = group_signature("G", 1)
    if isinstance(group, MetricStructure):
        G = group_view(group)
        carrier = FiniteCarrier(G.elements, discrete, G.label)
        unit = G.unit
        functions = {("mul", ("G", "G")): G.mul, ("inv", ("G",)): G.inv, ("1", ()): lambda: unit}
        label = f"discrete {group.label}"
    else:
        table = [list(row) for row in group]
        unit, inverse = _table_group(table) if check else (0, {})
        if not check:
            inverse = {x: next((y for y in range(len(table)) if table[x][y] == unit), x)
                       for x in range(len(table))}
        label_of = (lambda i: names[i]) if names else str
        carrier = FiniteCarrier(range(len(table)), discrete, label_of)
        functions = {("mul", ("G", "G")): lambda a, b: table[a][b],
                     ("inv", ("G",)): inverse.__getitem__,
                     ("1", ()): lambda: unit}
        label = f"discrete group of order {len(table)}"
    M = MetricStructure(sig, {"G": carrier}, functions, label=label, meta={"family": "discrete"})
    if check and isinstance(group, MetricStructure):
        validate_group(M)
    return M


def metric_space(points: Sequence[Hashable], distances: Union[Sequence[Sequence[Any]], Mapping],
                 sort: str = "X", labels: Optional[Sequence[str]] = None, check: bool = True,
                 label: str = "metric space") -> MetricStructure:
    """Bare finite metric space from a distance matrix or a {(a, b): d} mapping."""
    points = list(points)
    if isinstance(distances, Mapping):
        table = {}
        for (a, b), v in distances.items():
            table[(a, b)] = to_rational(v)
            table.setdefault((b, a), to_rational(v))
        for p in points:
            table.setdefault((p, p), ZERO)
    else:
        table = {(a, b): to_rational(distances[i][j])
                 for i, a in enumerate(points) for j, b in enumerate(points)}

    def metric(a: Point, b: Point) -> Fraction:
        try:
            return table[(a, b)]
        except KeyError:
            raise StructureError(f"no distance given for {(a, b)!r}", (a, b)) from None

    diameter = max((table[(a, b)] for a in points for b in points if (a, b) in table), default=ZERO)
    label_of = (lambda p: labels[points.index(p)]) if labels else str
    sig = Signature([Sort(sort, diameter if diameter > 0 else ONE)], name=label)
    M = MetricStructure(sig, {sort: FiniteCarrier(points, metric, label_of)}, label=label)
    if check:
        validate_metric(M, sort)
    return M


# ====== Hilbert towers ======

def _ball_index_for(abs_sq: Fraction) -> int:
    """The k >= 1 with k - 1 <= |c| < k, computed from |c|^2."""
    k = 1
    while abs_sq >= k * k:
        k += 1
    return k


def _rational_sqrt(q: Fraction) -> Optional[Fraction]:
    num, den = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if num * num == q.numerator and den * den == q.denominator:
        return Fraction(num, den)
    return None


def to_complex(x: np.ndarray, dim: int) -> np.ndarray:
    return x[:dim] + 1j * x[dim:]


def from_complex(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def hilbert_tower(field: str = "real", dim: int = 2, balls: int = 1) -> MetricStructure:
    """Balls B_1..B_N of R^dim or C^dim with the sorted Hilbert-space language.

    Symbols: the origin ``0`` in B_1, inclusions ``I[m,n]``, scalar maps ``lam[r]``
    (``lam[a,b]`` for a + bi) from B_m into B_km with k - 1 <= |r| < k, ``vadd`` and
    ``vsub`` from B_n x B_n into B_2n, ``norm`` on each ball and the inner product
    (``ip``; ``ip_re`` and ``ip_im`` for complex scalars) ranged in [-n^2, n^2].
    """
    if field not in ("real", "complex"):
        raise InputError(f"field must be real or complex, got {field!r}")
    if dim < 1 or balls < 1:
        raise InputError("hilbert_tower needs dim >= 1 and at least one ball")
    names = {n: f"B{n}" for n in range(1, balls + 1)}
    sorts = [Sort(names[n], 2 * n, HILBERT_BALL, n) for n in names]
    carriers = {names[n]: BallCarrier(field, dim, float(n)) for n in names}
    zero = np.zeros(dim if field == "real" else 2 * dim)

    functions: List[SymbolDecl] = [SymbolDecl("0", (), result="B1")]
    impls: Dict[Key, Callable] = {("0", ()): lambda: zero.copy()}
    predicates: List[SymbolDecl] = []
    pred_impls: Dict[Key, Callable] = {}
    for n, b in names.items():
        if 2 * n <= balls:
            target = names[2 * n]
            functions.append(SymbolDecl("vadd", (b, b), result=target))
            functions.append(SymbolDecl("vsub", (b, b), result=target))
            impls[("vadd", (b, b))] = lambda x, y: x + y
            impls[("vsub", (b, b))] = lambda x, y: x - y
        predicates.append(SymbolDecl("norm", (b,), range=(ZERO, Fraction(n))))
        pred_impls[("norm", (b,))] = lambda x: float(np.linalg.norm(x))
        ip_range = (Fraction(-n * n), Fraction(n * n))
        ip_moduli = (Modulus.scale(n), Modulus.scale(n))
        if field == "real":
            predicates.append(SymbolDecl("ip", (b, b), range=ip_range, moduli=ip_moduli))
            pred_impls[("ip", (b, b))] = lambda x, y: float(np.dot(x, y))
        else:
            predicates.append(SymbolDecl("ip_re", (b, b), range=ip_range, moduli=ip_moduli))
            predicates.append(SymbolDecl("ip_im", (b, b), range=ip_range, moduli=ip_moduli))
            pred_impls[("ip_re", (b, b))] = lambda x, y: float(np.vdot(to_complex(y, dim), to_complex(x, dim)).real)
            pred_impls[("ip_im", (b, b))] = lambda x, y: float(np.vdot(to_complex(y, dim), to_complex(x, dim)).imag)

    def ball_of(sort: str) -> Optional[int]:
        s = sorts_by_name.get(sort)
        return s.ball_index if s is not None else None

    def build_inclusion(params: Tuple[Fraction, ...], arity: Tuple[str, ...]) -> Optional[SymbolDecl]:
        if len(params) != 2 or len(arity) != 1 or any(p.denominator != 1 for p in params):
            return None
        m, n = int(params[0]), int(params[1])
        if ball_of(arity[0]) != m or not 1 <= m < n <= balls:
            return None
        return SymbolDecl(f"I[{m},{n}]", arity, result=names[n])

    def build_scalar(params: Tuple[Fraction, ...], arity: Tuple[str, ...]) -> Optional[SymbolDecl]:
        if len(arity) != 1 or len(params) not in (1, 2) or (field == "real" and len(params) != 1):
            return None
        m = ball_of(arity[0])
        if m is None:
            return None
        abs_sq = sum(p * p for p in params)
        k = _ball_index_for(abs_sq)
        if k * m > balls:
            return None
        exact = _rational_sqrt(abs_sq)
        if abs_sq == 0:
            modulus = Modulus.identity()
        else:
            modulus = Modulus.scale(exact if exact is not None else k)
        name = "lam[" + ",".join(_fmt(p) for p in params) + "]"
        return SymbolDecl(name, arity, result=names[k * m], moduli=(modulus,))

    def include(params, arity):
        return lambda x: x.copy()

    def scalar(params, arity):
        if len(params) == 1:
            r = float(params[0])
            return lambda x: r * x
        c = complex(float(params[0]), float(params[1]))
        return lambda x: from_complex(c * to_complex(x, dim))

    sorts_by_name = {s.name: s for s in sorts}
    sig = Signature(sorts, functions, predicates,
                    families=[SymbolFamily("I", build_inclusion), SymbolFamily("lam", build_scalar)],
                    default_sort="B1", name=f"hilbert-{field}")
    return MetricStructure(sig, carriers, impls, pred_impls,
                           family_impls={"I": include, "lam": scalar},
                           label=f"{field} Hilbert tower dim {dim} balls {balls}",
                           meta={"family": "hilbert", "field": field, "dim": dim, "balls": balls})


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


# ====== Trees ======

def _subdivide(graph: nx.Graph, step: Fraction) -> Tuple[nx.Graph, Fraction]:
    out = nx.Graph()
    out.add_nodes_from(graph.nodes)
    resolution = ZERO
    for u, v, data in graph.edges(data=True):
        length = data["weight"]
        pieces = max(1, math.ceil(length / step))
        seg = length / pieces
        resolution = max(resolution, seg)
        chain = [u] + [(u, v, k) for k in range(1, pieces)] + [v]
        for a, b in zip(chain, chain[1:]):
            out.add_edge(a, b, weight=seg)
    return out, resolution


def tree_space(edges: Iterable[Sequence[Any]], basepoint: Hashable, step: Any = None,
               balls: Optional[int] = None) -> MetricStructure:
    """Pointed weighted tree with its path metric.

    Sort ``T`` holds every vertex; ball sorts ``B1..BN`` hold the vertices within integer
    radius n of the basepoint. With ``step`` each edge is subdivided into equal segments
    of length at most ``step``; ``meta["resolution"]`` is the longest remaining segment.
    ``balls`` raises the number of ball sorts above the tree radius.
    """
    graph = nx.Graph()
    for entry in edges:
        try:
            a, b, length = entry
        except (TypeError, ValueError) as exc:
            raise InputError(f"tree edge must be [a, b, length], got {entry!r}") from exc
        length = to_rational(length)
        if length <= 0:
            raise StructureError("tree edge lengths must be positive", (a, b))
        if graph.has_edge(a, b) or a == b:
            raise StructureError("tree contains a loop or a repeated edge", (a, b))
        graph.add_edge(a, b, weight=length)
    if graph.number_of_nodes() == 0:
        graph.add_node(basepoint)
    if basepoint not in graph:
        raise StructureError(f"basepoint {basepoint!r} is not a vertex", basepoint)
    if not nx.is_tree(graph):
        witness = nx.find_cycle(graph) if not nx.is_forest(graph) else None
        reason = "contains a cycle" if witness else "is disconnected"
        raise StructureError(f"input graph {reason}", witness)
    resolution = max((d["weight"] for _, _, d in graph.edges(data=True)), default=ZERO)
    if step is not None:
        graph, resolution = _subdivide(graph, to_rational(step))
    lengths = dict(nx.all_pairs_dijkstra_path_length(graph, weight="weight"))
    metric = lambda a, b: Fraction(lengths[a][b])  # noqa: E731
    nodes = sorted(graph.nodes, key=lambda v: (lengths[basepoint][v], str(v)))
    diameter = max((lengths[a][b] for a in nodes for b in nodes), default=ZERO)
    radius = max((lengths[basepoint][v] for v in nodes), default=ZERO)
    n_balls = max(1, math.ceil(radius), balls or 0)
    sorts = [Sort("T", diameter if diameter > 0 else ONE)]
    carriers: Dict[str, Carrier] = {"T": FiniteCarrier(nodes, metric)}
    for n in range(1, n_balls + 1):
        sorts.append(Sort(f"B{n}", 2 * n, TREE_BALL, n))
        carriers[f"B{n}"] = FiniteCarrier([v for v in nodes if lengths[basepoint][v] <= n], metric)

    def build_inclusion(params: Tuple[Fraction, ...], arity: Tuple[str, ...]) -> Optional[SymbolDecl]:
        if len(params) != 2 or len(arity) != 1:
            return None
        m, n = params
        if arity[0] != f"B{m}" or not (m < n <= n_balls) or n.denominator != 1:
            return None
        return SymbolDecl(f"I[{m},{n}]", arity, result=f"B{n}")

    sig = Signature(sorts, [SymbolDecl("0", (), result="B1")],
                    families=[SymbolFamily("I", build_inclusion)], default_sort="T", name="tree")
    return MetricStructure(sig, carriers, {("0", ()): lambda: basepoint},
                           family_impls={"I": lambda params, arity: (lambda x: x)},
                           label=f"tree on {len(nodes)} points",
                           meta={"family": "tree", "basepoint": basepoint, "resolution": resolution,
                                 "graph": graph})


def random_tree(rng: random.Random, vertices: int, lengths: Sequence[Any] = (1, 2, Fraction(1, 2))
                ) -> List[Tuple[int, int, Fraction]]:
    """Edges of a random tree on 0..vertices-1 (each vertex attached to an earlier one)."""
    return [(v, rng.randrange(v), to_rational(rng.choice(lengths))) for v in range(1, vertices)]


# ====== Structure files ======

def _nested(table: Any, args: Sequence[int]) -> Any:
    for i in args:
        table = table[i]
    return table


def _explicit_structure(spec: Mapping[str, Any]) -> MetricStructure:
    sig = signature_from_json(spec["signature"])
    carriers: Dict[str, Carrier] = {}
    for sort, entry in spec.get("carriers", {}).items():
        points = list(entry["points"])
        matrix = entry["distances"]
        index = {p: i for i, p in enumerate(points)}
        values = [[to_rational(v) for v in row] for row in matrix]
        carriers[sort] = FiniteCarrier(
            points, lambda a, b, values=values, index=index: values[index[a]][index[b]],
            (lambda p, labels=entry["labels"], index=index: labels[index[p]]) if "labels" in entry else None,
        )
    functions: Dict[Key, Callable] = {}
    for entry in spec.get("functions", []):
        decl = sig.decl("function", entry["name"], tuple(entry.get("arity", ())))
        table = entry["table"]
        idx = [carriers[s] for s in decl.arity]
        out = carriers[decl.result]

        def fn(*args, table=table, idx=idx, out=out):
            return out.points[_nested(table, [c.index(a) for c, a in zip(idx, args)])]
        functions[decl.key] = fn
    predicates: Dict[Key, Callable] = {}
    for entry in spec.get("predicates", []):
        decl = sig.decl("predicate", entry["name"], tuple(entry.get("arity", ())))
        table = entry["table"]
        idx = [carriers[s] for s in decl.arity]

        def pred(*args, table=table, idx=idx):
            return to_rational(_nested(table, [c.index(a) for c, a in zip(idx, args)]))
        predicates[decl.key] = pred
    M = MetricStructure(sig, carriers, functions, predicates, label=spec.get("label", sig.name))
    for sort in carriers:
        validate_metric(M, sort)
    return M


def structure_from_spec(spec: Mapping[str, Any]) -> MetricStructure:
    """Build a structure from a parsed structure-file object."""
    if not isinstance(spec, Mapping):
        raise InputError(f"structure spec must be an object, got {type(spec).__name__}")
    kind = spec.get("kind")
    try:
        if kind is None:
            return _explicit_structure(spec)
        if kind == "sym_hamming":
            return sym_hamming(int(spec["n"]))
        if kind == "gn":
            return gn_family(int(spec["n"]))
        if kind == "hilbert":
            return hilbert_tower(spec.get("field", "real"), int(spec["dim"]), int(spec.get("balls", 1)))
        if kind == "tree":
            return tree_space(spec["edges"], spec.get("basepoint", 0), spec.get("step"))
        if kind == "cayley":
            return discrete_wrap(spec["table"], spec.get("names"))
        if kind == "cyclic":
            return discrete_wrap(cyclic_table(int(spec["n"])))
        if kind == "discrete":
            return discrete_wrap(structure_from_spec(spec["of"]))
        if kind == "metric":
            return metric_space(spec["points"], spec["distances"], spec.get("sort", "X"), spec.get("labels"))
        if kind == "action":
            from .axioms import action_from_spec
            return action_from_spec(spec)
    except KeyError as exc:
        raise InputError(f"structure spec of kind {kind!r} is missing {exc}") from exc
    raise InputError(f"unknown structure kind {kind!r}")


def load_structure(source: Union[str, Path, Mapping[str, Any]]) -> MetricStructure:
    if isinstance(source, Mapping):
        return structure_from_spec(source)
    try:
        data = json.loads(Path(source).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {source}: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from exc
    return structure_from_spec(data)
