"""
Realized types

Types are value vectors over an explicit finite formula family, so every result here
is relative to that family and its depth. Distances between types are taken over
realizations inside the given structure ("realized d-distance"), an upper bound on
the distance over all models.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import config
from .errors import CapExceededError, InputError, SortMismatchError
from .evaluator import ValueBounds, enum_formulas, evaluate
from .mstruct import FiniteCarrier, MetricStructure, Point
from .sigform import Binary, Formula, Quant, Signature, free_vars, print_formula

logger = logging.getLogger(__name__)

REALIZED = "realized d-distance"


@dataclass(frozen=True)
class FormulaFamily:
    variables: Tuple[Tuple[str, str], ...]
    formulas: Tuple[Formula, ...]
    depth: int
    label: str = "formula family"

    @property
    def arity(self) -> int:
        return len(self.variables)

    def describe(self) -> str:
        return f"{self.label}: {len(self.formulas)} formulas of depth <= {self.depth} in {self.variables}"


def formula_family(sig: Signature, variables: Sequence[Tuple[str, str]], depth: int,
                   term_depth: int = 1, limit: Optional[int] = config.ENUM_LIMIT) -> FormulaFamily:
    """Enumerated formulas in ``variables`` (sentences included), deduplicated by printed form."""
    formulas = tuple(enum_formulas(sig, depth, variables, term_depth, limit))
    return FormulaFamily(tuple(variables), formulas, depth, f"depth-{depth} family")


def default_family(sig: Signature, n: int, sort: str, depth: int = 1,
                   limit: Optional[int] = config.ENUM_LIMIT) -> FormulaFamily:
    return formula_family(sig, [(f"x{i}", sort) for i in range(1, n + 1)], depth, limit=limit)


@dataclass(frozen=True)
class TypePoint:
    """tp of a tuple over a formula family."""

    family: FormulaFamily
    values: Tuple[Any, ...]
    realization: Tuple[Point, ...]
    labels: Tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.realization)

    def value(self, formula: Formula) -> Any:
        return self.values[self.family.formulas.index(formula)]

    def logic_distance(self, other: "TypePoint") -> Any:
        """Largest disagreement on a family formula."""
        return max((abs(a - b) for a, b in zip(self.values, other.values)), default=Fraction(0))

    def agrees(self, other: "TypePoint", tol: float = config.TOL) -> bool:
        return self.logic_distance(other) <= tol

    def to_json(self) -> Dict[str, Any]:
        return {
            "realization": list(self.labels),
            "family": self.family.describe(),
            "values": {print_formula(f): float(v) for f, v in zip(self.family.formulas, self.values)},
        }


def _assignment(family: FormulaFamily, tuple_: Sequence[Point]) -> Dict[str, Point]:
    return {name: p for (name, _), p in zip(family.variables, tuple_)}


def tp(M: MetricStructure, tuple_: Sequence[Point], family: FormulaFamily, tol: float = config.TOL,
       settings: config.Settings = config.DEFAULTS) -> TypePoint:
    tuple_ = tuple(tuple_)
    if len(tuple_) != family.arity:
        raise InputError(f"tuple of length {len(tuple_)} for a family in {family.arity} variables")
    env = _assignment(family, tuple_)
    values = []
    for f in family.formulas:
        needed = {name: env[name] for name, _ in free_vars(f)}
        values.append(evaluate(M, f, needed, tol=tol, settings=settings).value)
    labels = tuple(M.carrier(sort).label(p) for (_, sort), p in zip(family.variables, tuple_))
    return TypePoint(family, tuple(values), tuple_, labels)


# ====== Type tables ======

@dataclass
class TypeTable:
    """Every tuple of a finite structure grouped by type.

    ``classes[i]`` lists the tuples realizing ``types[i]``.
    """

    structure: MetricStructure
    family: FormulaFamily
    types: List[TypePoint] = field(default_factory=list)
    classes: List[List[Tuple[Point, ...]]] = field(default_factory=list)
    tol: float = config.TOL

    def class_of(self, tuple_: Sequence[Point]) -> int:
        tuple_ = tuple(tuple_)
        for i, members in enumerate(self.classes):
            if tuple_ in members:
                return i
        raise InputError(f"{tuple_!r} is not a tuple of {self.structure.label}")

    def find(self, p: TypePoint) -> int:
        for i, t in enumerate(self.types):
            if t.agrees(p, self.tol):
                return i
        raise InputError(f"type of {p.labels} is not realized in {self.structure.label}")

    def tuple_distance(self, a: Sequence[Point], b: Sequence[Point]) -> Any:
        return max((self.structure.dist(sort, x, y)
                    for (_, sort), x, y in zip(self.family.variables, a, b)), default=Fraction(0))

    def class_distance(self, i: int, j: int) -> Tuple[Any, Tuple[Tuple[Point, ...], Tuple[Point, ...]]]:
        """Least max-coordinate distance between realizations of classes i and j."""
        best, pair = None, None
        for a in self.classes[i]:
            for b in self.classes[j]:
                dist = self.tuple_distance(a, b)
                if best is None or dist < best:
                    best, pair = dist, (a, b)
        return best, pair


def type_table(M: MetricStructure, family: FormulaFamily, tol: float = config.TOL,
               settings: config.Settings = config.DEFAULTS) -> TypeTable:
    carriers = [M.carrier(sort) for _, sort in family.variables]
    if not all(isinstance(c, FiniteCarrier) for c in carriers):
        raise InputError("type tables need finite sorts")
    count = 1
    for c in carriers:
        count *= len(c)
    if count * max(1, len(family.formulas)) > settings.max_points:
        raise CapExceededError("tuple evaluations", count * len(family.formulas), settings.max_points)
    table = TypeTable(M, family, tol=tol)
    for tuple_ in itertools.product(*(c.points for c in carriers)):
        point = tp(M, tuple_, family, tol, settings)
        for i, t in enumerate(table.types):
            if t.agrees(point, tol):
                table.classes[i].append(tuple_)
                break
        else:
            table.types.append(point)
            table.classes.append([tuple_])
    logger.info("%d tuples fall into %d types over %s", count, len(table.types), family.describe())
    return table


def type_distance(M: MetricStructure, p: TypePoint, q: TypePoint, tol: float = config.TOL,
                  table: Optional[TypeTable] = None) -> Any:
    """Realized d-distance: min over realizations (c, b) in M of max_i d(c_i, b_i)."""
    if p.arity != q.arity or p.family != q.family:
        raise InputError("types over different families or arities cannot be compared")
    table = table or type_table(M, p.family, tol)
    value, _ = table.class_distance(table.find(p), table.find(q))
    return value


# ====== The formula pseudometric ======

def formula_pseudometric(structures: Sequence[MetricStructure], phi: Formula, psi: Formula,
                         tol: float = config.TOL, settings: config.Settings = config.DEFAULTS) -> ValueBounds:
    """sup over the structures and all assignments of |phi - psi|.

    Evaluated as the sentence sup x1 ... sup xk. absdiff(phi, psi), so continuous sorts go
    through the optimizer and certify the lower side only.
    """
    sorts: Dict[str, str] = {}
    for name, sort in free_vars(phi) + free_vars(psi):
        if sorts.setdefault(name, sort) != sort:
            raise SortMismatchError(f"variable {name} has sort {sorts[name]} in one formula and {sort} in the other")
    node = Binary("absdiff", phi.root, psi.root)
    for name, sort in reversed(list(sorts.items())):
        node = Quant("sup", name, sort, node)
    sentence = Formula(node, max(phi.cap, psi.cap))
    lo = hi = Fraction(0)
    lo_c = hi_c = True
    witness = None
    for M in structures:
        b = evaluate(M, sentence, tol=tol, settings=settings)
        if b.lo >= lo:
            witness = {"structure": M.label, **(b.witness or {})}
        lo, hi = max(lo, b.lo), max(hi, b.hi)
        lo_c &= b.lo_certified
        hi_c &= b.hi_certified
    return ValueBounds(lo, hi, lo_c, hi_c, witness)


# ====== Nets ======

@dataclass
class NetReport:
    eps: Any
    table: TypeTable
    net: List[int]
    certificate: List[Tuple[int, int, Any]]

    @property
    def radius(self) -> Any:
        return max((d for _, _, d in self.certificate), default=Fraction(0))

    def validate(self, tol: float = config.TOL) -> bool:
        covered = {i for i, _, _ in self.certificate}
        return (covered == set(range(len(self.table.types)))
                and all(j in self.net and d <= self.eps + tol for _, j, d in self.certificate))

    def to_json(self) -> Dict[str, Any]:
        types = self.table.types
        return {
            "label": REALIZED,
            "family": self.table.family.describe(),
            "eps": float(self.eps),
            "types": len(types),
            "net": [list(types[i].labels) for i in self.net],
            "certificate": [{"type": list(types[i].labels), "net_member": list(types[j].labels),
                             "distance": float(d)} for i, j, d in self.certificate],
            "radius": float(self.radius),
            "valid": self.validate(),
        }


def eps_net(M: MetricStructure, n: int, eps: Any, family: Optional[FormulaFamily] = None,
            sort: Optional[str] = None, tol: float = config.TOL,
            settings: config.Settings = config.DEFAULTS) -> NetReport:
    """Greedy farthest-point net of the realized n-types at scale eps.

    The net starts from the first type in tuple order and keeps adding the type farthest
    from it while that distance exceeds eps.
    """
    sort = sort or M.signature.default_sort
    if family is None:
        if sort is None:
            raise InputError("name the sort for the default family")
        family = default_family(M.signature, n, sort)
    if family.arity != n:
        raise InputError(f"family has {family.arity} variables, expected {n}")
    table = type_table(M, family, tol, settings)
    k = len(table.types)
    dist = [[table.class_distance(i, j)[0] if i != j else Fraction(0) for j in range(k)] for i in range(k)]
    net = [0]
    nearest = list(dist[0])
    while True:
        far = max(range(k), key=lambda i: (nearest[i], -i))
        if nearest[far] <= eps + tol:
            break
        net.append(far)
        nearest = [min(a, b) for a, b in zip(nearest, dist[far])]
    certificate = []
    for i in range(k):
        j = min(net, key=lambda m: dist[i][m])
        certificate.append((i, j, dist[i][j]))
    logger.info("eps-net at %s: %d of %d types", eps, len(net), k)
    return NetReport(eps, table, net, certificate)
