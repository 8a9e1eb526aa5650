"""
Ultraproduct approximation along structure sequences

No nonprincipal ultrafilter is computable, so limits are read off a tail window of
the sequence. A convergent tail gives the ultralimit for every nonprincipal
ultrafilter; oscillating tails are reported as such and never resolved by choice.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from . import config
from .errors import InputError, SignatureMismatchError, SortMismatchError
from .evaluator import evaluate
from .mstruct import MetricStructure, Point, gn_family, structure_from_spec, sym_hamming
from .sigform import Formula, format_rational, free_vars, print_formula

logger = logging.getLogger(__name__)

COMMUTATIVITY = "sup x:G. sup y:G. d(mul(x,y), mul(y,x))"


@dataclass
class StructureSequence:
    """Indexed structures standing in for an ultraproduct.

    ``closed_forms`` maps a printed sentence to its exact value at an index; indices above
    ``exact_limit`` use them instead of brute force.
    """

    indices: Tuple[int, ...]
    build: Callable[[int], MetricStructure]
    label: str = "sequence"
    closed_forms: Dict[str, Callable[[int], Fraction]] = field(default_factory=dict)
    exact_limit: Optional[int] = None
    _members: Dict[int, MetricStructure] = field(default_factory=dict, repr=False)

    def member(self, n: int) -> MetricStructure:
        if n not in self.indices:
            raise InputError(f"index {n} is not in {self.label}")
        if n not in self._members:
            self._members[n] = self.build(n)
        return self._members[n]

    def uses_closed_form(self, sentence: str, n: int) -> bool:
        return (sentence in self.closed_forms and self.exact_limit is not None
                and n > self.exact_limit)


@dataclass(frozen=True)
class PointSequence:
    sort: str
    at: Callable[[int], Point]
    label: str = "p"


@dataclass
class ConvergenceReport:
    values: List[Tuple[int, Any, str]]
    classification: str
    window: int
    limit: Any = None
    tol: Any = None
    method: Optional[str] = None
    trend: Optional[str] = None

    @property
    def convergent(self) -> bool:
        return self.classification == "convergent"

    def value_list(self) -> List[Any]:
        return [v for _, v, _ in self.values]

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "classification": self.classification,
            "window": self.window,
            "values": [{"index": n, "value": float(v), "source": src,
                        **({"exact": format_rational(v)} if isinstance(v, Fraction) else {})}
                       for n, v, src in self.values],
            "trend": self.trend,
        }
        if self.convergent:
            out["limit"] = float(self.limit)
            out["tol"] = float(self.tol)
            out["method"] = self.method
        return out


def _trend(values: Sequence[Any]) -> Optional[str]:
    diffs = [b - a for a, b in zip(values, values[1:])]
    if diffs and all(d < 0 for d in diffs):
        return "strictly decreasing"
    if diffs and all(d > 0 for d in diffs):
        return "strictly increasing"
    if all(d == 0 for d in diffs):
        return "constant"
    return None


def classify_tail(values: Sequence[Tuple[int, Any, str]], window: int, tol: float,
                  upper: Any = config.CAP) -> ConvergenceReport:
    """Classify the last ``window`` values.

    - stable: tail spread within tol; the limit is the last value
    - extrapolated: monotone tail with shrinking steps; Aitken's delta-squared on the last
      three values, clamped to [0, upper], with tol the largest tail distance to it
    - oscillating: steps alternate in sign without shrinking
    - undetermined otherwise
    """
    if window < 2:
        raise InputError("the tail window needs at least two values")
    series = [v for _, v, _ in values]
    tail = series[-window:]
    trend = _trend(series)
    if len(tail) < 2:
        return ConvergenceReport(list(values), "undetermined", window, trend=trend)
    spread = max(tail) - min(tail)
    if spread <= tol:
        return ConvergenceReport(list(values), "convergent", window, tail[-1], tol, "stable", trend)
    diffs = [b - a for a, b in zip(tail, tail[1:])]
    monotone = all(d > 0 for d in diffs) or all(d < 0 for d in diffs)
    shrinking = all(abs(b) < 0.9 * abs(a) for a, b in zip(diffs, diffs[1:]))
    if monotone and shrinking and len(tail) >= 3:
        x0, x1, x2 = (float(v) for v in tail[-3:])
        denominator = (x2 - x1) - (x1 - x0)
        limit = x2 - (x2 - x1) ** 2 / denominator if denominator else x2
        limit = min(max(limit, 0.0), float(upper))
        reach = max(abs(float(v) - limit) for v in tail)
        logger.debug("extrapolated limit %.6g from tail %s", limit, [float(v) for v in tail])
        return ConvergenceReport(list(values), "convergent", window, limit, reach, "extrapolated", trend)
    alternating = all(a * b < 0 for a, b in zip(diffs, diffs[1:]))
    if alternating and not shrinking:
        return ConvergenceReport(list(values), "oscillating", window, trend=trend)
    return ConvergenceReport(list(values), "undetermined", window, trend=trend)


def ultra_eval(seq: StructureSequence, f: Formula, window: int = config.ULTRA_WINDOW,
               tol: float = config.TOL, settings: config.Settings = config.DEFAULTS) -> ConvergenceReport:
    """Evaluate a sentence on every member and classify the tail."""
    if free_vars(f):
        raise InputError("ultra_eval takes sentences; the formula has free variables")
    text = print_formula(f)
    reference = None
    values: List[Tuple[int, Any, str]] = []
    for n in seq.indices:
        if seq.uses_closed_form(text, n):
            values.append((n, seq.closed_forms[text](n), "closed-form"))
            logger.debug("%s index %d: closed form", seq.label, n)
            continue
        M = seq.member(n)
        if reference is None:
            reference = M.signature
        elif M.signature != reference:
            raise SignatureMismatchError(f"member {n} of {seq.label} has a different signature")
        bounds = evaluate(M, f, tol=tol, settings=settings)
        values.append((n, bounds.value, "exact" if bounds.is_exact else "bounds"))
    return classify_tail(values, window, tol, f.cap)


def point_distance(seq: StructureSequence, p: PointSequence, q: PointSequence,
                   window: int = config.ULTRA_WINDOW, tol: float = config.TOL) -> ConvergenceReport:
    """Coordinate distances d(p_n, q_n) with tail classification."""
    if p.sort != q.sort:
        raise SortMismatchError(f"{p.label} lives in {p.sort}, {q.label} in {q.sort}")
    values = []
    upper = Fraction(0)
    for n in seq.indices:
        M = seq.member(n)
        values.append((n, M.dist(p.sort, p.at(n), q.at(n)), "exact"))
        upper = max(upper, M.signature.sort(p.sort).diameter)
    return classify_tail(values, window, tol, upper)


@dataclass
class QuotientReport:
    classes: List[List[str]]
    flagged: List[str]
    pairs: Dict[Tuple[str, str], ConvergenceReport]

    def to_json(self) -> Dict[str, Any]:
        return {
            "classes": self.classes,
            "flagged": self.flagged,
            "pairs": [{"p": a, "q": b, **r.to_json()} for (a, b), r in self.pairs.items()],
        }


def quotient_classes(seq: StructureSequence, points: Sequence[PointSequence],
                     window: int = config.ULTRA_WINDOW, tol: float = config.TOL) -> QuotientReport:
    """Partition representatives by limit distance within tol.

    Pairs whose tails do not converge are flagged and never merged; classes whose
    members are not pairwise within 3*tol are flagged as non-transitive.
    """
    labels = [p.label for p in points]
    if len(set(labels)) != len(labels):
        raise InputError("point sequences need distinct labels")
    parent = list(range(len(points)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs: Dict[Tuple[str, str], ConvergenceReport] = {}
    flagged: List[str] = []
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            report = point_distance(seq, points[i], points[j], window, tol)
            pairs[(labels[i], labels[j])] = report
            if not report.convergent:
                flagged.append(f"{labels[i]} ~ {labels[j]}: {report.classification} tail")
            elif report.limit <= tol:
                parent[find(i)] = find(j)
    groups: Dict[int, List[int]] = {}
    for i in range(len(points)):
        groups.setdefault(find(i), []).append(i)
    classes = [[labels[i] for i in members] for members in groups.values()]
    for members in groups.values():
        for a in members:
            for b in members:
                if a < b:
                    r = pairs[(labels[a], labels[b])]
                    if not r.convergent or r.limit > 3 * tol:
                        flagged.append(f"class of {labels[a]} is not transitive at {labels[b]}")
    return QuotientReport(classes, flagged, pairs)


# ====== Standard sequences ======

def gn_commutator_defect(n: int) -> Fraction:
    """sup over x, y of d(xy, yx) in G_n: commutators live on the 3-point block."""
    return Fraction(3, 2 ** n + 3)


def gn_sequence(first: int = 1, last: int = config.GN_CAP,
                exact_limit: int = config.EXACT_LIMIT) -> StructureSequence:
    return StructureSequence(tuple(range(first, last + 1)), gn_family, f"G_n, n={first}..{last}",
                             {COMMUTATIVITY: gn_commutator_defect}, exact_limit)


def sym_sequence(first: int = 2, last: int = 6) -> StructureSequence:
    return StructureSequence(tuple(range(first, last + 1)), sym_hamming, f"Sym(n), n={first}..{last}")


def sequence_from_spec(spec: Mapping[str, Any], exact_limit: int = config.EXACT_LIMIT) -> StructureSequence:
    """Read ``{"family": "gn"|"sym", "range": [a, b]}`` or ``{"members": [...]}``."""
    if "family" in spec:
        try:
            first, last = (int(v) for v in spec["range"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError("sequence family needs a range [first, last]") from exc
        if spec["family"] == "gn":
            return gn_sequence(first, last, exact_limit)
        if spec["family"] == "sym":
            return sym_sequence(first, last)
        raise InputError(f"unknown sequence family {spec['family']!r}")
    members = spec.get("members")
    if not members:
        raise InputError("sequence spec needs a family or a members list")
    return StructureSequence(tuple(range(1, len(members) + 1)),
                             lambda n: structure_from_spec(members[n - 1]),
                             spec.get("label", "sequence"))
