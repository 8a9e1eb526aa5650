"""
Automorphisms and group-level constructions on finite metric structures

- ``automorphisms``: all isometries preserving the atomic formulas
- ``approx_oligo``: orbit representatives that are eps-dense in X^n
- ``boundedness_battery``, ``cayley_bound``, ``chain_validate``: covering witnesses
- ``g_rho`` and friends: the subgroup generated by the rho-ball of the unit, the
  definability defect of its distance predicate, orbits on cosets and the
  near-homogeneity defect

On finite carriers every subgroup is compact and clopen, so these functions check
the constructions and the formulas involved, not the non-compact hypotheses.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from . import config
from .errors import CapExceededError, InputError
from .evaluator import ValueBounds, evaluate
from .mstruct import FiniteCarrier, GroupView, MetricStructure, Point, group_view
from .sigform import ONE, SymbolDecl, format_rational, parse_formula, to_rational
from .typespace import FormulaFamily, TypeTable, default_family, type_table

logger = logging.getLogger(__name__)

FINITE_NOTE = "finite carrier: every subgroup is compact and clopen"


# ====== Automorphisms ======

@dataclass
class AutGroup:
    """Automorphisms as index tuples: ``images[i]`` is the index of the image of ``points[i]``."""

    sort: str
    points: Tuple[Point, ...]
    members: List[Tuple[int, ...]]
    generators: List[Tuple[int, ...]] = field(default_factory=list)
    labels: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, alpha: Tuple[int, ...]) -> bool:
        return tuple(alpha) in self._member_set

    def __post_init__(self):
        self._member_set = set(self.members)
        self._index = {p: i for i, p in enumerate(self.points)}

    def apply(self, alpha: Tuple[int, ...], p: Point) -> Point:
        return self.points[alpha[self._index[p]]]

    def apply_tuple(self, alpha: Tuple[int, ...], tuple_: Sequence[Point]) -> Tuple[Point, ...]:
        return tuple(self.apply(alpha, p) for p in tuple_)

    @staticmethod
    def compose(alpha: Tuple[int, ...], beta: Tuple[int, ...]) -> Tuple[int, ...]:
        """alpha after beta."""
        return tuple(alpha[i] for i in beta)

    @staticmethod
    def inverse(alpha: Tuple[int, ...]) -> Tuple[int, ...]:
        out = [0] * len(alpha)
        for i, j in enumerate(alpha):
            out[j] = i
        return tuple(out)

    def orbits(self) -> List[List[Point]]:
        seen: Set[int] = set()
        out = []
        for i in range(len(self.points)):
            if i in seen:
                continue
            orbit = sorted({alpha[i] for alpha in self.members})
            seen.update(orbit)
            out.append([self.points[j] for j in orbit])
        return out

    def to_json(self) -> Dict[str, Any]:
        def show(alpha: Tuple[int, ...]) -> Dict[str, str]:
            return {self.labels[i]: self.labels[j] for i, j in enumerate(alpha) if i != j}
        return {
            "sort": self.sort,
            "order": len(self.members),
            "generators": [show(g) for g in self.generators],
            "orbits": [[self.labels[self._index[p]] for p in orbit] for orbit in self.orbits()],
        }


def _generated(members: Sequence[Tuple[int, ...]], n: int) -> Set[Tuple[int, ...]]:
    identity = tuple(range(n))
    out = {identity}
    frontier = [identity]
    while frontier:
        nxt = []
        for a in frontier:
            for g in members:
                b = AutGroup.compose(g, a)
                if b not in out:
                    out.add(b)
                    nxt.append(b)
        frontier = nxt
    return out


def _greedy_generators(members: Sequence[Tuple[int, ...]], n: int) -> List[Tuple[int, ...]]:
    gens: List[Tuple[int, ...]] = []
    reached = _generated(gens, n)
    for alpha in members:
        if alpha not in reached:
            gens.append(alpha)
            reached = _generated(gens, n)
    return gens


def _group_generators(G: GroupView) -> List[Point]:
    gens: List[Point] = []
    reached = {G.unit}
    for g in G.elements:
        if g in reached:
            continue
        gens.append(g)
        reached = _closure(G, gens)
    return gens


def _closure(G: GroupView, gens: Sequence[Point]) -> Set[Point]:
    out = {G.unit}
    queue = deque([G.unit])
    while queue:
        a = queue.popleft()
        for s in gens:
            b = G.mul(a, s)
            if b not in out:
                out.add(b)
                queue.append(b)
    return out


def _preserves(M: MetricStructure, sort: str, phi: Dict[Point, Point], tol: float) -> bool:
    """phi commutes with every function and preserves every predicate on ``sort``."""
    for decl in M.signature.functions():
        if any(s != sort for s in decl.arity + (decl.result,)):
            continue
        fn = M.function(decl.name, decl.arity)
        for args in itertools.product(phi, repeat=len(decl.arity)):
            if phi[fn(*args)] != fn(*(phi[a] for a in args)):
                return False
    for decl in M.signature.predicates():
        if any(s != sort for s in decl.arity):
            continue
        pred = M.predicate(decl.name, decl.arity)
        for args in itertools.product(phi, repeat=len(decl.arity)):
            if abs(pred(*args) - pred(*(phi[a] for a in args))) > tol:
                return False
    return True


def _is_isometry(X: FiniteCarrier, phi: Dict[Point, Point]) -> bool:
    return all(X.dist(phi[a], phi[b]) == X.dist(a, b) for a, b in itertools.combinations(X.points, 2))


def _group_mode(M: MetricStructure, sort: str) -> Optional[GroupView]:
    try:
        return group_view(M, sort)
    except InputError:
        return None


def _extend(G: GroupView, gens: Sequence[Point], images: Sequence[Point]) -> Optional[Dict[Point, Point]]:
    phi = {G.unit: G.unit}
    queue = deque([G.unit])
    while queue:
        a = queue.popleft()
        for s, t in zip(gens, images):
            b = G.mul(a, s)
            value = G.mul(phi[a], t)
            if b in phi:
                if phi[b] != value:
                    return None
            else:
                phi[b] = value
                queue.append(b)
    if len(set(phi.values())) != len(phi):
        return None
    return phi


def automorphisms(M: MetricStructure, sort: Optional[str] = None, cap: int = config.AUT_CAP,
                  tol: float = config.TOL) -> AutGroup:
    """All automorphisms of the finite sort, in lexicographic order of their index tuples.

    Metric groups are searched by images of a generating set (isometries fix the unit,
    so candidates keep the distance to 1); other structures by point backtracking with
    isometry pruning.
    """
    sort = sort or M.signature.default_sort
    if sort is None:
        raise InputError("name the sort whose automorphisms are wanted")
    X = M.carrier(sort)
    if not isinstance(X, FiniteCarrier):
        raise InputError(f"sort {sort} is not finite")
    if len(X) ** 2 > cap:
        raise CapExceededError("carrier pairs", len(X) ** 2, cap)
    index = {p: i for i, p in enumerate(X.points)}
    found: List[Dict[Point, Point]] = []
    G = _group_mode(M, sort)
    if G is not None:
        gens = _group_generators(G)
        candidates = [[t for t in G.elements if G.dist(t, G.unit) == G.dist(s, G.unit)] for s in gens]
        for images in itertools.product(*candidates):
            phi = _extend(G, gens, images)
            if phi is not None and len(phi) == len(X) and _is_isometry(X, phi) and _preserves(M, sort, phi, tol):
                found.append(phi)
    else:
        points = list(X.points)

        def extend(phi: Dict[Point, Point]) -> None:
            k = len(phi)
            if k == len(points):
                if _preserves(M, sort, phi, tol):
                    found.append(dict(phi))
                return
            p = points[k]
            used = set(phi.values())
            for q in points:
                if q in used:
                    continue
                if all(X.dist(q, phi[r]) == X.dist(p, r) for r in points[:k]):
                    phi[p] = q
                    extend(phi)
                    del phi[p]

        extend({})
    members = sorted(tuple(index[phi[p]] for p in X.points) for phi in found)
    logger.info("%s has %d automorphisms", M.label, len(members))
    return AutGroup(sort, tuple(X.points), members, _greedy_generators(members, len(X)),
                    tuple(X.label(p) for p in X.points))


# ====== Approximate oligomorphicity ======

@dataclass
class OligoReport:
    n: int
    eps: Any
    representatives: List[Tuple[str, ...]]
    certificate: List[Dict[str, Any]]

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "eps": float(self.eps), "size": len(self.representatives),
                "representatives": [list(r) for r in self.representatives],
                "certificate": self.certificate}


def _orbit_distance(aut: AutGroup, X: FiniteCarrier, t: Tuple[Point, ...], u: Tuple[Point, ...]) -> Tuple[Any, int]:
    best, which = None, 0
    for k, alpha in enumerate(aut.members):
        image = aut.apply_tuple(alpha, t)
        dist = max((X.dist(a, b) for a, b in zip(image, u)), default=Fraction(0))
        if best is None or dist < best:
            best, which = dist, k
    return best, which


def approx_oligo(M: MetricStructure, n: int, eps: Any, aut: Optional[AutGroup] = None,
                 sort: Optional[str] = None, tol: float = config.TOL,
                 cap: int = config.AUT_CAP) -> OligoReport:
    """Greedy F with Aut(M)*F eps-dense in X^n.

    Each step adds the tuple whose eps-orbit-neighbourhood covers most uncovered tuples.
    """
    aut = aut or automorphisms(M, sort, tol=tol)
    X = M.carrier(aut.sort)
    tuples = list(itertools.product(X.points, repeat=n))
    if len(tuples) > cap:
        raise CapExceededError(f"{n}-tuples", len(tuples), cap)
    reach = [[_orbit_distance(aut, X, t, u) for u in tuples] for t in tuples]
    uncovered = set(range(len(tuples)))
    chosen: List[int] = []
    while uncovered:
        def gain(i: int) -> int:
            return sum(1 for j in uncovered if reach[i][j][0] <= eps + tol)
        best = max(sorted(uncovered), key=gain)
        chosen.append(best)
        uncovered -= {j for j in uncovered if reach[best][j][0] <= eps + tol}
    labels = [tuple(X.label(p) for p in t) for t in tuples]
    certificate = []
    for j, u in enumerate(tuples):
        i = min(chosen, key=lambda c: reach[c][j][0])
        dist, k = reach[i][j]
        alpha = aut.members[k]
        certificate.append({"tuple": list(labels[j]), "representative": list(labels[i]),
                            "image": [X.label(p) for p in aut.apply_tuple(alpha, tuples[i])],
                            "distance": float(dist)})
    logger.info("approx_oligo n=%d eps=%s: %d representatives", n, eps, len(chosen))
    return OligoReport(n, eps, [labels[i] for i in chosen], certificate)


# ====== Covering witnesses ======

def closed_ball(G: GroupView, radius: Any) -> List[Point]:
    return [g for g in G.elements if G.dist(g, G.unit) <= radius]


def _set_product(G: GroupView, A: Sequence[Point], B: Sequence[Point]) -> Set[Point]:
    return {G.mul(a, b) for a in A for b in B}


def _power(G: GroupView, A: Sequence[Point], k: int) -> Set[Point]:
    out = {G.unit}
    for _ in range(k):
        out = _set_product(G, list(out), A)
    return out


def _cover(G: GroupView, form: str, F: Sequence[Point], V: Sequence[Point], k: int) -> Set[Point]:
    if form == "FV^k":
        return _set_product(G, F, list(_power(G, V, k)))
    if form == "V^kFV^k":
        Vk = list(_power(G, V, k))
        return _set_product(G, list(_set_product(G, Vk, F)), Vk)
    if form == "VFV":
        return _set_product(G, list(_set_product(G, V, F)), V)
    if form == "(FV)^k":
        return _power(G, list(_set_product(G, F, V)), k)
    raise InputError(f"unknown covering form {form!r}")


COVER_FORMS = ("FV^k", "V^kFV^k", "VFV", "(FV)^k")
_FACTORS = {"FV^k": lambda k: k + 1, "V^kFV^k": lambda k: 2 * k + 1, "VFV": lambda k: 3,
            "(FV)^k": lambda k: 2 * k}


@dataclass
class BatteryEntry:
    form: str
    achieved: bool
    F: List[str]
    product_length: int

    def to_json(self) -> Dict[str, Any]:
        return {"form": self.form, "achieved": self.achieved, "size": len(self.F), "F": self.F,
                "product_length": self.product_length}


def boundedness_battery(M: MetricStructure, r: Any, k: int = 1, sort: Optional[str] = None,
                        max_f: Optional[int] = None) -> List[BatteryEntry]:
    """Greedy F for each covering form with V the closed r-ball at 1.

    An entry is not achieved when the cover needs more than ``max_f`` elements.
    """
    G = group_view(M, sort)
    V = closed_ball(G, to_rational(r))
    everything = set(G.elements)
    limit = max_f if max_f is not None else len(G.elements)
    entries = []
    for form in COVER_FORMS:
        F: List[Point] = []
        covered: Set[Point] = set()
        while covered != everything and len(F) < limit:
            best = max((g for g in G.elements if g not in F),
                       key=lambda g: len(_cover(G, form, F + [g], V, k)))
            F.append(best)
            covered = _cover(G, form, F, V, k)
        entries.append(BatteryEntry(form, covered == everything, [G.label(f) for f in F], _FACTORS[form](k)))
    return entries


def cover_gap(M: MetricStructure, V: Sequence[Point], F: Sequence[Point], k: int,
              sort: Optional[str] = None) -> Any:
    """max over g of d(g, (FV)^k)."""
    G = group_view(M, sort)
    cover = _cover(G, "(FV)^k", list(F), list(V), k)
    return max(min(G.dist(g, h) for h in cover) for g in G.elements)


@dataclass
class CayleyReport:
    generates: bool
    n: Optional[int]
    exceeded: bool
    reached: List[str]

    def to_json(self) -> Dict[str, Any]:
        return {"generates": self.generates, "n": self.n, "exceeded": self.exceeded, "reached": self.reached}


def cayley_bound(M: MetricStructure, U: Sequence[Point], cap_n: Optional[int] = None,
                 sort: Optional[str] = None) -> CayleyReport:
    """Least n with (U u U^-1 u {1})^n = G; reports the reached subgroup when U does not generate."""
    G = group_view(M, sort)
    S = set(U) | {G.inv(u) for u in U} | {G.unit}
    everything = set(G.elements)
    current = set(S)
    n = 1
    while current != everything:
        if cap_n is not None and n >= cap_n:
            closure = _closure(G, list(S))
            return CayleyReport(closure == everything, None, True,
                                [G.label(g) for g in G.elements if g in closure])
        grown = _set_product(G, list(current), list(S))
        if grown == current:
            logger.info("subset reaches a proper subgroup of order %d", len(current))
            return CayleyReport(False, None, False, [G.label(g) for g in G.elements if g in current])
        current, n = grown, n + 1
    return CayleyReport(True, n, False, [G.label(g) for g in G.elements])


@dataclass
class ChainReport:
    valid: bool
    covering_level: Optional[int]
    violations: List[Dict[str, Any]]

    def to_json(self) -> Dict[str, Any]:
        return {"valid": self.valid,
                "covering_level": self.covering_level if self.covering_level else "no covering level",
                "violations": self.violations}


def chain_validate(M: MetricStructure, chain: Sequence[Sequence[Point]], sort: Optional[str] = None) -> ChainReport:
    """Check X_n strictly increasing with {1} u X_n^-1 u X_n X_n inside X_{n+1}.

    Levels are numbered from 1; checks stop at the first level equal to G.
    """
    G = group_view(M, sort)
    everything = set(G.elements)
    sets = [set(X) for X in chain]
    violations: List[Dict[str, Any]] = []
    level = next((i + 1 for i, X in enumerate(sets) if X == everything), None)
    last = (level or len(sets)) - 1
    for i in range(last):
        X, Y = sets[i], sets[i + 1]
        n = i + 1
        if not X < Y:
            violations.append({"level": n, "reason": "not strictly increasing"})
        if G.unit not in Y:
            violations.append({"level": n, "reason": "unit missing", "witness": [G.label(G.unit)]})
        for x in sorted(X, key=G.elements.index):
            if G.inv(x) not in Y:
                violations.append({"level": n, "reason": "inverse missing",
                                   "witness": [G.label(x), G.label(G.inv(x))]})
                break
        bad = next(((x, y) for x in G.elements if x in X for y in G.elements if y in X
                    if G.mul(x, y) not in Y), None)
        if bad:
            x, y = bad
            violations.append({"level": n, "reason": "product missing",
                               "witness": [G.label(x), G.label(y), G.label(G.mul(x, y))]})
    return ChainReport(not violations, level, violations)


# ====== The rho-ball subgroup ======

@dataclass
class GRhoResult:
    rho: Any
    ball: List[Point]
    exponent: int
    subgroup: List[Point]
    cosets: List[List[Point]]
    powers: List[Set[Point]] = field(default_factory=list, repr=False)

    def to_json(self, G: GroupView) -> Dict[str, Any]:
        return {
            "note": FINITE_NOTE,
            "rho": float(self.rho),
            "ball": [G.label(g) for g in self.ball],
            "exponent": self.exponent,
            "subgroup": [G.label(g) for g in self.subgroup],
            "cosets": len(self.cosets),
        }


def g_rho(M: MetricStructure, rho: Any, sort: Optional[str] = None) -> GRhoResult:
    """B = closed rho-ball at 1; powers B^n until B^n = B^(n+1); G_rho = B^n with its left cosets."""
    G = group_view(M, sort)
    rho = to_rational(rho)
    ball = closed_ball(G, rho)
    powers = [set(ball)]
    while True:
        nxt = _set_product(G, list(powers[-1]), ball)
        if nxt == powers[-1]:
            break
        powers.append(nxt)
    subgroup = [g for g in G.elements if g in powers[-1]]
    cosets: List[List[Point]] = []
    assigned: Set[Point] = set()
    for g in G.elements:
        if g in assigned:
            continue
        coset = {G.mul(g, h) for h in subgroup}
        assigned |= coset
        cosets.append([x for x in G.elements if x in coset])
    logger.info("G_rho at rho=%s: exponent %d, |G_rho| = %d, %d cosets",
                format_rational(rho), len(powers), len(subgroup), len(cosets))
    return GRhoResult(rho, ball, len(powers), subgroup, cosets, powers)


def check_openness(M: MetricStructure, result: GRhoResult, sort: Optional[str] = None) -> List[Tuple[str, str]]:
    """Pairs (g, h) with g in G_rho, d(g, h) < rho and h outside; empty when G_rho is open."""
    G = group_view(M, sort)
    inside = set(result.subgroup)
    return [(G.label(g), G.label(h)) for g in result.subgroup for h in G.elements
            if G.dist(g, h) < result.rho and h not in inside]


def ball_power_gap(M: MetricStructure, rho: Any, n: int, sort: Optional[str] = None) -> Any:
    """max over g in G_rho of d(g, B^n_rho(1))."""
    G = group_view(M, sort)
    result = g_rho(M, rho, sort)
    power = _power(G, result.ball, n)
    return max(min(G.dist(g, h) for h in power) for g in result.subgroup)


def definability_defect(M: MetricStructure, rho: Any, n: int, eps: Any, sort: Optional[str] = None,
                        tol: float = config.TOL, settings: config.Settings = config.DEFAULTS) -> ValueBounds:
    """sup_x inf_{y1..yn} max(d(y1,1) - rho, ..., |P(x) - d(x, y1...yn)| - eps) with P(x) = d(x, G_rho)."""
    if n < 1:
        raise InputError("definability_defect needs n >= 1")
    G = group_view(M, sort)
    result = g_rho(M, rho, sort)
    to_subgroup = {g: min(G.dist(g, h) for h in result.subgroup) for g in G.elements}
    diameter = M.signature.sort(G.sort).diameter
    P = SymbolDecl("P", (G.sort,), range=(Fraction(0), diameter))
    expanded = M.expand([(P, to_subgroup.__getitem__)], label=f"{M.label} with d(x, G_rho)")
    r, e = format_rational(to_rational(rho)), format_rational(to_rational(eps))
    ys = [f"y{i}" for i in range(1, n + 1)]
    product = ys[0]
    for y in ys[1:]:
        product = f"mul({product},{y})"
    parts = [f"sub(d({y},1), {r})" for y in ys] + [f"sub(absdiff(P(x), d(x, {product})), {e})"]
    body = parts[-1]
    for p in reversed(parts[:-1]):
        body = f"max({p}, {body})"
    text = f"sup x:{G.sort}. " + "".join(f"inf {y}:{G.sort}. " for y in ys) + body
    cap = max(ONE, diameter, to_rational(rho), to_rational(eps))
    return evaluate(expanded, parse_formula(text, expanded.signature, cap), tol=tol, settings=settings)


def quotient_orbits(M: MetricStructure, rho: Any, n: int = 1, aut: Optional[AutGroup] = None,
                    sort: Optional[str] = None) -> int:
    """Number of Aut(M)-orbits on n-tuples of left cosets of G_rho."""
    G = group_view(M, sort)
    aut = aut or automorphisms(M, G.sort)
    result = g_rho(M, rho, sort)
    coset_of: Dict[Point, FrozenSet[Point]] = {}
    for c in result.cosets:
        frozen = frozenset(c)
        for g in c:
            coset_of[g] = frozen
    cosets = [frozenset(c) for c in result.cosets]
    seen: Set[Tuple[FrozenSet[Point], ...]] = set()
    orbits = 0
    for tuple_ in itertools.product(cosets, repeat=n):
        if tuple_ in seen:
            continue
        orbits += 1
        reps = [next(iter(c)) for c in tuple_]
        for alpha in aut.members:
            seen.add(tuple(coset_of[aut.apply(alpha, g)] for g in reps))
    return orbits


@dataclass
class NearHomogReport:
    defect: Any
    eps: Any
    within_eps: bool
    witness: Optional[Dict[str, Any]]

    def to_json(self) -> Dict[str, Any]:
        return {"defect": float(self.defect), "eps": float(self.eps), "within_eps": self.within_eps,
                "witness": self.witness, "label": "realized d-distance"}


def near_homog_defect(M: MetricStructure, n: int, family: Optional[FormulaFamily] = None, eps: Any = 0,
                      aut: Optional[AutGroup] = None, sort: Optional[str] = None, tol: float = config.TOL,
                      table: Optional[TypeTable] = None) -> NearHomogReport:
    """max over tuple pairs (a, c) of min over automorphisms of d(alpha(c), a) minus the realized type distance."""
    aut = aut or automorphisms(M, sort, tol=tol)
    X = M.carrier(aut.sort)
    family = family or default_family(M.signature, n, aut.sort)
    table = table or type_table(M, family, tol)
    cls = {t: i for i, members in enumerate(table.classes) for t in members}
    class_dist: Dict[Tuple[int, int], Any] = {}
    worst, witness = None, None
    tuples = list(itertools.product(X.points, repeat=n))
    for a in tuples:
        for c in tuples:
            moved, _ = _orbit_distance(aut, X, c, a)
            key = (cls[a], cls[c])
            if key not in class_dist:
                class_dist[key] = table.class_distance(*key)[0]
            gap = moved - class_dist[key]
            if worst is None or gap > worst:
                worst = gap
                witness = {"a": [X.label(p) for p in a], "c": [X.label(p) for p in c],
                           "automorphism_distance": float(moved), "type_distance": float(class_dist[key])}
    worst = worst if worst is not None else Fraction(0)
    return NearHomogReport(worst, eps, worst <= to_rational(eps) + tol, witness)


def catreport(M: MetricStructure, rho: Any, eps: Any = 0, n: int = 1, sort: Optional[str] = None,
              tol: float = config.TOL, settings: config.Settings = config.DEFAULTS) -> Dict[str, Any]:
    """g_rho, the definability defect at its exponent, coset orbits and near-homogeneity in one report."""
    G = group_view(M, sort)
    result = g_rho(M, rho, sort)
    aut = automorphisms(M, G.sort, tol=tol)
    defect = definability_defect(M, rho, result.exponent, eps, sort, tol, settings)
    homog = near_homog_defect(M, n, eps=eps, aut=aut, sort=G.sort, tol=tol)
    return {
        "g_rho": result.to_json(G),
        "openness_violations": check_openness(M, result, sort),
        "definability_defect": {"n": result.exponent, "eps": float(to_rational(eps)), **defect.to_json()},
        "quotient_orbits": quotient_orbits(M, rho, 1, aut, sort),
        "near_homogeneity": homog.to_json(),
        "automorphisms": aut.to_json(),
    }
