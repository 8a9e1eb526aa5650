"""
Axiom schemes and defect measurement

A scheme is a named, parameterized family of sentences; ``compile_scheme`` turns it
into formulas over a given signature and ``scheme_defect`` evaluates them. The
schemes cover metric groups (with the P/Q neighbourhood predicates and the
boundedness families), isometric actions on Hilbert-ball towers and on trees, and
tree-likeness of finite metric spaces.

Also here: ``wrap_action`` building the sorted action structures, and
``pq_from_open_set`` producing P and Q from an identity neighbourhood.
"""

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import config
from .errors import ActionError, FormulaSyntaxError, InputError, SchemeError, StructureError
from .evaluator import DefectEntry, DefectReport, ValueBounds, evaluate
from .mstruct import (
    FiniteCarrier, MetricStructure, Point, from_complex, group_view, hilbert_tower, structure_from_spec,
    tree_space,
)
from .sigform import (
    HILBERT_BALL, ONE, TREE_BALL, ZERO, Formula, Modulus, Signature, Sort, SortMapNu, SymbolDecl,
    format_rational, parse_formula, print_formula, to_rational,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Axiom", "DefectReport", "Scheme", "SCHEMES", "compile_scheme", "scheme_defect",
    "four_point_defect", "midpoint_defect", "tree_defect", "tree_report",
    "wrap_action", "action_from_spec", "rotation_action", "pq_from_open_set",
]

SCHEMES = ("group", "k0", "theta", "bounded", "roelcke-bounded", "roelcke-precompact", "obk",
           "aiv", "nfh", "nfr", "tree", "hilbert-onb")

WORD_SCHEMES = ("theta", "bounded", "roelcke-bounded", "roelcke-precompact", "obk")


@dataclass(frozen=True)
class Scheme:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SCHEMES:
            raise SchemeError(f"unknown scheme {self.name!r}; known: {', '.join(SCHEMES)}")

    @classmethod
    def from_json(cls, data: Any) -> "Scheme":
        """Read ``"name"``, ``{"name": ..., "params": {...}}`` or ``{"name": ..., <params>}``."""
        if isinstance(data, str):
            return cls(data)
        if not isinstance(data, Mapping):
            raise InputError(f"scheme must be a name or an object, got {data!r}")
        name = data.get("name") or data.get("scheme")
        if not name:
            raise InputError("scheme object needs a name")
        params = data.get("params")
        if params is None:
            params = {k: v for k, v in data.items() if k not in ("name", "scheme")}
        return cls(name, dict(params))

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def __str__(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}({', '.join(f'{k}={v}' for k, v in sorted(self.params.items()))})"


@dataclass(frozen=True)
class Axiom:
    name: str
    formula: Formula
    diagnostic: bool = False


# ====== Compilation helpers ======

def _as_list(value: Any) -> List[Any]:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _q(value: Any) -> str:
    return format_rational(to_rational(value))


def _nest(op: str, parts: Sequence[str]) -> str:
    """Right-nested op(p1, op(p2, ...)); a single part is returned as is."""
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = f"{op}({p}, {out})"
    return out


def _product_term(word: Sequence[str]) -> str:
    out = word[0]
    for w in word[1:]:
        out = f"mul({out},{w})"
    return out


def _need(sig: Signature, scheme: str, kind: str, name: str, arity: Tuple[str, ...]) -> None:
    if not any(d.arity == arity for d in sig.overloads(kind, name)):
        raise SchemeError(f"scheme {scheme} needs the {kind} {name}{arity} in the signature")


def _parse(scheme: str, text: str, sig: Signature, cap: Any) -> Formula:
    try:
        return parse_formula(text, sig, cap)
    except FormulaSyntaxError as exc:
        raise SchemeError(f"scheme {scheme} does not fit the signature: {exc}") from exc


def _group_sort(scheme: Scheme, sig: Signature) -> str:
    sort = scheme.get("sort") or ("G" if "G" in sig.sorts else sig.default_sort)
    if sort is None or sort not in sig.sorts:
        raise SchemeError(f"scheme {scheme.name} needs a group sort")
    for name, arity in (("mul", (sort, sort)), ("inv", (sort,)), ("1", ())):
        _need(sig, scheme.name, "function", name, arity)
    return sort


def _group_axioms(sort: str, sig: Signature, cap: Any) -> List[Axiom]:
    texts = [
        ("associativity", f"sup x:{sort}. sup y:{sort}. sup z:{sort}. "
                          "d(mul(mul(x,y),z), mul(x,mul(y,z)))"),
        ("right unit", f"sup x:{sort}. d(mul(x,1), x)"),
        ("right inverse", f"sup x:{sort}. d(mul(x,inv(x)), 1)"),
    ]
    return [Axiom(name, _parse("group", text, sig, cap)) for name, text in texts]


def _compile_group(scheme: Scheme, sig: Signature) -> List[Axiom]:
    sort = _group_sort(scheme, sig)
    return _group_axioms(sort, sig, max(ONE, sig.sort(sort).diameter))


def _compile_k0(scheme: Scheme, sig: Signature) -> List[Axiom]:
    sort = _group_sort(scheme, sig)
    for p in ("P", "Q"):
        _need(sig, "k0", "predicate", p, (sort,))
    cap = max(ONE, sig.sort(sort).diameter)
    g = sort
    texts = [
        ("Q vanishes at 1", "Q(1)"),
        ("P and Q disjoint", f"sup x:{g}. min(P(x), Q(x))"),
        ("P symmetric", f"sup x:{g}. absdiff(P(x), P(inv(x)))"),
        ("P reaches 1/2", f"inf x:{g}. absdiff(P(x), 1/2)"),
        ("Q symmetric", f"sup x:{g}. absdiff(Q(x), Q(inv(x)))"),
        ("Q reaches 1/2", f"inf x:{g}. absdiff(Q(x), 1/2)"),
    ]
    for eps in _as_list(scheme.get("eps", [Fraction(1, 4), Fraction(1, 2)])):
        e = _q(eps)
        texts.append((f"P-witness near Q eps={e}",
                      f"sup x:{g}. min(sub({e}, Q(x)), inf y:{g}. "
                      f"max(sub(sub(d(x,y), {e}), {e}), sub({e}, P(y))))"))
    axioms = _group_axioms(sort, sig, cap)
    axioms += [Axiom(name, _parse("k0", text, sig, cap)) for name, text in texts]
    return axioms


def _words(kind: str, m: int, k: int) -> Tuple[List[List[str]], int]:
    """Words over x1..xm and y-variables; returns (words, number of y-variables)."""
    xs = [f"x{i}" for i in range(1, m + 1)]
    ys = [f"y{j}" for j in range(1, 2 * k + 1)]
    if kind == "bounded":
        return [[x] + ys[:k] for x in xs], k
    if kind == "roelcke-bounded":
        return [ys[:k] + [x] + ys[k:2 * k] for x in xs], 2 * k
    if kind == "roelcke-precompact":
        return [["y1", x, "y2"] for x in xs], 2
    words = []
    for choice in itertools.product(xs, repeat=k):
        word: List[str] = []
        for j, x in enumerate(choice):
            word += [x, ys[j]]
        words.append(word)
    return words, k


def _compile_words(scheme: Scheme, sig: Signature) -> List[Axiom]:
    sort = _group_sort(scheme, sig)
    _need(sig, scheme.name, "predicate", "P", (sort,))
    cap = max(ONE, sig.sort(sort).diameter)
    axioms = []
    for m in _as_list(scheme.get("m", 1)):
        for k in _as_list(scheme.get("k", 1)):
            m, k = int(m), int(k)
            if m < 1 or k < 1:
                raise SchemeError(f"scheme {scheme.name} needs m >= 1 and k >= 1")
            words, ny = _words(scheme.name, m, k)
            for eps in _as_list(scheme.get("eps", Fraction(1, 2))):
                e = _q(eps)
                distances = [f"d(x, {_product_term(w)})" for w in words]
                body = _nest("min", [f"P(y{j})" for j in range(1, ny + 1)]
                             + [f"sub({e}, {_nest('min', distances)})"])
                prefix = "".join(f"sup x{i}:{sort}. " for i in range(1, m + 1)) + f"inf x:{sort}. "
                prefix += "".join(f"sup y{j}:{sort}. " for j in range(1, ny + 1))
                name = f"{scheme.name} m={m} k={k} eps={e}"
                axioms.append(Axiom(name, _parse(scheme.name, prefix + body, sig, cap)))
    return axioms


def _act_target(sig: Signature, scheme: str, n: int, m: int) -> int:
    for decl in sig.overloads("function", "act"):
        if decl.arity == (f"K{n}", f"B{m}"):
            return sig.sort(decl.result).ball_index
    raise SchemeError(f"scheme {scheme} needs act on (K{n}, B{m})")


def _lift(var: str, m: int, nu: int) -> str:
    return var if nu == m else f"I[{m},{nu}]({var})"


def _compile_aiv(scheme: Scheme, sig: Signature) -> List[Axiom]:
    axioms = []
    for m in _as_list(scheme.get("m", 1)):
        for n in _as_list(scheme.get("n", 1)):
            m, n = int(m), int(n)
            _need(sig, "aiv", "predicate", "norm", (f"B{m}",))
            nu = _act_target(sig, "aiv", n, m)
            target = _lift("v", m, nu)
            literal = (f"inf v:B{m}. sup x:K{n}. "
                       f"max(sub(d(act(x,v), {target}), 1/{n}), absdiff(1, norm(v)))")
            axioms.append(Axiom(f"aiv m={m} n={n}", _parse("aiv", literal, sig, max(ONE, 2 * nu, m))))
            displacement = (f"inf v:B{m}. add(sub(sup x:K{n}. d(act(x,v), {target}), 1/{n}), "
                            "add(absdiff(norm(v), 1), absdiff(norm(v), 1)))")
            axioms.append(Axiom(f"displacement m={m} n={n}",
                                _parse("aiv", displacement, sig, 2 * nu + 2 * m), diagnostic=True))
    return axioms


def _compile_no_fixed(scheme: Scheme, sig: Signature) -> List[Axiom]:
    eta = scheme.get("eta")
    if not eta:
        raise SchemeError(f"scheme {scheme.name} needs an eta table {{k: [l, s]}}")
    kind = HILBERT_BALL if scheme.name == "nfh" else TREE_BALL
    axioms = []
    for key, value in sorted(eta.items(), key=lambda kv: int(kv[0])):
        k = int(key)
        try:
            l, s = (int(v) for v in value)
        except (TypeError, ValueError) as exc:
            raise SchemeError(f"eta[{k}] must be a pair [l, s]") from exc
        if f"B{k}" not in sig.sorts or sig.sort(f"B{k}").kind != kind:
            raise SchemeError(f"scheme {scheme.name} needs a {kind} sort B{k}")
        nu = _act_target(sig, scheme.name, l, k)
        text = f"sup v:B{k}. inf x:K{l}. sub(1/{s}, d(act(x,v), {_lift('v', k, nu)}))"
        axioms.append(Axiom(f"{scheme.name} k={k} l={l} s={s}", _parse(scheme.name, text, sig, 1)))
    return axioms


FOUR_POINT = ("sup x:{T}. sup y:{T}. sup z:{T}. sup w:{T}. "
              "sub(add(d(x,y), d(z,w)), max(add(d(x,z), d(y,w)), add(d(x,w), d(y,z))))")
MIDPOINT = ("sup x:{T}. sup y:{T}. inf z:{T}. "
            "max(absdiff(d(x,z), half(d(x,y))), absdiff(d(y,z), half(d(x,y))))")


def _compile_tree(scheme: Scheme, sig: Signature) -> List[Axiom]:
    sort = scheme.get("sort") or ("T" if "T" in sig.sorts else sig.default_sort)
    if sort is None or sort not in sig.sorts:
        raise SchemeError("scheme tree needs a sort to test")
    diameter = sig.sort(sort).diameter
    return [
        Axiom("four-point", _parse("tree", FOUR_POINT.format(T=sort), sig, 2 * diameter)),
        Axiom("midpoint", _parse("tree", MIDPOINT.format(T=sort), sig, diameter)),
    ]


def _compile_onb(scheme: Scheme, sig: Signature) -> List[Axiom]:
    if "B1" not in sig.sorts or sig.sort("B1").kind != HILBERT_BALL:
        raise SchemeError("scheme hilbert-onb needs the Hilbert ball B1")
    complex_field = bool(sig.overloads("predicate", "ip_re"))
    products = ("ip_re", "ip_im") if complex_field else ("ip",)
    for p in products + ("norm",):
        _need(sig, "hilbert-onb", "predicate", p, ("B1", "B1") if p != "norm" else ("B1",))
    axioms = []
    for k in _as_list(scheme.get("k", 2)):
        k = int(k)
        vs = [f"v{i}" for i in range(1, k + 1)]
        parts = [f"absdiff(norm({v}), 1)" for v in vs]
        parts += [f"absdiff({p}({a},{b}), 0)" for a, b in itertools.combinations(vs, 2) for p in products]
        text = "".join(f"inf {v}:B1. " for v in vs) + _nest("max", parts)
        axioms.append(Axiom(f"orthonormal k={k}", _parse("hilbert-onb", text, sig, 1)))
    return axioms


_COMPILERS: Dict[str, Callable[[Scheme, Signature], List[Axiom]]] = {
    "group": _compile_group,
    "k0": _compile_k0,
    "aiv": _compile_aiv,
    "nfh": _compile_no_fixed,
    "nfr": _compile_no_fixed,
    "tree": _compile_tree,
    "hilbert-onb": _compile_onb,
    **{name: _compile_words for name in WORD_SCHEMES},
}


def compile_scheme(scheme: Union[Scheme, str], sig: Signature) -> List[Axiom]:
    """Formulas of ``scheme`` over ``sig``, in a fixed order.

    Every axiom is a sentence whose value is 0 exactly when the structure satisfies it.
    Missing symbols raise SchemeError.
    """
    if isinstance(scheme, str):
        scheme = Scheme(scheme)
    axioms = _COMPILERS[scheme.name](scheme, sig)
    logger.debug("scheme %s compiled to %d sentences", scheme, len(axioms))
    return axioms


def scheme_defect(M: MetricStructure, scheme: Union[Scheme, str], tol: float = config.TOL,
                  settings: config.Settings = config.DEFAULTS) -> DefectReport:
    """Evaluate every axiom of ``scheme`` in ``M``; the worst defect is the largest upper bound."""
    if isinstance(scheme, str):
        scheme = Scheme(scheme)
    report = DefectReport(f"{scheme} on {M.label}", notes=list(M.meta.get("notes", [])))
    for axiom in compile_scheme(scheme, M.signature):
        bounds = evaluate(M, axiom.formula, tol=tol, settings=settings)
        entry = DefectEntry(axiom.name, bounds, bounds.witness, print_formula(axiom.formula))
        (report.diagnostics if axiom.diagnostic else report.entries).append(entry)
    logger.info("%s: worst defect %.6g", report.subject, float(report.worst))
    return report


# ====== Tree-likeness ======

def _finite(M: MetricStructure, sort: str) -> FiniteCarrier:
    carrier = M.carrier(sort)
    if not isinstance(carrier, FiniteCarrier):
        raise InputError(f"sort {sort} is not finite")
    return carrier


def four_point_defect(M: MetricStructure, sort: str = "T") -> ValueBounds:
    """Largest excess of one pairing sum over the larger of the other two, over 4-point sets."""
    X = _finite(M, sort)
    worst, witness = ZERO, None
    for quad in itertools.combinations(X.points, 4):
        x, y, z, w = quad
        sums = sorted([X.dist(x, y) + X.dist(z, w), X.dist(x, z) + X.dist(y, w),
                       X.dist(x, w) + X.dist(y, z)])
        gap = sums[2] - sums[1]
        if gap > worst:
            worst, witness = gap, {v: X.label(p) for v, p in zip("xyzw", quad)}
    return ValueBounds.exact(worst, witness)


def midpoint_defect(M: MetricStructure, sort: str = "T") -> ValueBounds:
    """sup over x, y of the distance from the nearest point z to being a midpoint of x and y."""
    X = _finite(M, sort)
    worst, witness = ZERO, None
    for x, y in itertools.combinations(X.points, 2):
        half = X.dist(x, y) / 2
        best = min(max(abs(X.dist(x, z) - half), abs(X.dist(y, z) - half)) for z in X.points)
        if best > worst:
            worst, witness = best, {"x": X.label(x), "y": X.label(y)}
    return ValueBounds.exact(worst, witness)


def tree_report(M: MetricStructure, sort: str = "T", resolution: Any = None) -> DefectReport:
    """Four-point defect together with the midpoint defect beyond half the resolution.

    ``resolution`` defaults to ``M.meta["resolution"]`` (the longest edge segment of a
    tree_space), else 0.
    """
    if resolution is None:
        resolution = M.meta.get("resolution", ZERO)
    resolution = to_rational(resolution)
    four = four_point_defect(M, sort)
    mid = midpoint_defect(M, sort)
    excess = max(mid.lo - resolution / 2, ZERO)
    report = DefectReport(f"tree defect of {M.label}")
    report.entries.append(DefectEntry("four-point", four, four.witness))
    report.entries.append(DefectEntry(
        "midpoint", ValueBounds.exact(excess), mid.witness if excess > 0 else None,
        detail={"raw_midpoint_defect": float(mid.lo), "resolution": float(resolution)},
    ))
    return report


def tree_defect(M: MetricStructure, sort: str = "T", resolution: Any = None) -> ValueBounds:
    """max(four-point defect, midpoint defect minus half the resolution), exact."""
    report = tree_report(M, sort, resolution)
    return ValueBounds.exact(report.worst, report.witness)


# ====== Actions ======

@dataclass(frozen=True, eq=False)
class AffineMap:
    """v -> linear @ v + shift on real coordinates."""

    linear: np.ndarray
    shift: np.ndarray

    @classmethod
    def identity(cls, real_dim: int) -> "AffineMap":
        return cls(np.eye(real_dim), np.zeros(real_dim))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.linear @ v + self.shift

    def compose(self, inner: "AffineMap") -> "AffineMap":
        return AffineMap(self.linear @ inner.linear, self.linear @ inner.shift + self.shift)

    def close_to(self, other: "AffineMap", tol: float) -> bool:
        return bool(np.allclose(self.linear, other.linear, atol=tol)
                    and np.allclose(self.shift, other.shift, atol=tol))


@dataclass(frozen=True)
class VertexMap:
    table: Mapping[Hashable, Hashable]

    def __call__(self, v: Hashable) -> Hashable:
        return self.table[v]

    def compose(self, inner: "VertexMap") -> "VertexMap":
        return VertexMap({v: self.table[w] for v, w in inner.table.items()})

    def close_to(self, other: "VertexMap", tol: float) -> bool:
        return dict(self.table) == dict(other.table)


def _real_matrix(matrix: Any, field: str, dim: int) -> np.ndarray:
    U = np.asarray(matrix, dtype=complex if field == "complex" else float)
    if U.shape != (dim, dim):
        raise ActionError(f"generator matrix must be {dim}x{dim}, got shape {U.shape}")
    if field == "real":
        return U
    return np.block([[U.real, -U.imag], [U.imag, U.real]])


def _affine_image(image: Any, space: MetricStructure, tol: float) -> AffineMap:
    field_, dim = space.meta["field"], space.meta["dim"]
    if isinstance(image, AffineMap):
        result = image
    else:
        matrix, shift = image if isinstance(image, tuple) else (image, None)
        linear = _real_matrix(matrix, field_, dim)
        real_dim = linear.shape[0]
        if shift is None:
            b = np.zeros(real_dim)
        elif field_ == "complex":
            b = from_complex(np.asarray(shift, dtype=complex))
        else:
            b = np.asarray(shift, dtype=float)
        result = AffineMap(linear, b)
    if not np.allclose(result.linear.T @ result.linear, np.eye(result.linear.shape[0]), atol=tol):
        raise ActionError("generator image is not unitary")
    return result


def _vertex_image(image: Mapping[Hashable, Hashable], space: MetricStructure) -> VertexMap:
    T = _finite(space, "T")
    table = dict(image)
    if set(table) != set(T.points) or set(table.values()) != set(T.points):
        raise ActionError("vertex map must be a bijection of the tree's vertices")
    for a, b in itertools.combinations(T.points, 2):
        if T.dist(table[a], table[b]) != T.dist(a, b):
            raise ActionError("vertex map is not an isometry", (T.label(a), T.label(b)))
    return VertexMap(table)


def _extend_homomorphism(group, generator_maps: Mapping[Point, Any], identity: Any, tol: float) -> Dict[Point, Any]:
    images = {group.unit: identity}
    queue = deque([group.unit])
    while queue:
        g = queue.popleft()
        for s, rho_s in generator_maps.items():
            h = group.mul(g, s)
            composed = images[g].compose(rho_s)
            if h in images:
                if not images[h].close_to(composed, tol):
                    raise ActionError("generator images do not define a homomorphism",
                                      {"element": group.label(g), "generator": group.label(s)})
            else:
                images[h] = composed
                queue.append(h)
    missing = [g for g in group.elements if g not in images]
    if missing:
        raise ActionError("generators do not generate the group", group.label(missing[0]))
    return images


def _word_balls(group, generators: Sequence[Point], n_max: int) -> Dict[int, List[Point]]:
    steps = set(generators) | {group.inv(s) for s in generators} | {group.unit}
    current = {group.unit}
    balls = {}
    for n in range(1, n_max + 1):
        current = current | {group.mul(g, s) for g in current for s in steps}
        balls[n] = [g for g in group.elements if g in current]
    return balls


def _lipschitz(values: Sequence[Any]) -> Modulus:
    bound = max(values, default=ZERO)
    if bound <= 1:
        return Modulus.identity()
    if isinstance(bound, float):
        bound = Fraction(math.ceil(bound * 64), 64)
    return Modulus.scale(bound)


def wrap_action(G: MetricStructure, generators: Mapping[Point, Any], space: MetricStructure,
                nu: SortMapNu, n_max: int = 1, m_max: int = 1, sort: str = "G",
                tol: float = config.TOL) -> MetricStructure:
    """Sorted structure of a finite group acting by isometries on a Hilbert tower or a tree.

    ``generators`` maps group elements to their images: a unitary matrix with an optional
    shift for Hilbert towers, a vertex map for trees. The images are extended to a
    homomorphism; K1..K{n_max} are the word balls in the generators, and
    ``act: K_n x B_m -> B_nu(n,m)`` is declared for n <= n_max, m <= m_max. An action that
    carries K_n B_m outside B_nu(n,m) raises ActionError with the offending element.
    """
    group = group_view(G, sort)
    family = space.meta.get("family")
    if family == "hilbert":
        gen_maps = {g: _affine_image(img, space, tol) for g, img in generators.items()}
        identity = AffineMap.identity(2 * space.meta["dim"] if space.meta["field"] == "complex"
                                      else space.meta["dim"])
    elif family == "tree":
        gen_maps = {g: _vertex_image(img, space) for g, img in generators.items()}
        identity = VertexMap({v: v for v in space.carrier("T").points})
    else:
        raise InputError("actions need a Hilbert tower or a tree as the space")
    unknown = [g for g in gen_maps if g not in set(group.elements)]
    if unknown:
        raise ActionError(f"generator {unknown[0]!r} is not a group element")
    images = _extend_homomorphism(group, gen_maps, identity, tol)
    k_sets = _word_balls(group, list(gen_maps), n_max)
    G_carrier = _finite(G, sort)
    diameter = G.signature.sort(sort).diameter

    sorts = [G.signature.sort(sort)] + [Sort(f"K{n}", diameter) for n in k_sets]
    carriers: Dict[str, Any] = {sort: G_carrier}
    carriers.update({f"K{n}": G_carrier.subset(pts) for n, pts in k_sets.items()})
    sorts += list(space.signature.sorts.values())
    carriers.update(space.carriers)
    functions = list(G.signature.functions()) + list(space.signature.functions())
    impls = {**G.functions, **space.functions}
    basepoint = space.function("0", ())()

    for n, m in itertools.product(range(1, n_max + 1), range(1, m_max + 1)):
        target = nu(n, m)
        if f"B{target}" not in space.signature.sorts:
            raise ActionError(f"nu({n},{m}) = {target} but the space has no ball B{target}")
        ball = space.carrier(f"B{m}")
        reach, far, spread = ZERO, group.unit, []
        for g in k_sets[n]:
            rho = images[g]
            if family == "hilbert":
                r = m + float(np.linalg.norm(rho.shift))
            else:
                r = max(space.dist("T", basepoint, rho(v)) for v in ball.points)
            if r > reach:
                reach, far = r, g
            for h in k_sets[n]:
                if h == g:
                    continue
                if family == "hilbert":
                    moved = (m * float(np.linalg.norm(rho.linear - images[h].linear, 2))
                             + float(np.linalg.norm(rho.shift - images[h].shift)))
                else:
                    moved = max(space.dist("T", rho(v), images[h](v)) for v in ball.points)
                spread.append(moved / G_carrier.dist(g, h))
        if reach > target + tol:
            raise ActionError(f"K{n} carries B{m} outside B{target}",
                              {"element": group.label(far), "n": n, "m": m,
                               "reach": float(reach), "nu": target})
        decl = SymbolDecl("act", (f"K{n}", f"B{m}"), result=f"B{target}",
                          moduli=(_lipschitz(spread), Modulus.identity()))
        functions.append(decl)
        impls[decl.key] = lambda g, v, images=images: images[g](v)

    sig = Signature(sorts, functions, list(G.signature.predicates()) + list(space.signature.predicates()),
                    families=space.signature.families.values(), default_sort=None, name="action")
    logger.info("action of %s on %s: |K_n| = %s", G.label, space.label,
                {n: len(pts) for n, pts in k_sets.items()})
    return MetricStructure(
        sig, carriers, impls, {**G.predicates, **space.predicates},
        family_impls=space.family_impls, label=f"{G.label} acting on {space.label}",
        meta={**space.meta, "family": "action", "space": family, "nu": nu, "group_sort": sort,
              "k_sets": {n: [group.label(g) for g in pts] for n, pts in k_sets.items()},
              "images": images},
    )


def _find_element(carrier: FiniteCarrier, ref: Any) -> Point:
    for p in carrier.points:
        if p == ref or carrier.label(p) == str(ref):
            return p
    raise InputError(f"no group element labelled {ref!r}")


def _json_matrix(rows: Any) -> Any:
    """Entries are numbers or [re, im] pairs."""
    return [[complex(*v) if isinstance(v, (list, tuple)) else v for v in row] for row in rows]


def action_from_spec(spec: Mapping[str, Any]) -> MetricStructure:
    """Read an ``{"kind": "action", ...}`` structure-file object."""
    G = structure_from_spec(spec["group"])
    sort = spec.get("group_sort", "G")
    n_max, m_max = int(spec.get("k_max", 1)), int(spec.get("m_max", 1))
    nu = SortMapNu.from_json(spec.get("nu", {"shift": 0}), n_max, m_max)
    balls = max([m_max] + [v for _, v in nu.table])
    space_spec = spec["space"]
    if space_spec.get("kind") == "hilbert":
        space = hilbert_tower(space_spec.get("field", "real"), int(space_spec["dim"]), balls)
    elif space_spec.get("kind") == "tree":
        space = tree_space(space_spec["edges"], space_spec.get("basepoint", 0), balls=balls)
    else:
        raise InputError("action space must be of kind hilbert or tree")
    group_carrier = _finite(G, sort)
    generators: Dict[Point, Any] = {}
    for entry in spec["generators"]:
        g = _find_element(group_carrier, entry["element"])
        if "map" in entry:
            T = space.carrier("T")
            vertex = {str(v): v for v in T.points}
            try:
                generators[g] = {vertex[str(a)]: vertex[str(b)] for a, b in entry["map"].items()}
            except KeyError as exc:
                raise InputError(f"vertex map mentions unknown vertex {exc}") from exc
        else:
            generators[g] = (_json_matrix(entry["matrix"]), entry.get("shift"))
    return wrap_action(G, generators, space, nu, n_max, m_max, sort)


def rotation_action(order: int, n_max: int = 1, m_max: int = 1) -> MetricStructure:
    """Z(order) acting on R^2 by rotation through 2*pi/order (discrete group metric)."""
    from .mstruct import cyclic_table, discrete_wrap

    if order < 1:
        raise InputError("rotation_action needs order >= 1")
    theta = 2 * math.pi / order
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    G = discrete_wrap(cyclic_table(order))
    nu = SortMapNu.from_rule(lambda n, m: m, n_max, m_max)
    space = hilbert_tower("real", 2, m_max)
    generator = 1 if order > 1 else 0
    return wrap_action(G, {generator: R}, space, nu, n_max, m_max)


# ====== P and Q from an identity neighbourhood ======

def pq_from_open_set(M: MetricStructure, V: Sequence[Point], sort: Optional[str] = None) -> MetricStructure:
    """Expand a metric group by Q(x) = d(x, V) and P(x) = d(x, G \\ V), each rescaled so its sup is 1/2.

    V must contain the unit. The rescaling factors are recorded in ``meta["notes"]``.
    """
    group = group_view(M, sort)
    members = set(V)
    if group.unit not in members:
        raise StructureError("the open set must contain the unit", group.label(group.unit))
    outside_set = [g for g in group.elements if g not in members]
    inside = [g for g in group.elements if g in members]

    def distance_to(points: Sequence[Point]) -> Dict[Point, Fraction]:
        if not points:
            return {g: ZERO for g in group.elements}
        return {g: min(to_rational(group.dist(g, p)) for p in points) for g in group.elements}

    raw_q, raw_p = distance_to(inside), distance_to(outside_set)
    notes = list(M.meta.get("notes", []))
    scaled = {}
    for name, raw in (("P", raw_p), ("Q", raw_q)):
        top = max(raw.values())
        factor = Fraction(1, 2) / top if top > 0 else ONE
        scaled[name] = {g: v * factor for g, v in raw.items()}
        notes.append(f"{name} scaled by {format_rational(factor)}")
        logger.info("%s rescaled by %s", name, format_rational(factor))
    decls = [(SymbolDecl(name, (group.sort,), range=(ZERO, ONE)), table.__getitem__)
             for name, table in scaled.items()]
    return M.expand(decls, label=f"{M.label} with P, Q", notes=notes)
