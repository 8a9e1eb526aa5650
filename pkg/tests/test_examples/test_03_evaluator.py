"""
Formula evaluation

- Exact evaluation over finite sorts with witnesses
- Connective semantics with the cap
- One-sided certification over Hilbert balls
- Modulus checks, enumeration and depth-k equivalence
"""

import random
from fractions import Fraction

import pytest

from contilog import config
from contilog.errors import CapExceededError, InputError, SortMismatchError, UnboundVariableError
from contilog.evaluator import (
    ValueBounds, check_modulus, elem_equiv_depth, enum_formulas, evaluate, random_restriction,
)
from contilog.mstruct import cyclic_table, discrete_wrap
from contilog.sigform import SymbolDecl, depth, parse_formula, print_formula, random_formula
from contilog.ultra import COMMUTATIVITY
from tests.conftest import describe, it


@describe("Finite evaluation")
class TestFinite:
    @it("should measure commutativity exactly")
    def test_commutativity(self, sym3, gn1):
        v = evaluate(sym3, parse_formula(COMMUTATIVITY, sym3.signature))
        assert v.is_exact and v.value == 1, "two transpositions commute up to distance 1 in Sym(3)"
        assert set(v.witness) == {"x", "y"}, "both quantified variables are witnessed"
        assert evaluate(gn1, parse_formula(COMMUTATIVITY, gn1.signature)).value == Fraction(3, 5)

    @it("should collapse to 0 or 1 on discrete groups")
    def test_discrete(self, z6_discrete, s3_discrete):
        f = parse_formula(COMMUTATIVITY, z6_discrete.signature)
        assert evaluate(z6_discrete, f).value == 0, "Z6 is abelian"
        assert evaluate(s3_discrete, f).value == 1, "S3 is not"

    @it("should evaluate free variables under an assignment")
    def test_assignment(self, sym3):
        f = parse_formula("d(x, 1)", sym3.signature)
        assert evaluate(sym3, f, {"x": (1, 0, 2)}).value == Fraction(2, 3)
        with pytest.raises(UnboundVariableError):
            evaluate(sym3, f)
        with pytest.raises(SortMismatchError):
            evaluate(sym3, f, {"x": (5, 5, 5)})

    @it("should apply the connectives with the cap")
    def test_connectives(self, sym3):
        sig = sym3.signature
        cases = {
            "sub(1/2, 3/4)": 0, "add(3/4, 1/2)": 1, "not(1/4)": Fraction(3, 4),
            "half(1)": Fraction(1, 2), "absdiff(1/4, 1)": Fraction(3, 4),
            "min(1/4, 1/2)": Fraction(1, 4), "max(1/4, 1/2)": Fraction(1, 2),
        }
        for text, expected in cases.items():
            assert evaluate(sym3, parse_formula(text, sig)).value == expected, text
        assert evaluate(sym3, parse_formula("add(3/4, 1/2)", sig, cap=2)).value == Fraction(5, 4), \
            "a larger cap leaves the sum unclamped"

    @it("should refuse workloads above the assignment cap")
    def test_workload(self, sym3):
        small = config.DEFAULTS.with_overrides(max_points=10)
        with pytest.raises(CapExceededError):
            evaluate(sym3, parse_formula(COMMUTATIVITY, sym3.signature), settings=small)


@describe("Value bounds")
class TestBounds:
    @it("should reject empty intervals")
    def test_empty(self):
        with pytest.raises(ValueError):
            ValueBounds(1, 0)

    @it("should print exact rationals in JSON")
    def test_json(self):
        out = ValueBounds.exact(Fraction(3, 5)).to_json()
        assert out["exact"] == "3/5" and out["certified"] is True


@describe("Hilbert-ball quantifiers")
class TestContinuous:
    @it("should certify the lower bound of a sup")
    def test_sup(self, plane_tower):
        v = evaluate(plane_tower, parse_formula("sup v:B1. norm(v)", plane_tower.signature))
        assert v.lo_certified and not v.hi_certified, "sup is witnessed from below"
        assert float(v.lo) == pytest.approx(1.0, abs=1e-6)

    @it("should certify the upper bound of an inf")
    def test_inf(self, plane_tower):
        v = evaluate(plane_tower, parse_formula("inf v:B1. norm(v)", plane_tower.signature))
        assert v.hi_certified and not v.lo_certified, "inf is witnessed from above"
        assert float(v.hi) == pytest.approx(0.0, abs=1e-6)

    @it("should reproduce results with the same seed")
    def test_seeded(self, plane_tower):
        f = parse_formula("sup v:B1. sup w:B1. ip(v, w)", plane_tower.signature)
        assert evaluate(plane_tower, f) == evaluate(plane_tower, f), "default seed fixes the search"


@describe("Modulus checks")
class TestModulusChecks:
    @it("should pass for multiplication and the metric of a bi-invariant group")
    def test_pass(self, sym3):
        assert not check_modulus(sym3, "mul").violated()
        assert not check_modulus(sym3, "d").violated()

    @it("should catch a predicate steeper than its declared modulus")
    def test_violation(self, sym3):
        unit = (0, 1, 2)
        decl = SymbolDecl("P", ("G",), range=(0, 1))
        M = sym3.expand([(decl, lambda g: Fraction(1 if g == unit else 0))])
        report = check_modulus(M, "P", eps_grid=[Fraction(3, 4)])
        assert report.violated(), "moving 2/3 changes P by 1"
        assert report.witness is not None

    @it("should sample Hilbert-ball arguments")
    def test_sampled(self, plane_tower):
        report = check_modulus(plane_tower, "ip", arity=("B1", "B1"), samples=50)
        assert report.entries and not report.violated()


@describe("Enumeration and equivalence")
class TestEnumeration:
    @it("should enumerate deterministically without duplicates")
    def test_enum(self, sym3):
        first = [print_formula(f) for f in enum_formulas(sym3.signature, 2, [("x", "G")], limit=300)]
        again = [print_formula(f) for f in enum_formulas(sym3.signature, 2, [("x", "G")], limit=300)]
        assert first == again and len(set(first)) == len(first)
        assert len(first) <= 300

    @it("should stay within the requested depth")
    def test_depth(self, sym3):
        assert all(depth(f) <= 2 for f in enum_formulas(sym3.signature, 2, limit=200))
        with pytest.raises(InputError):
            list(enum_formulas(sym3.signature, 5))

    @it("should find Sym(3) equivalent to itself")
    def test_self(self, sym3):
        report = elem_equiv_depth(sym3, sym3, 2)
        assert report.equivalent and report.substructure and report.sentences > 0

    @it("should separate Sym(3) from its discrete copy at depth 2")
    def test_separate(self, sym3, s3_discrete):
        report = elem_equiv_depth(sym3, s3_discrete, 2)
        assert not report.equivalent, "sup z. d(z^3, 1) is 2/3 against 1"
        assert report.max_discrepancy == Fraction(1, 3)

    @it("should refuse a structure whose carrier is not inside the other")
    def test_carrier_mismatch(self, z6_discrete):
        z7 = discrete_wrap(cyclic_table(7))
        with pytest.raises(InputError):
            elem_equiv_depth(z6_discrete, z7, 1)
        report = elem_equiv_depth(z6_discrete, z7, 1, require_substructure=False)
        assert not report.substructure


@describe("Quantifier laws")
class TestQuantifierLaws:
    @it("should satisfy inf = C - sup not on random formulas")
    def test_duality(self, sym3, gn1):
        rng = random.Random(13)
        for M in (sym3, gn1):
            for _ in range(100):
                body = print_formula(random_formula(M.signature, 3, [("x", "G")], rng))
                inf = evaluate(M, parse_formula(f"inf x:G. {body}", M.signature)).value
                sup_not = evaluate(M, parse_formula(f"sup x:G. not({body})", M.signature)).value
                assert inf == 1 - sup_not, f"{body} on {M.label}"

    @it("should never raise a sup by shrinking its domain")
    def test_monotone(self, sym3, gn1):
        rng = random.Random(21)
        for M in (sym3, gn1):
            for _ in range(50):
                body = print_formula(random_formula(M.signature, 3, [("x", "G")], rng, quantifiers=False))
                f = parse_formula(f"sup x:G. {body}", M.signature)
                subset = random_restriction(M, "G", rng)
                restricted = M.restrict({"G": subset}, check=False)
                assert evaluate(restricted, f).value <= evaluate(M, f).value, f"{body} on {len(subset)} points"
