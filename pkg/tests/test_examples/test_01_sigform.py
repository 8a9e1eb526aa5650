"""
Signatures and formulas

- Moduli: construction, evaluation, minimum and composition
- Parsing: sort inference, printing, error classes and positions
- Syntactic measurements: free variables, derived moduli, cap discipline
- Sort maps for action towers
"""

import random
from fractions import Fraction

import pytest

from contilog.errors import (
    ArityError, ConstantRangeError, FormulaSyntaxError, InputError, SortMismatchError, UnknownSymbolError,
)
from contilog.mstruct import tree_space
from contilog.sigform import (
    Modulus, SortMapNu, check_caps, depth, derived_modulus, free_vars, group_signature, occurrences,
    parse_formula, print_formula, random_formula, signature_from_json, to_rational,
)
from contilog.ultra import COMMUTATIVITY
from tests.conftest import describe, it


@describe("Moduli")
class TestModulus:
    @it("should read floats through their decimal form")
    def test_to_rational(self):
        assert to_rational(0.45) == Fraction(9, 20), "0.45 should read as 9/20"
        assert to_rational("3/7") == Fraction(3, 7), "p/q strings are exact"
        with pytest.raises(InputError):
            to_rational(True)

    @it("should evaluate scale and breakpoint moduli exactly")
    def test_evaluate(self):
        assert Modulus.scale(2)(Fraction(1)) == Fraction(1, 2), "scale(2) halves its input"
        gamma = Modulus.from_breakpoints([(1, 1), (2, 1)], 0)
        assert gamma(Fraction(1, 2)) == Fraction(1, 2), "linear from the origin before the first kink"
        assert gamma(Fraction(3)) == 1, "flat tail after the last kink"

    @it("should keep moduli in canonical form")
    def test_canonical(self):
        assert Modulus.identity().minimum(Modulus.scale(2)) == Modulus.scale(2), "min(id, z/2) is z/2"
        assert Modulus.identity().compose(Modulus.scale(2)) == Modulus.scale(2), "id after z/2 is z/2"
        assert Modulus.from_json(Modulus.scale(3).to_json()) == Modulus.scale(3), "JSON form reads back"
        assert Modulus.identity().to_json() == "id"

    @it("should reject decreasing breakpoints")
    def test_bad_breakpoints(self):
        with pytest.raises(InputError):
            Modulus.from_breakpoints([(1, 2), (2, 1)])


@describe("Formula parsing")
class TestParsing:
    @it("should parse and print the commutativity sentence canonically")
    def test_print(self, sym3):
        f = parse_formula("sup x:G. sup y:G. d(mul(x,y),mul(y,x))", sym3.signature)
        assert print_formula(f) == COMMUTATIVITY, "printing normalizes spacing"
        assert depth(f) == 3, "two quantifiers over one atom"
        assert free_vars(f) == [], "a sentence has no free variables"

    @it("should infer free variable sorts from the argument positions")
    def test_free_sorts(self, sym3):
        f = parse_formula("d(x, 1)", sym3.signature)
        assert free_vars(f) == [("x", "G")], "x takes the sort of the constant 1"
        assert occurrences(f, "x") == 1

    @it("should report the position of a syntax error")
    def test_position(self, sym3):
        with pytest.raises(FormulaSyntaxError) as info:
            parse_formula("sup x:G d(x,x)", sym3.signature)
        assert info.value.position == 8, "the error points at the missing '.'"
        assert info.value.caret().splitlines()[1] == " " * 8 + "^"

    @it("should raise the specific error classes")
    def test_error_classes(self, sym3):
        sig = sym3.signature
        with pytest.raises(ArityError):
            parse_formula("max(d(x,1))", sig)
        with pytest.raises(ArityError):
            parse_formula("d(x)", sig)
        with pytest.raises(UnknownSymbolError):
            parse_formula("sup x:G. foo(x)", sig)
        with pytest.raises(UnknownSymbolError):
            parse_formula("sup x:H. d(x,x)", sig)
        with pytest.raises(ConstantRangeError):
            parse_formula("add(d(x,1), 2)", sig)
        assert parse_formula("add(d(x,1), 2)", sig, cap=2).cap == 2, "the constant fits a larger cap"

    @it("should reject terms of the wrong sort")
    def test_sort_mismatch(self):
        tree = tree_space([(0, 1, 1)], 0)
        with pytest.raises(SortMismatchError):
            parse_formula("sup x:T. sup v:B1. d(x, v)", tree.signature)

    @it("should reparse printed random formulas to the same tree")
    def test_reparse(self, sym3):
        rng = random.Random(7)
        for _ in range(1000):
            f = random_formula(sym3.signature, rng.randint(1, 6), [("x", "G")], rng)
            assert depth(f) <= 6
            again = parse_formula(print_formula(f), sym3.signature, f.cap, {"x": "G"})
            assert again == f, f"reparse changed {print_formula(f)}"


@describe("Syntactic measurements")
class TestMeasurements:
    @it("should derive moduli with and without multiplicity")
    def test_derived(self, sym3):
        f = parse_formula("d(mul(x,x), 1)", sym3.signature)
        assert derived_modulus(f, sym3.signature).is_identity(), "each occurrence alone is 1-Lipschitz"
        assert derived_modulus(f, sym3.signature, multiplicity=True) == Modulus.scale(2), \
            "two occurrences halve the admissible distance"

    @it("should flag distances above the cap under not")
    def test_caps(self):
        tree = tree_space([(0, 1, 1), (1, 2, 2)], 0)
        f = parse_formula("sup x:T. sup y:T. not(d(x,y))", tree.signature)
        issues = check_caps(f, tree.signature)
        assert len(issues) == 1 and "under not" in issues[0], "diameter 3 exceeds cap 1 under not"

    @it("should pass cap discipline for metric groups of diameter 1")
    def test_caps_clean(self, sym3):
        f = parse_formula("sup x:G. not(d(x,1))", sym3.signature)
        assert check_caps(f, sym3.signature) == []


@describe("Signatures and sort maps")
class TestSignatures:
    @it("should compare group signatures structurally")
    def test_equality(self, sym3, gn1):
        assert sym3.signature == gn1.signature == group_signature("G", 1)

    @it("should read predicates with moduli from JSON")
    def test_from_json(self):
        sig = signature_from_json({
            "sorts": [{"name": "X", "diameter": 2}],
            "predicates": [{"name": "P", "arity": ["X"], "range": [0, 1], "modulus": {"scale": 2}}],
        })
        decl = sig.decl("predicate", "P", ("X",))
        assert decl.moduli == (Modulus.scale(2),) and decl.range == (0, 1)
        assert sig.default_sort == "X", "a single sort is the default"

    @it("should require nu to increase in each argument")
    def test_nu(self):
        nu = SortMapNu.from_rule(lambda n, m: n + m, 2, 2)
        assert nu(2, 1) == 3 and nu.domain() == [(1, 1), (1, 2), (2, 1), (2, 2)]
        with pytest.raises(InputError):
            SortMapNu((((1, 1), 2), ((1, 2), 1)))
        with pytest.raises(InputError):
            nu(3, 3)
