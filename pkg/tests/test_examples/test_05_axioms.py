"""
Axiom schemes

- Group, K0 and word schemes compiled over a signature and measured as defects
- Tree-likeness: four-point and midpoint defects
- Actions on Hilbert towers and trees, with the sort map checked
- P and Q from an identity neighbourhood
"""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from contilog.axioms import (
    Scheme, compile_scheme, four_point_defect, pq_from_open_set, rotation_action, scheme_defect, tree_defect,
    tree_report, wrap_action,
)
from contilog.errors import ActionError, SchemeError, StructureError
from contilog.evaluator import evaluate
from contilog.mstruct import cyclic_table, discrete_wrap, hilbert_tower, metric_space, random_tree, tree_space
from contilog.sigform import SortMapNu, parse_formula, print_formula
from tests.conftest import describe, it

DISPLACEMENT = ("inf v:B1. add(sup x:K1. d(act(x,v), v), "
                "add(absdiff(norm(v), 1), absdiff(norm(v), 1)))")


def _swap_group():
    return discrete_wrap(cyclic_table(2))


@describe("Group schemes")
class TestGroupSchemes:
    @it("should hold exactly in Sym(3)")
    def test_group(self, sym3):
        report = scheme_defect(sym3, "group")
        assert report.worst == 0 and not report.violated()
        assert [e.name for e in report.entries] == ["associativity", "right unit", "right inverse"]

    @it("should detect a corrupted Cayley table with a witness")
    def test_corrupted(self):
        table = cyclic_table(4)
        table[1][1] = 3
        report = scheme_defect(discrete_wrap(table, check=False), "group")
        assert report.entry("associativity").bounds.hi == 1, "the discrete metric makes failures cost 1"
        assert report.witness is not None

    @it("should read schemes from JSON and reject unknown names")
    def test_from_json(self):
        scheme = Scheme.from_json({"name": "bounded", "m": 2})
        assert scheme.get("m") == 2 and str(scheme) == "bounded(m=2)"
        with pytest.raises(SchemeError):
            Scheme("amenable")

    @it("should require P and Q for the K0 scheme")
    def test_k0_needs_symbols(self, sym3):
        with pytest.raises(SchemeError):
            compile_scheme("k0", sym3.signature)

    @it("should compile one sentence per parameter combination")
    def test_words(self, sym3):
        M = pq_from_open_set(sym3, [(0, 1, 2)])
        axioms = compile_scheme(Scheme("bounded", {"m": [1, 2], "k": 1, "eps": "1/2"}), M.signature)
        assert [a.name for a in axioms] == ["bounded m=1 k=1 eps=1/2", "bounded m=2 k=1 eps=1/2"]
        text = print_formula(axioms[0].formula)
        assert text.startswith("sup x1:G. inf x:G. sup y1:G.")
        assert len(compile_scheme(Scheme("obk", {"m": 2, "k": 2}), M.signature)) == 4, "two letters, length two"

    @it("should evaluate the K0 scheme on an expanded group")
    def test_k0(self, sym3):
        M = pq_from_open_set(sym3, [(0, 1, 2)])
        report = scheme_defect(M, Scheme("k0", {"eps": "1/2"}))
        assert report.entry("Q vanishes at 1").bounds.hi == 0
        assert report.entry("P and Q disjoint").bounds.hi == 0


@describe("P and Q from an open set")
class TestPQ:
    @it("should rescale both predicates to a supremum of 1/2")
    def test_rescale(self, sym3):
        M = pq_from_open_set(sym3, [(0, 1, 2)])
        P, Q = M.predicate("P", ("G",)), M.predicate("Q", ("G",))
        assert P((0, 1, 2)) == Fraction(1, 2) and Q((0, 1, 2)) == 0
        assert Q((1, 2, 0)) == Fraction(1, 2) and Q((1, 0, 2)) == Fraction(1, 3)
        assert M.meta["notes"] == ["P scaled by 3/4", "Q scaled by 1/2"]

    @it("should require the unit in the open set")
    def test_unit(self, sym3):
        with pytest.raises(StructureError):
            pq_from_open_set(sym3, [(1, 0, 2)])


@describe("Tree-likeness")
class TestTrees:
    @it("should give zero defect on random trees")
    def test_random_trees(self):
        rng = random.Random(3)
        for size in (2, 5, 9, 15):
            T = tree_space(random_tree(rng, size), 0)
            assert tree_defect(T).hi == 0, f"tree on {size} vertices"

    @it("should measure the unit 4-cycle at defect 2")
    def test_square(self):
        M = metric_space("abcd", [[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]])
        assert four_point_defect(M, "X").value == 2
        assert tree_defect(M, "X").value == 2
        assert tree_report(M, "X").entry("midpoint").bounds.hi == Fraction(1, 2)

    @it("should agree with the compiled tree scheme on the four-point condition")
    def test_scheme(self):
        T = tree_space([(0, 1, 1), (1, 2, 2), (1, 3, 1)], 0)
        assert scheme_defect(T, "tree").entry("four-point").bounds.hi == 0


@describe("Actions")
class TestActions:
    @it("should realize rotation displacement 2 sin(pi/m)")
    def test_rotation(self):
        M = rotation_action(6)
        v = evaluate(M, parse_formula(DISPLACEMENT, M.signature, cap=4))
        assert v.hi_certified
        assert float(v.hi) == pytest.approx(2 * math.sin(math.pi / 6), abs=1e-6)

    @it("should satisfy almost invariant vectors for small rotations")
    def test_aiv(self):
        report = scheme_defect(rotation_action(12), Scheme("aiv", {"m": 1, "n": 1}))
        assert float(report.worst) == pytest.approx(0.0, abs=1e-6)
        assert report.diagnostics and report.diagnostics[0].name == "displacement m=1 n=1"

    @it("should separate the literal clause from unit-vector displacement for a quarter turn")
    def test_aiv_quarter_turn(self):
        report = scheme_defect(rotation_action(4), Scheme("aiv", {"m": 1, "n": 1}))
        assert float(report.worst) == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-3), \
            "shrinking v to norm 2(sqrt 2 - 1) balances both terms"
        displacement = report.diagnostics[0].bounds.hi
        assert float(displacement) == pytest.approx(math.sqrt(2) - 1, abs=1e-3), "unit vectors move by sqrt 2"

    @it("should reject a shift that leaves the target ball")
    def test_nu_violation(self):
        nu = SortMapNu.from_rule(lambda n, m: m, 1, 1)
        with pytest.raises(ActionError) as info:
            wrap_action(_swap_group(), {1: (-np.eye(2), np.array([0.5, 0.0]))},
                        hilbert_tower("real", 2, 1), nu)
        assert info.value.witness["element"] == "1"
        assert info.value.witness["reach"] == pytest.approx(1.5)

    @it("should reject images that are not a homomorphism or not unitary")
    def test_bad_images(self):
        nu = SortMapNu.from_rule(lambda n, m: m, 1, 1)
        quarter = np.array([[0.0, -1.0], [1.0, 0.0]])
        with pytest.raises(ActionError):
            wrap_action(_swap_group(), {1: quarter}, hilbert_tower("real", 2, 1), nu)
        with pytest.raises(ActionError):
            wrap_action(_swap_group(), {1: 2 * np.eye(2)}, hilbert_tower("real", 2, 1), nu)

    @it("should find the fixed vertex of a reflection of a path")
    def test_tree_action(self):
        path = tree_space([(0, 1, 1), (1, 2, 1)], 1)
        nu = SortMapNu.from_rule(lambda n, m: m, 1, 1)
        M = wrap_action(_swap_group(), {1: {0: 2, 1: 1, 2: 0}}, path, nu)
        report = scheme_defect(M, Scheme("nfr", {"eta": {"1": [1, 1]}}))
        assert report.worst == 1, "the middle vertex is fixed"

    @it("should find unit vectors but no orthonormal triple in the plane")
    def test_onb(self, plane_tower):
        single = scheme_defect(plane_tower, Scheme("hilbert-onb", {"k": 1}))
        assert float(single.worst) == pytest.approx(0.0, abs=1e-9)
        triple = scheme_defect(plane_tower, Scheme("hilbert-onb", {"k": 3}))
        assert float(triple.worst) > 0.25, "a diagonally dominant 3x3 Gram matrix cannot have rank 2"
