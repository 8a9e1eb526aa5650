"""
Realized types

- Type tables of G_1 over the depth-1 family
- Realized d-distance: values, triangle inequality and the Lipschitz bound
- Formula pseudometric across structures
- Greedy eps-nets with certificates
"""

import itertools
from fractions import Fraction

import pytest

from contilog import config
from contilog.errors import CapExceededError, InputError
from contilog.mstruct import gn_flip, gn_transposition, group_view
from contilog.sigform import occurrences, parse_formula
from contilog.typespace import default_family, eps_net, formula_pseudometric, tp, type_distance, type_table
from tests.conftest import describe, it


@pytest.fixture(scope="module")
def family(gn1):
    return default_family(gn1.signature, 1, "G", 1)


@pytest.fixture(scope="module")
def table(gn1, family):
    return type_table(gn1, family)


@describe("Type tables")
class TestTypeTable:
    @it("should split G_1 into five depth-1 types")
    def test_classes(self, table):
        assert len(table.types) == 5
        assert [len(c) for c in table.classes] == [1, 4, 2, 3, 2], \
            "unit, involutions at 2/5, 3-cycles, involutions at 4/5, order-6 elements"

    @it("should give the flip and a transposition the same type")
    def test_same_type(self, gn1, family):
        flip = tp(gn1, (gn_flip(1),), family)
        t = tp(gn1, (gn_transposition(1),), family)
        assert flip.agrees(t) and flip.logic_distance(t) == 0

    @it("should locate realized types and their classes")
    def test_find(self, gn1, family, table):
        flip = tp(gn1, (gn_flip(1),), family)
        assert table.find(flip) == table.class_of((gn_flip(1),)) == 1

    @it("should refuse continuous sorts and wrong tuple lengths")
    def test_errors(self, gn1, family, plane_tower):
        with pytest.raises(InputError):
            tp(gn1, (), family)
        with pytest.raises(InputError):
            type_table(plane_tower, default_family(plane_tower.signature, 1, "B1", 1, limit=5))

    @it("should respect the workload cap")
    def test_cap(self, gn1, family):
        with pytest.raises(CapExceededError):
            type_table(gn1, family, settings=config.DEFAULTS.with_overrides(max_points=100))


@describe("Realized d-distance")
class TestTypeDistance:
    @it("should measure the unit's type against the involutions at 2/5")
    def test_value(self, gn1, family, table):
        unit = tp(gn1, (group_view(gn1).unit,), family)
        flip = tp(gn1, (gn_flip(1),), family)
        assert type_distance(gn1, unit, flip, table=table) == Fraction(2, 5)

    @it("should satisfy the triangle inequality")
    def test_triangle(self, table):
        k = len(table.types)
        d = [[table.class_distance(i, j)[0] for j in range(k)] for i in range(k)]
        for i, j, m in itertools.product(range(k), repeat=3):
            assert d[i][m] <= d[i][j] + d[j][m], f"triangle fails at {(i, j, m)}"

    @it("should dominate formula disagreement for single-occurrence formulas")
    def test_lipschitz(self, gn1, family):
        G = group_view(gn1)
        linear = [i for i, f in enumerate(family.formulas) if occurrences(f, "x1") == 1]
        assert linear, "the family has formulas using x1 once"
        types = {g: tp(gn1, (g,), family) for g in G.elements}
        for a, b in itertools.combinations(G.elements, 2):
            gap = max(abs(types[a].values[i] - types[b].values[i]) for i in linear)
            assert gap <= G.dist(a, b), f"{G.label(a)} vs {G.label(b)}"


@describe("Formula pseudometric")
class TestPseudometric:
    @it("should vanish on formulas equal in every structure")
    def test_zero(self, sym3):
        phi = parse_formula("d(x, 1)", sym3.signature)
        psi = parse_formula("d(inv(x), 1)", sym3.signature)
        assert formula_pseudometric([sym3], phi, psi).value == 0

    @it("should take the sup across structures with a witness")
    def test_sup(self, sym3, gn1):
        phi = parse_formula("d(x, 1)", sym3.signature)
        psi = parse_formula("d(mul(x,x), 1)", sym3.signature)
        assert formula_pseudometric([sym3], phi, psi).value == Fraction(2, 3)
        both = formula_pseudometric([sym3, gn1], phi, psi)
        assert both.value == Fraction(4, 5) and both.witness["structure"] == "G_1"


@describe("Nets of types")
class TestNets:
    @it("should cover every type within eps")
    def test_net(self, gn1):
        report = eps_net(gn1, 1, Fraction(1, 2))
        assert report.validate() and report.radius <= Fraction(1, 2)
        assert len(report.certificate) == 5

    @it("should keep every type at eps 0 and one type at eps 1")
    def test_extremes(self, gn1):
        assert len(eps_net(gn1, 1, 0).net) == 5
        assert eps_net(gn1, 1, 1).net == [0]
