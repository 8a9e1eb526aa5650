"""
Regressions across modules

- Commutativity of G_n along the sequence, exactly and in the limit
- Discrete structures only ever answer 0 or 1
- Identity moduli hold pointwise on Sym(4)
- Tree axioms, rotation displacement and the rho-ball subgroup
- Negative controls: corrupted tables, bad shifts, broken chains
"""

import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from contilog.axioms import rotation_action, scheme_defect, tree_defect, wrap_action
from contilog.catgrp import automorphisms, chain_validate, definability_defect, g_rho, quotient_orbits
from contilog.errors import ActionError
from contilog.evaluator import evaluate
from contilog.mstruct import (
    cyclic_table, discrete_wrap, gn_family, group_view, hilbert_tower, metric_space, perm_mul, random_tree,
    tree_space,
)
from contilog.sigform import SortMapNu, derived_modulus, occurrences, parse_formula, random_formula
from contilog.typespace import default_family, eps_net, type_table
from contilog.ultra import COMMUTATIVITY, gn_sequence, ultra_eval
from tests.conftest import describe, it

DISPLACEMENT = ("inf v:B1. add(sup x:K1. d(act(x,v), v), "
                "add(absdiff(norm(v), 1), absdiff(norm(v), 1)))")


@describe("Commutativity along G_n")
class TestCommutativity:
    @it("should match 3/(2^n+3) by brute force for n up to 3")
    def test_brute_force(self):
        for n in (1, 2, 3):
            M = gn_family(n)
            value = evaluate(M, parse_formula(COMMUTATIVITY, M.signature)).value
            assert value == Fraction(3, 2 ** n + 3), f"G_{n}"

    @it("should decrease strictly and converge to zero")
    def test_limit(self, gn1):
        report = ultra_eval(gn_sequence(1, 6), parse_formula(COMMUTATIVITY, gn1.signature), window=3)
        values = report.value_list()
        assert values == [Fraction(3, 2 ** n + 3) for n in range(1, 7)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert report.convergent and report.limit == pytest.approx(0.0)


@describe("Crisp collapse")
class TestCrisp:
    @pytest.mark.slow
    @it("should give only 0 or 1 on discrete groups")
    def test_values(self, z6_discrete, s3_discrete):
        rng = random.Random(11)
        for _ in range(200):
            f = random_formula(z6_discrete.signature, 3, [], rng, half=False, constants=(0, 1))
            for M in (z6_discrete, s3_discrete):
                assert evaluate(M, f).value in (0, 1), f"{f} on {M.label}"

    @it("should separate Z6 from S3 by commutativity")
    def test_separation(self, z6_discrete, s3_discrete):
        f = parse_formula(COMMUTATIVITY, z6_discrete.signature)
        assert (evaluate(z6_discrete, f).value, evaluate(s3_discrete, f).value) == (0, 1)


@describe("Modulus soundness")
class TestModulusSoundness:
    @pytest.mark.slow
    @it("should keep formulas with identity moduli 1-Lipschitz on Sym(4)")
    def test_lipschitz(self, sym4):
        rng = random.Random(5)
        G = group_view(sym4)
        checked = 0
        while checked < 10:
            f = random_formula(sym4.signature, 3, [("x", "G")], rng)
            if occurrences(f, "x") != 1 or not derived_modulus(f, sym4.signature, "x").is_identity():
                continue
            values = {g: evaluate(sym4, f, {"x": g}).value for g in G.elements}
            for a, b in itertools.combinations(G.elements, 2):
                assert abs(values[a] - values[b]) <= G.dist(a, b), f"{f} at {G.label(a)}, {G.label(b)}"
            checked += 1


@describe("Trees")
class TestTrees:
    @it("should satisfy the tree axioms exactly on random trees")
    def test_random(self):
        rng = random.Random(17)
        for _ in range(20):
            size = rng.randint(2, 15)
            assert tree_defect(tree_space(random_tree(rng, size), 0)).hi == 0, f"tree on {size} vertices"

    @it("should measure the unit 4-cycle at hyperbolicity defect 2")
    def test_cycle(self):
        M = metric_space("abcd", [[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]])
        assert tree_defect(M, "X").value == 2


@describe("Rotation displacement")
class TestRotation:
    @pytest.mark.slow
    @it("should bracket 2 sin(pi/m) for m = 3, 4, 8")
    def test_displacement(self):
        for m in (3, 4, 8):
            M = rotation_action(m)
            v = evaluate(M, parse_formula(DISPLACEMENT, M.signature, cap=4))
            closed = 2 * math.sin(math.pi / m)
            assert v.hi_certified and float(v.hi) <= closed + 1e-3, f"upper bound for m={m}"
            assert float(v.lo) >= closed - 1e-2, f"sampled value for m={m}"


@describe("The rho-ball subgroup of G_1")
class TestGRho:
    @it("should stabilize at exponent 3 with G_rho = G")
    def test_whole_group(self, gn1):
        result = g_rho(gn1, 0.45)
        assert result.exponent <= 3 and len(result.subgroup) == len(group_view(gn1).elements)
        assert definability_defect(gn1, 0.45, result.exponent, 0).hi == 0

    @it("should be trivial at 0.3")
    def test_trivial(self, gn1):
        assert len(g_rho(gn1, 0.3).cosets) == 12

    @it("should count pair orbits as Burnside does")
    def test_orbits(self, gn1):
        aut = automorphisms(gn1)
        fixed = [sum(1 for i, j in enumerate(alpha) if i == j) for alpha in aut.members]
        burnside = Fraction(sum(f ** 2 for f in fixed), len(aut))
        assert burnside.denominator == 1
        assert quotient_orbits(gn1, 0.3, 2, aut) == burnside


@describe("Type spaces")
class TestTypes:
    @it("should give a symmetric realized distance obeying the triangle inequality")
    def test_metric(self, gn1):
        table = type_table(gn1, default_family(gn1.signature, 1, "G", 1))
        k = len(table.types)
        d = [[table.class_distance(i, j)[0] for j in range(k)] for i in range(k)]
        rng = random.Random(2)
        for _ in range(100):
            i, j, m = (rng.randrange(k) for _ in range(3))
            assert d[i][j] == d[j][i]
            assert d[i][m] <= d[i][j] + d[j][m] + 1e-12

    @it("should bound formula disagreement by the realized distance on Sym(3) and G_1")
    def test_lipschitz(self, sym3, gn1):
        for M in (sym3, gn1):
            family = default_family(M.signature, 1, "G", 1)
            table = type_table(M, family)
            linear = [i for i, f in enumerate(family.formulas) if occurrences(f, "x1") == 1]
            types = table.types
            for i, j in itertools.combinations(range(len(types)), 2):
                gap = max((abs(types[i].values[q] - types[j].values[q]) for q in linear), default=0)
                assert gap <= table.class_distance(i, j)[0], f"{M.label}: types {i}, {j}"

    @it("should certify nets against a brute-force cover")
    def test_net(self, gn1):
        report = eps_net(gn1, 1, Fraction(1, 2))
        table = report.table
        for i in range(len(table.types)):
            nearest = min(table.class_distance(i, j)[0] for j in report.net)
            assert nearest <= Fraction(1, 2), f"type {i} is uncovered"
        assert report.validate()


@describe("Negative controls")
class TestNegative:
    @it("should flag a corrupted multiplication table with a witness")
    def test_corrupted(self):
        table = cyclic_table(5)
        table[2][3] = 1
        report = scheme_defect(discrete_wrap(table, check=False), "group")
        assert report.worst > 0 and report.witness is not None

    @it("should reject a shift that leaves the target ball")
    def test_nu(self):
        nu = SortMapNu.from_rule(lambda n, m: m, 1, 1)
        with pytest.raises(ActionError) as info:
            wrap_action(discrete_wrap(cyclic_table(2)), {1: (-np.eye(2), np.array([0.0, 0.75]))},
                        hilbert_tower("real", 2, 1), nu)
        assert info.value.witness["element"] == "1"

    @it("should flag a chain level that is not closed under products")
    def test_chain(self, sym3):
        G = group_view(sym3)
        t, s = (1, 0, 2), (0, 2, 1)
        levels = [[G.unit, t, s], [G.unit, t, s, perm_mul(t, s)], list(G.elements)]
        report = chain_validate(sym3, levels)
        assert not report.valid and report.violations
