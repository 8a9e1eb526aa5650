"""
Metric structures

- Permutation groups with the Hamming metric and the G_n family
- Discrete wrappers and Cayley tables
- Hilbert towers and their parameterized symbols
- Trees, bare metric spaces and structure files
"""

import json
from fractions import Fraction

import pytest

from contilog.errors import CapExceededError, InputError, StructureError
from contilog.mstruct import (
    FiniteCarrier, cyclic_table, discrete_wrap, gn_flip, gn_transposition, group_view, load_structure,
    metric_space, perm_inv, perm_mul, sym_hamming, tree_space, validate_group, validate_metric,
)
from contilog.sigform import Modulus, SymbolDecl
from tests.conftest import describe, it


@describe("Permutation groups")
class TestPermutationGroups:
    @it("should build Sym(n) with the normalized Hamming metric")
    def test_sym(self, sym3):
        G = group_view(sym3)
        assert len(G.elements) == 6, "Sym(3) has six elements"
        assert G.dist((1, 0, 2), G.unit) == Fraction(2, 3), "a transposition moves two of three points"
        validate_metric(sym3, "G")
        validate_group(sym3)

    @it("should build G_1 inside Sym(5)")
    def test_gn(self, gn1):
        G = group_view(gn1)
        assert len(G.elements) == 12, "Z(2) x S3 has twelve elements"
        assert G.label(gn_flip(1)) == "(12)" and G.label(gn_transposition(1)) == "(34)"
        assert G.dist(gn_flip(1), G.unit) == Fraction(2, 5)
        validate_group(gn1)

    @it("should compose permutations right to left")
    def test_perm_mul(self):
        p, q = (1, 0, 2), (0, 2, 1)
        assert perm_mul(p, q) == (1, 2, 0), "p after q"
        assert perm_mul(p, perm_inv(p)) == (0, 1, 2)

    @it("should refuse degrees above the cap")
    def test_cap(self):
        with pytest.raises(CapExceededError):
            sym_hamming(9)


@describe("Discrete wrappers")
class TestDiscrete:
    @it("should replace the metric by the discrete one")
    def test_wrap(self, s3_discrete, z6_discrete):
        G = group_view(s3_discrete)
        assert {G.dist(g, G.unit) for g in G.elements} == {0, 1}
        assert len(group_view(z6_discrete).elements) == 6

    @it("should reject a non-associative Cayley table with a witness")
    def test_bad_table(self):
        table = cyclic_table(4)
        table[1][1] = 3
        with pytest.raises(StructureError) as info:
            discrete_wrap(table)
        assert info.value.witness is not None, "the offending triple is reported"

    @it("should accept a corrupted table when checks are off")
    def test_unchecked(self):
        table = cyclic_table(4)
        table[1][1] = 3
        M = discrete_wrap(table, check=False)
        assert group_view(M).mul(1, 1) == 3


@describe("Hilbert towers")
class TestHilbert:
    @it("should resolve inclusions and scalar maps by ball index")
    def test_families(self, plane_tower):
        sig = plane_tower.signature
        assert sig.decl("function", "I[1,2]", ("B1",)).result == "B2"
        half = sig.decl("function", "lam[1/2]", ("B1",))
        assert half.result == "B1" and half.moduli == (Modulus.scale(Fraction(1, 2)),)
        assert sig.decl("function", "vadd", ("B1", "B1")).result == "B2"

    @it("should interpret the inner product and norm")
    def test_predicates(self, plane_tower):
        ip = plane_tower.predicate("ip", ("B1", "B1"))
        norm = plane_tower.predicate("norm", ("B1",))
        assert ip([1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.5)
        assert norm([0.6, 0.8]) == pytest.approx(1.0)

    @it("should reject an unknown field")
    def test_bad_field(self):
        from contilog.mstruct import hilbert_tower
        with pytest.raises(InputError):
            hilbert_tower("quaternion", 2)


@describe("Trees and metric spaces")
class TestTrees:
    @it("should compute the path metric and the ball sorts")
    def test_tree(self):
        T = tree_space([(0, 1, 1), (1, 2, Fraction(1, 2)), (0, 3, 2)], 0)
        assert T.dist("T", 2, 3) == Fraction(7, 2)
        assert sorted(T.carrier("B1").points) == [0, 1]
        assert "B2" in T.signature.sorts, "radius 2 needs two ball sorts"

    @it("should subdivide edges and record the resolution")
    def test_subdivide(self):
        T = tree_space([(0, 1, 1)], 0, step=Fraction(1, 2))
        assert len(T.carrier("T")) == 3 and T.meta["resolution"] == Fraction(1, 2)

    @it("should reject cycles with the cycle as witness")
    def test_cycle(self):
        with pytest.raises(StructureError) as info:
            tree_space([(0, 1, 1), (1, 2, 1), (2, 0, 1)], 0)
        assert info.value.witness, "the cycle's edges are reported"

    @it("should validate the triangle inequality of bare metric spaces")
    def test_metric_space(self):
        with pytest.raises(StructureError):
            metric_space("abc", [[0, 1, 3], [1, 0, 1], [3, 1, 0]])
        M = metric_space("abc", [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
        assert M.signature.sort("X").diameter == 2

    @it("should restrict to closed subsets only")
    def test_restrict(self, sym3):
        A3 = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
        assert len(sym3.restrict({"G": A3}).carrier("G")) == 3
        with pytest.raises(StructureError):
            sym3.restrict({"G": [(0, 1, 2), (1, 2, 0)]})

    @it("should add predicates by expansion")
    def test_expand(self, sym3):
        decl = SymbolDecl("P", ("G",), range=(0, 1))
        M = sym3.expand([(decl, lambda g: Fraction(0))], label="with P")
        assert M.predicate("P", ("G",))((0, 1, 2)) == 0 and M.label == "with P"
        assert isinstance(M.carrier("G"), FiniteCarrier)


@describe("Structure files")
class TestFiles:
    @it("should load generator shorthands from JSON files")
    def test_load(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"kind": "gn", "n": 1}))
        assert len(load_structure(path).carrier("G")) == 12

    @it("should load explicit structures with tables")
    def test_explicit(self):
        spec = {
            "signature": {"sorts": [{"name": "X", "diameter": 1}],
                          "predicates": [{"name": "P", "arity": ["X"], "range": [0, 1]}]},
            "carriers": {"X": {"points": ["a", "b"], "distances": [[0, 1], [1, 0]]}},
            "predicates": [{"name": "P", "arity": ["X"], "table": ["1/2", 0]}],
        }
        M = load_structure(spec)
        assert M.predicate("P", ("X",))("a") == Fraction(1, 2)

    @it("should report JSON errors with a position")
    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "gn",')
        with pytest.raises(InputError) as info:
            load_structure(path)
        assert info.value.position.startswith("line 1")
