"""
Ultraproduct approximation

- Sentence values along G_n with closed forms above the exact limit
- Tail classification: stable, extrapolated, oscillating
- Limit distances of point sequences and the quotient by distance zero
"""

from fractions import Fraction

import pytest

from contilog.errors import InputError, SignatureMismatchError
from contilog.mstruct import gn_flip, gn_transposition
from contilog.sigform import parse_formula
from contilog.ultra import (
    COMMUTATIVITY, PointSequence, classify_tail, gn_commutator_defect, gn_sequence, point_distance,
    quotient_classes, sequence_from_spec, sym_sequence, ultra_eval,
)
from tests.conftest import describe, it


def _identity(n):
    return tuple(range(2 ** n + 3))


@describe("Sentence values along a sequence")
class TestUltraEval:
    @it("should drive the commutativity defect of G_n to zero")
    def test_gn_commutativity(self, gn1):
        seq = gn_sequence(1, 6)
        report = ultra_eval(seq, parse_formula(COMMUTATIVITY, gn1.signature))
        assert report.value_list() == [Fraction(3, 5), Fraction(3, 7), Fraction(3, 11),
                                       Fraction(3, 19), Fraction(3, 35), Fraction(3, 67)]
        assert [src for _, _, src in report.values] == ["exact"] * 3 + ["closed-form"] * 3
        assert report.convergent and report.method == "extrapolated"
        assert report.limit == pytest.approx(0.0), "the extrapolated limit is clamped at 0"
        assert report.trend == "strictly decreasing"

    @it("should agree with brute force where both are available")
    def test_closed_form(self, gn2):
        from contilog.evaluator import evaluate
        value = evaluate(gn2, parse_formula(COMMUTATIVITY, gn2.signature)).value
        assert value == gn_commutator_defect(2) == Fraction(3, 7)

    @it("should report a constant sequence as stable")
    def test_stable(self, sym3):
        report = ultra_eval(sym_sequence(2, 4), parse_formula("sup x:G. d(x, 1)", sym3.signature))
        assert report.convergent and report.method == "stable" and report.limit == 1
        assert report.trend == "constant"

    @it("should take sentences only")
    def test_free_variables(self, gn1):
        with pytest.raises(InputError):
            ultra_eval(gn_sequence(1, 2), parse_formula("d(x, 1)", gn1.signature))

    @it("should refuse members with another signature")
    def test_mismatch(self, gn1):
        seq = sequence_from_spec({"members": [
            {"kind": "gn", "n": 1},
            {"kind": "metric", "points": ["a", "b"], "distances": [[0, 1], [1, 0]]},
        ]})
        with pytest.raises(SignatureMismatchError):
            ultra_eval(seq, parse_formula(COMMUTATIVITY, gn1.signature))


@describe("Tail classification")
class TestClassify:
    @it("should flag oscillating tails")
    def test_oscillating(self):
        values = [(n, Fraction(n % 2), "exact") for n in range(1, 6)]
        assert classify_tail(values, 4, 1e-9).classification == "oscillating"

    @it("should take the last value of a flat tail")
    def test_stable(self):
        values = [(1, Fraction(1, 3), "exact"), (2, Fraction(1, 2), "exact"), (3, Fraction(1, 2), "exact")]
        report = classify_tail(values, 2, 1e-9)
        assert report.method == "stable" and report.limit == Fraction(1, 2)

    @it("should need a window of at least two")
    def test_window(self):
        with pytest.raises(InputError):
            classify_tail([(1, 0, "exact")], 1, 1e-9)

    @it("should read sequence specs")
    def test_spec(self):
        assert sequence_from_spec({"family": "gn", "range": [1, 3]}).indices == (1, 2, 3)
        with pytest.raises(InputError):
            sequence_from_spec({"family": "dihedral", "range": [1, 3]})


@describe("Point sequences and the quotient")
class TestPoints:
    @it("should send the transposition to the identity in the limit")
    def test_distance(self):
        seq = gn_sequence(1, 5)
        e = PointSequence("G", _identity, "e")
        t = PointSequence("G", gn_transposition, "t")
        report = point_distance(seq, e, t)
        assert report.value_list()[0] == Fraction(2, 5)
        assert report.convergent and report.limit == pytest.approx(0.0)

    @it("should identify points at limit distance zero")
    def test_quotient(self):
        seq = gn_sequence(1, 5)
        points = [PointSequence("G", _identity, "e"), PointSequence("G", gn_transposition, "t"),
                  PointSequence("G", gn_flip, "flip")]
        report = quotient_classes(seq, points)
        assert report.classes == [["e", "t"], ["flip"]], "the flip stays at distance 1"
        assert report.flagged == []

    @it("should require distinct labels")
    def test_labels(self):
        p = PointSequence("G", _identity, "e")
        with pytest.raises(InputError):
            quotient_classes(gn_sequence(1, 3), [p, p])
