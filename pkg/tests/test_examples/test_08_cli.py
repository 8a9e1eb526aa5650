"""
Command line

- JSON reports with schema, inputs digest, timing and version
- Exit codes: 0 ok, 1 violation found, 2 bad input
- Structure shorthands, structure files and config files
"""

import json
from fractions import Fraction

import pytest

from contilog import __version__, config
from contilog.cli import EXIT_INPUT, EXIT_OK, EXIT_VIOLATION, dumps, run
from contilog.ultra import COMMUTATIVITY
from tests.conftest import describe, it


def _report(capsys, argv, code=EXIT_OK):
    assert run(argv) == code, f"exit code of {argv}"
    return json.loads(capsys.readouterr().out)


@describe("Reports")
class TestReports:
    @it("should evaluate a formula on a shorthand structure")
    def test_eval(self, capsys):
        report = _report(capsys, ["eval", "--structure", "gn:1", "--formula", COMMUTATIVITY])
        assert report["schema"] == config.REPORT_SCHEMA and report["version"] == __version__
        assert report["result"]["exact"] == "3/5" and report["result"]["lo"] == 0.6
        assert len(report["inputs"]["sha256"]) == 64

    @it("should be deterministic apart from the timing")
    def test_deterministic(self, capsys):
        argv = ["eval", "--structure", "sym:3", "--formula", COMMUTATIVITY]
        first, second = _report(capsys, argv), _report(capsys, argv)
        first.pop("timing")
        second.pop("timing")
        assert first == second

    @it("should bind free variables by label")
    def test_assign(self, capsys):
        report = _report(capsys, ["eval", "--structure", "sym:3", "--formula", "d(x, 1)", "--assign", "x=(12)"])
        assert report["result"]["exact"] == "2/3"

    @it("should read structure files")
    def test_file(self, capsys, tmp_path):
        path = tmp_path / "z6.json"
        path.write_text(json.dumps({"kind": "cyclic", "n": 6}))
        report = _report(capsys, ["eval", "--structure", str(path), "--formula", COMMUTATIVITY])
        assert report["result"]["exact"] == "0"

    @it("should write floats with 17 significant digits and NaN as null")
    def test_dumps(self):
        assert "0.33333333333333331" in dumps({"third": Fraction(1, 3)})
        assert dumps(float("nan")) == "null"
        assert dumps([]) == "[]" and dumps({}) == "{}"


@describe("Exit codes")
class TestExitCodes:
    @it("should exit 2 on a formula syntax error with a caret")
    def test_syntax(self, capsys):
        assert run(["eval", "--structure", "sym:3", "--formula", "sup x:G d(x,x)"]) == EXIT_INPUT
        err = capsys.readouterr().err
        assert "error:" in err and "^" in err

    @it("should exit 2 on unknown structures and bad arguments")
    def test_bad_input(self, capsys, tmp_path):
        assert run(["eval", "--structure", "nope", "--formula", "0"]) == EXIT_INPUT
        assert run(["eval", "--structure", "sym:3"]) == EXIT_INPUT
        assert run([]) == EXIT_INPUT
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"kind": "cayley", "table": [[0, 1], [1, 1]]}))
        assert run(["scheme", "--structure", str(bad), "--name", "group"]) == EXIT_INPUT

    @it("should exit 0 for --version")
    def test_version(self, capsys):
        assert run(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    @it("should exit 1 when a check finds a violation")
    def test_violation(self, capsys):
        assert run(["cayley", "--structure", "sym:3", "--subset", "(12)"]) == EXIT_VIOLATION
        assert run(["bound", "--structure", "gn:1", "--radius", "0", "--max-f", "1"]) == EXIT_VIOLATION
        assert run(["chain", "--structure", "sym:3", "--level", "();(12);(23)",
                    "--level", "();(12);(23);(123)",
                    "--level", "();(12);(23);(13);(123);(132)"]) == EXIT_VIOLATION

    @it("should need both formulas for the pseudometric")
    def test_types_args(self, capsys):
        assert run(["types", "--structure", "sym:3", "--phi", "d(x, 1)"]) == EXIT_INPUT


@describe("Commands")
class TestCommands:
    @it("should run schemes with parameters and P, Q from an open ball")
    def test_scheme(self, capsys):
        report = _report(capsys, ["scheme", "--structure", "sym:3", "--name", "k0",
                                  "--params", '{"eps": ["1/4", "1/2"]}', "--open-radius", "0"])
        assert report["result"]["worst"] == 0

    @it("should classify the G_n commutativity tail")
    def test_ultra(self, capsys):
        report = _report(capsys, ["ultra", "--family", "gn", "--range", "1", "6", "--formula", COMMUTATIVITY])
        assert report["result"]["classification"] == "convergent"
        assert report["result"]["values"][0]["exact"] == "3/5"

    @it("should need a range with a family")
    def test_ultra_args(self, capsys):
        assert run(["ultra", "--family", "gn", "--formula", COMMUTATIVITY]) == EXIT_INPUT

    @it("should report automorphisms, Cayley bounds and G_rho")
    def test_group_commands(self, capsys):
        assert _report(capsys, ["aut", "--structure", "sym:3"])["result"]["order"] == 6
        assert _report(capsys, ["cayley", "--structure", "sym:3", "--subset", "(12);(23)"])["result"]["n"] == 3
        report = _report(capsys, ["catreport", "--structure", "gn:1", "--rho", "0.45"])
        assert report["result"]["g_rho"]["exponent"] == 3

    @it("should compute type distances and nets")
    def test_types(self, capsys):
        report = _report(capsys, ["types", "--structure", "sym:3", "--tuple", "(12)", "--other", "()"])
        assert report["result"]["realized_d_distance"] == pytest.approx(2 / 3)
        net = _report(capsys, ["types", "--structure", "sym:3", "--eps", "1/2"])
        assert net["result"]["valid"] is True and net["result"]["types"] == 3

    @it("should check moduli")
    def test_modulus(self, capsys):
        report = _report(capsys, ["modulus", "--structure", "sym:3", "--symbol", "mul"])
        assert report["result"]["entries"]


@describe("Configuration")
class TestConfig:
    @it("should read settings from a config file")
    def test_config_file(self, capsys, tmp_path):
        path = tmp_path / "settings.py"
        path.write_text("TOL = 1e-6\nCAP = 2\n")
        report = _report(capsys, ["--config", str(path), "eval", "--structure", "sym:3",
                                  "--formula", "add(3/4, 1/2)"])
        assert report["result"]["exact"] == "5/4", "the config cap applies"

    @it("should reject unknown settings")
    def test_unknown_setting(self, capsys, tmp_path):
        path = tmp_path / "settings.py"
        path.write_text("FOO = 1\n")
        assert run(["--config", str(path), "aut", "--structure", "sym:3"]) == EXIT_INPUT

    @it("should let flags win over the config file")
    def test_flags(self, capsys, tmp_path):
        path = tmp_path / "settings.py"
        path.write_text("CAP = 2\n")
        assert run(["--config", str(path), "eval", "--structure", "sym:3", "--formula", "add(3/4, 1/2)",
                    "--cap", "1"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["result"]["exact"] == "1"
