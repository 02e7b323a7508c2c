from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET

import pytest

from dysmooth import __version__
from dysmooth.cli import build_parser, parse_range, run
from dysmooth.errors import ValidationError
from dysmooth import catalog
from dysmooth.mesh import DyadicGrid, sample, store_samples
from dysmooth.moduli import PROOF


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_range():
    assert parse_range("3..8") == (3, 8)
    assert parse_range("4") == (4, 4)
    for bad in ("8..3", "a..b", "1..x"):
        with pytest.raises(ValidationError):
            parse_range(bad)


def test_analyze_abs_power(capsys):
    code, out, _ = call(capsys, "analyze", "--function", "abs-power", "--d", "1", "--r", "2", "--n", "1..14")
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"command", "version", "seed", "config", "flags", "result"}
    assert doc["command"] == "analyze" and doc["version"] == __version__
    fit = doc["result"]["fit"]
    assert fit["alpha"] == pytest.approx(1.0) and fit["M"] == pytest.approx(2.0)
    assert doc["result"]["saturation"]["class"] == "below-saturation"


def test_analyze_polynomial_has_no_fit(capsys):
    code, out, _ = call(capsys, "analyze", "--function", "poly", "--d", "2", "--coef", "1,1:2.0",
                        "--r", "2", "--n", "1..6")
    assert code == 0
    res = json.loads(out)["result"]
    assert "unavailable" in res["fit"] and "unavailable" in res["geometric_decay"]
    assert res["saturation"]["class"] == "polynomial-class"


def test_analyze_csv_and_svg(capsys, tmp_path):
    code, out, _ = call(capsys, "analyze", "--function", "radial-power", "--d", "2", "--r", "2",
                        "--n", "2..6", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) == 1 + 5
    path = tmp_path / "chart.svg"
    code, out, _ = call(capsys, "analyze", "--function", "abs-power", "--r", "2", "--n", "1..10",
                        "--format", "svg", "--out", str(path))
    assert code == 0 and out == ""
    assert ET.fromstring(path.read_text()).tag.endswith("svg")


def test_analyze_sample_file(capsys, tmp_path):
    path = tmp_path / "s.json"
    store_samples(sample(catalog.AbsPower(1), DyadicGrid(1, 8)), path)
    code, out, _ = call(capsys, "analyze", "--input", str(path), "--r", "2", "--n", "1..8")
    assert code == 0
    assert json.loads(out)["result"]["fit"]["alpha"] == pytest.approx(1.0)


def test_certify(capsys):
    code, out, _ = call(capsys, "certify", "--r", "2..6", "--d", "2")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["all_pass"]
    assert [row["det_abs"] for row in res["rows"]] == [str(2 ** (r * (r - 1) // 2)) for r in range(2, 7)]
    code, out, _ = call(capsys, "certify", "--r", "2..4", "--format", "csv")
    header = out.splitlines()[0].split(",")
    assert header[-1] == "status" and "c_dd_3" in header


def test_certify_rejects_r1(capsys):
    code, _, err = call(capsys, "certify", "--r", "1..3")
    assert code == 2
    assert json.loads(err)["exit_code"] == 2


def test_cascade(capsys):
    code, out, _ = call(capsys, "cascade", "--function", "abs-power", "--r", "2", "--n", "3",
                        "--u", "0.3", "--t", "0.03125", "--K", "4")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["cube"]["anchor"] == [0.25]
    assert len(res["stages"]) == 4
    assert all(res["checks"].values())


def test_cascade_precondition_exit_2(capsys):
    code, _, err = call(capsys, "cascade", "--function", "abs-power", "--r", "2", "--n", "3",
                        "--u", "0.3", "--t", "0.1")
    assert code == 2
    doc = json.loads(err)
    assert doc["error"] and "t <= 2**-(n+1)" in doc["message"]


def test_verify_json_and_csv(capsys):
    argv = ["verify", "--function", "abs-power", "--r", "2", "--n", "3..6", "--weighting", "proof"]
    code, out, _ = call(capsys, *argv)
    assert code == 0
    doc = json.loads(out)
    assert doc["flags"]["weighting"] == PROOF
    assert doc["result"]["constants"]["measured"]["M1"] == pytest.approx(0.5)
    code, out, _ = call(capsys, *argv, "--format", "csv")
    assert out.splitlines()[0].startswith("n,t,psi")
    assert len(out.splitlines()) == 5


def test_verify_rejects_sample_file(capsys, tmp_path):
    path = tmp_path / "s.json"
    store_samples(sample(catalog.AbsPower(1), DyadicGrid(1, 6)), path)
    code, _, _ = call(capsys, "verify", "--input", str(path), "--r", "2")
    assert code == 2


def test_bad_input_file_exit_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"dimension": 1, "level": 2, "values": [0, 1, 2]}))
    code, out, err = call(capsys, "analyze", "--input", str(path), "--r", "2", "--n", "1..2")
    assert code == 2 and out == ""
    line = err.strip()
    assert "\n" not in line
    doc = json.loads(line)
    assert doc["exit_code"] == 2 and "expected 5 values" in doc["message"]


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, err = call(capsys, "analyze", "--input", str(tmp_path / "nope.json"), "--r", "2", "--n", "1..2")
    assert code == 2
    json.loads(err)


def test_capacity_exit_3(capsys):
    code, _, err = call(capsys, "analyze", "--function", "abs-power", "--d", "3", "--r", "2", "--n", "1..9")
    assert code == 3
    assert json.loads(err)["exit_code"] == 3


def test_unknown_function_and_flags(capsys):
    assert call(capsys, "analyze", "--function", "sine", "--r", "2", "--n", "1..4")[0] == 2
    assert call(capsys, "analyze", "--function", "abs-power", "--r", "2")[0] == 2
    assert call(capsys, "cascade", "--function", "abs-power", "--axis", "2", "--r", "2", "--n", "3",
                "--u", "0.3", "--t", "0.03")[0] == 2
    assert call(capsys, "analyze", "--function", "poly", "--r", "2", "--n", "1..4")[0] == 2
    assert call(capsys, "analyze", "--function", "poly", "--coef", "x:1", "--r", "2", "--n", "1..4")[0] == 2


def test_parser_lists_subcommands():
    help_text = build_parser().format_help()
    for name in ("analyze", "certify", "cascade", "verify"):
        assert name in help_text
