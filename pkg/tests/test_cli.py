import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclab.cli import dumps_report, loads_report, main
from cocyclab.scenario import load_schema, validate_document

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = sorted((ROOT / "scenarios").glob("*.json"))
REMARK = ROOT / "scenarios" / "gallery-remark.json"


def run(*argv):
    return main([str(a) for a in argv])


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


def small_remark(tmp_path, **expect):
    doc = json.loads(REMARK.read_text())
    doc["cocycle"]["horizon"] = 130
    doc["analyses"] = [
        {"kind": "theta_series", "id": "theta", "j": 0},
        {"kind": "remark_verify", "id": "verify", "m_list": [3, 4, 5]},
        {"kind": "witness", "id": "witness", "tau": 0.25, "horizon": 130},
    ]
    doc["expect"] = expect or doc["expect"]
    return write(tmp_path / "remark.json", doc)


class TestRun:
    def test_remark_theta_slope(self, tmp_path):
        out = tmp_path / "out"
        assert run("run", small_remark(tmp_path), out) == 0
        with open(out / "theta.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["n", "log_theta"]
        n = np.array([float(r[0]) for r in rows[1:]])
        lt = np.array([float(r[1]) for r in rows[1:]])
        # log norm on the stable side is -n, centre conorm 1, centre norm e^{3n/4}
        assert np.allclose(lt, n / 4, atol=1e-12)
        report = loads_report((out / "report.json").read_text())
        assert report["expect"]["passed"]

    def test_mismatch_exit_1(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run("run", small_remark(tmp_path, forward_bunched=True), out) == 1
        assert "forward_bunched" in capsys.readouterr().err
        report = loads_report((out / "report.json").read_text())
        assert not report["expect"]["passed"]

    def test_json_series_format(self, tmp_path):
        out = tmp_path / "out"
        assert run("run", small_remark(tmp_path), out, "--format", "json") == 0
        series = json.loads((out / "theta.json").read_text())
        assert series["columns"] == ["n", "log_theta"]
        assert not (out / "theta.csv").exists()

    def test_csv_lf_and_repr_floats(self, tmp_path):
        out = tmp_path / "out"
        run("run", ROOT / "scenarios" / "constant-split.json", out)
        raw = (out / "spectrum.csv").read_bytes()
        assert b"\r" not in raw
        for line in raw.decode().splitlines()[1:]:
            for cell in line.split(",")[1:]:
                assert repr(float(cell)) == cell

    def test_report_round_trip(self, tmp_path):
        out = tmp_path / "out"
        run("run", small_remark(tmp_path), out)
        text = (out / "report.json").read_text()
        assert dumps_report(loads_report(text)) == text
        assert "total_seconds" not in text
        assert "total_seconds" in (out / "timings.json").read_text()

    def test_seed_override_recorded(self, tmp_path):
        out = tmp_path / "out"
        run("run", ROOT / "scenarios" / "random-flatten.json", out, "--seed", "5")
        assert loads_report((out / "report.json").read_text())["provenance"]["seed"] == 5

    def test_unknown_expect_key(self, tmp_path, capsys):
        path = small_remark(tmp_path, remark_verified=True, no_such_verdict=1)
        assert run("run", path, tmp_path / "a") == 0
        assert "no_such_verdict" in capsys.readouterr().err
        assert run("run", path, tmp_path / "b", "--expect-strict") == 2
        assert not (tmp_path / "b").exists()


class TestInputErrors:
    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": 1, ')
        out = tmp_path / "out"
        assert run("run", bad, out) == 2
        assert "malformed" in capsys.readouterr().err
        assert not out.exists()

    def test_unknown_field_path(self, tmp_path, capsys):
        doc = json.loads(REMARK.read_text())
        doc["analyses"][1]["m_lst"] = [3]
        assert run("run", write(tmp_path / "s.json", doc), tmp_path / "out") == 2
        assert "$.analyses[1]" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("run", tmp_path / "nope.json", tmp_path / "out") == 2

    def test_bad_flag(self, tmp_path):
        assert run("run", REMARK, tmp_path, "--format", "xml") == 2

    def test_threads_must_be_positive(self, tmp_path):
        assert run("run", small_remark(tmp_path), tmp_path / "o", "--threads", "0") == 2

    def test_analysis_without_splitting(self, tmp_path, capsys):
        doc = {"schema_version": 1, "cocycle": {"kind": "constant", "matrix": [[2.0]]},
               "analyses": [{"kind": "ph_check"}]}
        assert run("run", write(tmp_path / "s.json", doc), tmp_path / "out") == 2
        assert "$.analyses[0]" in capsys.readouterr().err


def _targets(doc):
    yield "top", doc
    if "cocycle" in doc:
        yield "cocycle", doc["cocycle"]
    for a in doc["analyses"]:
        yield "analysis", a


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
@settings(max_examples=15)
@given(name=st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12),
       pick=st.integers(0, 100))
def test_unknown_fields_rejected(path, name, pick):
    doc = json.loads(path.read_text())
    targets = list(_targets(doc))
    _, target = targets[pick % len(targets)]
    if name in target:
        return
    target[name] = 1
    with pytest.raises(ValueError):
        validate_document(doc)


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_scenarios_validate_and_run(path, tmp_path):
    validate_document(json.loads(path.read_text()))
    assert run("run", path, tmp_path / "out") == 0


def test_schema_is_strict():
    schema = load_schema()
    assert schema["additionalProperties"] is False


def _symplectic_diag(*logs):
    return np.diag([math.exp(x) for x in logs] + [math.exp(-x) for x in logs]).tolist()


class TestFlatten:
    def test_single_factor_certified(self, tmp_path):
        out = tmp_path / "out"
        factors = json.dumps([_symplectic_diag(0.2, 3.0)])
        assert run("flatten", out, "--factors", factors, "--eps", "0.5") == 0
        payload = json.loads((out / "flatten.json").read_text())
        assert payload["certified"]
        assert payload["d"] == 1

    def test_band_edge_is_numerical_failure(self, tmp_path, capsys):
        out = tmp_path / "out"
        factors = json.dumps([_symplectic_diag(0.5)])
        assert run("flatten", out, "--factors", factors, "--eps", "0.5") == 3
        assert "BandEdgeAmbiguity" in capsys.readouterr().err
        assert not out.exists()

    def test_request_file_and_verify_only(self, tmp_path):
        req = write(tmp_path / "req.json",
                    {"schema_version": 1, "factors": [_symplectic_diag(0.2)] * 3, "eps": 0.5})
        out = tmp_path / "out"
        assert run("flatten", req, out) == 0
        pert = json.loads((out / "flatten.json").read_text())["perturbations"]
        pfile = write(tmp_path / "pert.json", pert)
        again = tmp_path / "again"
        assert run("flatten", req, again, "--perturbations", pfile, "--verify-only") == 0
        assert json.loads((again / "flatten.json").read_text())["certified"]

    def test_verify_only_rejects_identity(self, tmp_path):
        req = write(tmp_path / "req.json",
                    {"schema_version": 1, "factors": [_symplectic_diag(0.2)], "eps": 0.5})
        pfile = write(tmp_path / "pert.json", [np.eye(2).tolist()])
        out = tmp_path / "out"
        assert run("flatten", req, out, "--perturbations", pfile, "--verify-only") == 1
        assert json.loads((out / "flatten.json").read_text())["certified"] is False

    def test_non_symplectic_factor(self, tmp_path):
        factors = json.dumps([[[2.0, 0.0], [0.0, 2.0]]])
        assert run("flatten", tmp_path / "o", "--factors", factors, "--eps", "0.5") == 2


def test_gallery_listing(capsys):
    assert run("gallery") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert {line.split("\t")[0] for line in lines} == {
        "remark", "product-basic", "product-obstructed", "katok-linear"}


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_thread_count_does_not_change_outputs(path, tmp_path):
    run("run", path, tmp_path / "one", "--threads", "1")
    run("run", path, tmp_path / "eight", "--threads", "8")
    names = sorted(p.name for p in (tmp_path / "one").iterdir() if p.name != "timings.json")
    assert names == sorted(p.name for p in (tmp_path / "eight").iterdir()
                           if p.name != "timings.json")
    for name in names:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "eight" / name).read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cocyclab.cli", "gallery"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "remark" in proc.stdout
