import csv
import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from econospace.cli import main
from econospace.config import parse_config
from econospace.errors import ConfigError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

OSC = {
    "Q0": [10.0], "SV0": [30.0], "Et0_q": [12.0], "Et0_sv": [25.0],
    "a_q": [1.0], "be_q": [-4.0], "a_sv": [1.0], "be_sv": [-1.0],
    "c_q": [0.01], "d_q": [0.0], "c_sv": [0.0], "d_sv": [0.01],
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def error_doc(result):
    return json.loads(result.stderr.strip().splitlines()[-1])


def test_minimal_oscillator_config(tmp_path):
    cfg, digest = parse_config(write(tmp_path, {"dynamics": OSC}))
    assert cfg.dynamics.Q0 == [10.0] and len(digest) == 64


def test_unknown_key_reports_path(tmp_path):
    doc = {"dynamics": dict(OSC, freqency=[1.0])}
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, doc))
    assert any(e.startswith("dynamics.freqency") for e in info.value.errors)


def test_non_oscillatory_message(tmp_path):
    path = write(tmp_path, {"dynamics": dict(OSC, be_q=[4.0])})
    with pytest.raises(ConfigError, match=r"omega\^2 = -a\*be > 0"):
        parse_config(path)
    cfg, _ = parse_config(path, allow_unstable=True)
    assert cfg.dynamics.be_q == [4.0]


def test_all_errors_reported(tmp_path):
    doc = {
        "domain": {"bounds": [1.0, -2.0], "cells": [4, 0]},
        "dynamics": dict(OSC, be_q=[1.0]),
        "pricing": {"horizons": [0.07], "sample_step": 0.05, "duration": 1.0},
        "bogus": 1,
    }
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, doc))
    # schema errors come first, so only "bogus" is reported at that stage
    assert info.value.errors == ["bogus: Extra inputs are not permitted"]
    del doc["bogus"]
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, doc))
    joined = "\n".join(info.value.errors)
    assert "domain" in joined and "dynamics" in joined and "pricing.horizons" in joined
    assert len(info.value.errors) >= 4


def test_exit_code_config(tmp_path):
    res = invoke("decompose", "--config", write(tmp_path, {"dynamics": dict(OSC, freqency=1)}), "--out", tmp_path)
    assert res.exit_code == 2
    doc = error_doc(res)
    assert doc["kind"] == "config" and any("freqency" in e for e in doc["errors"])


def test_exit_code_malformed_and_missing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert invoke("decompose", "--config", bad).exit_code == 2
    res = invoke("decompose", "--config", tmp_path / "absent.json")
    assert res.exit_code == 4 and error_doc(res)["kind"] == "io"


def test_exit_code_io_on_unwritable_out(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    res = invoke("decompose", "--config", SCENARIOS / "decompose.json", "--out", blocker / "sub")
    assert res.exit_code == 4


def test_exit_code_numeric(tmp_path):
    doc = {
        "domain": {"bounds": [1.0], "cells": [10]},
        "dynamics": OSC,
        "field": {"dt": 1.0, "steps": 3, "initial": "dynamics", "velocity": [1.0]},
    }
    res = invoke("field", "--config", write(tmp_path, doc), "--out", tmp_path / "o")
    assert res.exit_code == 3
    doc = error_doc(res)
    assert doc["module"] == "fieldsolve" and doc["operation"] == "step_continuity"


def test_missing_section_is_config_error(tmp_path):
    res = invoke("ensemble", "--config", write(tmp_path, {"dynamics": OSC}), "--out", tmp_path)
    assert res.exit_code == 2


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        return first, list(csv.DictReader(fh))


def test_decompose_identity(tmp_path):
    res = invoke("decompose", "--config", SCENARIOS / "decompose.json", "--out", tmp_path)
    assert res.exit_code == 0, res.stderr
    first, rows = read_csv(tmp_path / "decomposition.csv")
    assert first.startswith("# config_sha256=") and "seed=0" in first
    assert rows
    assert max(abs(float(r["r_direct"]) - float(r["r_decomposed"])) for r in rows) <= 1e-12
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["weights"]["lambda"] == [0.6, 0.4]
    assert summary["max_identity_residual"] <= 1e-12
    assert summary["meta"]["config_sha256"] in first


def test_decompose_json_format(tmp_path):
    res = invoke("decompose", "--config", SCENARIOS / "decompose.json", "--out", tmp_path, "--format", "json")
    assert res.exit_code == 0
    doc = json.loads((tmp_path / "decomposition.json").read_text())
    assert doc["meta"]["subcommand"] == "decompose" and doc["rows"]


def test_field_zero_closure_balance(tmp_path):
    doc = json.loads((SCENARIOS / "field.json").read_text())
    doc["field"]["closure"] = {"kind": "zero"}
    res = invoke("field", "--config", write(tmp_path, doc), "--out", tmp_path)
    assert res.exit_code == 0, res.stderr
    report = json.loads((tmp_path / "balance.json").read_text())
    for entry in report["fields"].values():
        assert entry["max_relative_residual"] <= 1e-10
        assert entry["final_total"] == pytest.approx(entry["initial_total"], rel=1e-12)
    first, rows = read_csv(tmp_path / "field_trajectory.csv")
    assert first.startswith("# config_sha256=")
    assert {r["step"] for r in rows} == {"0", "200", "400", "600"}


def test_field_linear_closure_tracks_oscillators(tmp_path):
    res = invoke("field", "--config", SCENARIOS / "field.json", "--out", tmp_path)
    assert res.exit_code == 0, res.stderr
    report = json.loads((tmp_path / "balance.json").read_text())
    assert max(report["closed_form_max_gap"].values()) <= 1e-6


def test_field_from_aggregate(tmp_path):
    doc = json.loads((SCENARIOS / "simulate.json").read_text())
    doc["field"] = {"dt": 0.5, "steps": 20, "include_impulses": True}
    res = invoke("field", "--config", write(tmp_path, doc), "--out", tmp_path)
    assert res.exit_code == 0, res.stderr
    report = json.loads((tmp_path / "balance.json").read_text())
    assert "P_Q[1][0]" in report["fields"]
    for entry in report["fields"].values():
        assert entry["max_relative_residual"] <= 1e-10


def test_simulate_outputs(tmp_path):
    res = invoke("simulate", "--config", SCENARIOS / "simulate.json", "--out", tmp_path, "--seed", 5)
    assert res.exit_code == 0, res.stderr
    first, rows = read_csv(tmp_path / "fields.csv")
    assert "seed=5" in first
    # 2 windows x 16 cells x 2 types
    assert len(rows) == 2 * 16 * 2


def test_ensemble_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        res = invoke("ensemble", "--config", SCENARIOS / "ensemble.json", "--out", tmp_path / name)
        assert res.exit_code == 0, res.stderr
        outs.append(tmp_path / name)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert len(files) == 8
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
    report = json.loads((outs[0] / "ensemble_report.json").read_text())
    assert report["meta"]["seed"] == 20240601
    assert report["max_audit_residual"] <= 1e-12
    res = invoke("ensemble", "--config", SCENARIOS / "ensemble.json", "--out", tmp_path / "c", "--seed", 1)
    assert (tmp_path / "c" / "ensemble_report.json").read_bytes() != (outs[0] / "ensemble_report.json").read_bytes()


def test_config_not_mutated(tmp_path):
    for name in ("simulate", "field", "decompose", "ensemble"):
        src = tmp_path / f"{name}.json"
        shutil.copy(SCENARIOS / f"{name}.json", src)
        before = src.read_bytes()
        res = invoke(name, "--config", src, "--out", tmp_path / name)
        assert res.exit_code == 0, res.stderr
        assert src.read_bytes() == before


def test_allow_unstable_flag(tmp_path):
    doc = {"dynamics": dict(OSC, be_q=[4.0], c_q=[0.0], d_q=[0.001]),
           "pricing": {"horizons": [0.1], "sample_step": 0.1, "duration": 1.0}}
    path = write(tmp_path, doc)
    assert invoke("decompose", "--config", path, "--out", tmp_path).exit_code == 2
    res = invoke("decompose", "--config", path, "--out", tmp_path, "--allow-unstable")
    assert res.exit_code == 0, res.stderr
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["frequencies"]["unstable_q"] == [True]
