import csv
import json
import math
import shutil

import numpy as np
import pytest

from mjcm import recipes
from mjcm.cli import main
from mjcm.config import ConfigError, parse_config


def _write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return {name: np.array([float(r[i]) for r in rows[1:]]) for i, name in enumerate(rows[0])}


def _run(tmp_path, command, cfg, capsys=None):
    code = main([command, "--config", _write(tmp_path, cfg), "--quiet"])
    return code


MODEL = {"e1": 0.0, "e2": 1.0, "omega": 1.0, "gamma": 1.0, "m": 1, "n_max": 4}


def _rabi(tmp_path, **extra):
    cfg = {
        "model": dict(MODEL),
        "initial_state": {"product": {"level": 2, "fock": 0}},
        "integrator": {"t_end": 6.0, "n_samples": 121},
        "evolution": "both",
        "outputs": {"csv_path": str(tmp_path / "out.csv"), "json_path": str(tmp_path / "out.json"),
                    "tracked": ["N1[0]", "N2[0]"]},
    }
    cfg.update(extra)
    return cfg


def test_config_round_trip():
    text = json.dumps({"model": {**MODEL, "gamma": [0.6, 0.8]}, "drive": {"kind": "sinusoid", "frequency": 0.5}})
    cfg = parse_config(text)
    assert cfg.model.gamma == complex(0.6, 0.8)
    again = parse_config(cfg.to_json())
    assert again == cfg
    assert parse_config(json.dumps({"model": {**MODEL, "gamma": {"re": 0.6, "im": 0.8}}})).model.gamma == 0.6 + 0.8j


def test_config_errors_name_location():
    with pytest.raises(ConfigError, match="line 2 column"):
        parse_config('{"model":\n  {"e1": 0,, }}')
    with pytest.raises(ConfigError, match="model.colour"):
        parse_config(json.dumps({"model": {**MODEL, "colour": 1}}))
    with pytest.raises(ConfigError, match="model.m"):
        parse_config(json.dumps({"model": {**MODEL, "m": 0}}))
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(json.dumps({"model": MODEL, "initial_state": {}}))
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(json.dumps({"model": MODEL, "initial_state": {"coherent": {"level": 2, "alpha": 2.0}}}))


def test_cli_malformed_and_unknown_key(tmp_path, capsys):
    assert _run(tmp_path, "simulate", '{"model": {') == 1
    assert "line" in capsys.readouterr().err
    assert _run(tmp_path, "simulate", {"model": MODEL, "extra": 1}) == 1
    assert "extra" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_verify_closure(tmp_path):
    base = {"model": MODEL, "outputs": {"json_path": str(tmp_path / "c.json")}}
    assert _run(tmp_path, "verify-closure", base) == 0
    rep = json.loads((tmp_path / "c.json").read_text())
    assert rep["passed"] and rep["n_safe"] == 3
    assert _run(tmp_path, "verify-closure", {**base, "closure": {"method": "exact"}}) == 0
    assert _run(tmp_path, "verify-closure", {**base, "closure": {"corrupt_member": "N2[1]"}}) == 2
    assert _run(tmp_path, "verify-closure", {**base, "closure": {"corrupt_member": "Q[1]"}}) == 1
    assert _run(tmp_path, "verify-closure", {**base, "closure": {"n_safe": 4}}) == 1


def test_cli_rabi_matches_cosine(tmp_path):
    assert _run(tmp_path, "simulate", _rabi(tmp_path)) == 0
    data = _read_csv(tmp_path / "out.csv")
    t = data["t"]
    assert np.max(np.abs(data["N2[0]"] - np.cos(t) ** 2)) < 1e-6
    summary = json.loads((tmp_path / "out.json").read_text())
    assert summary["max_oracle_deviation"] < 1e-6
    assert summary["max_conservation_drift"]["bloch"]["cons"] < 1e-8


def test_cli_zero_coupling_constant(tmp_path):
    model = {**MODEL, "gamma": 0.0, "allow_zero_coupling": True}
    assert _run(tmp_path, "simulate", _rabi(tmp_path, model=model)) == 0
    data = _read_csv(tmp_path / "out.csv")
    assert np.ptp(data["N1[0]"]) < 1e-12 and np.ptp(data["N2[0]"]) < 1e-12
    assert _run(tmp_path, "simulate", _rabi(tmp_path, model={**MODEL, "gamma": 0.0})) == 1


def test_cli_csv_deterministic(tmp_path):
    cfg = _rabi(tmp_path)
    assert _run(tmp_path, "simulate", cfg) == 0
    first = (tmp_path / "out.csv").read_bytes()
    assert _run(tmp_path, "simulate", cfg) == 0
    assert (tmp_path / "out.csv").read_bytes() == first
    assert first.splitlines()[0].startswith(b"t,N1[0],N2[0]")


def test_cli_figure(tmp_path):
    cfg = _rabi(tmp_path)
    cfg["outputs"]["figure_path"] = str(tmp_path / "fig.png")
    assert _run(tmp_path, "simulate", cfg) == 0
    assert (tmp_path / "fig.png").read_bytes()[:4] == b"\x89PNG"


def test_cli_bad_tracked_and_missing_sections(tmp_path):
    cfg = _rabi(tmp_path)
    cfg["outputs"]["tracked"] = ["N9[0]"]
    assert _run(tmp_path, "simulate", cfg) == 1
    assert _run(tmp_path, "simulate", {"model": MODEL}) == 1


def test_cli_integration_abort(tmp_path):
    cfg = _rabi(tmp_path, integrator={"t_end": 6.0, "n_samples": 11, "step": 1.5}, evolution="exact",
                drive={"kind": "sinusoid", "frequency": 1.0})
    assert _run(tmp_path, "simulate", cfg) == 3


def test_cli_fit_mep(tmp_path):
    out = tmp_path / "f.json"
    base = {"model": MODEL, "outputs": {"json_path": str(out)}}
    assert _run(tmp_path, "fit-mep", base) == 0
    rep = json.loads(out.read_text())
    assert rep["entropy"] == pytest.approx(math.log(20))
    assert _run(tmp_path, "fit-mep", {**base, "fit": {"targets": {"N2[0]": 0.3}}}) == 0
    assert json.loads(out.read_text())["means"]["N2[0]"] == pytest.approx(0.3, abs=1e-9)
    assert _run(tmp_path, "fit-mep", {**base, "fit": {"targets": {"N2[0]": 1.0}}}) == 4
    assert _run(tmp_path, "fit-mep", {**base, "fit": {"targets": {"Z[0]": 0.1}}}) == 1


def test_cli_compare(tmp_path):
    out = tmp_path / "cmp.json"
    m1 = {"model": {**MODEL, "n_max": 6}, "outputs": {"json_path": str(out)}}
    assert _run(tmp_path, "compare-coefficients", m1) == 0
    m2 = {"model": {**MODEL, "e2": 2.0, "m": 2, "n_max": 8}, "outputs": {"json_path": str(out)}}
    assert _run(tmp_path, "compare-coefficients", m2) == 5
    m3 = {"model": {**MODEL, "e2": 3.0, "m": 3, "n_max": 6}, "compare": {"max_row_depth": 0},
          "outputs": {"json_path": str(out)}}
    assert _run(tmp_path, "compare-coefficients", m3) == 5
    rep = json.loads(out.read_text())
    assert rep["count"] > 0
    assert {(e["row_label"], e["col_label"]) for e in rep["entries"]} <= {("I[0]", "F[0]"), ("F[0]", "I[0]")}
    assert all(e["part"] == "static" for e in rep["entries"])


@pytest.mark.parametrize("name", ["rabi.json", "mep_thermal.json", "closure_m2.json"])
def test_recipes_run(tmp_path, monkeypatch, name):
    shutil.copy(str(recipes.path(name)), tmp_path / name)
    monkeypatch.chdir(tmp_path)
    command = {"rabi.json": "simulate", "mep_thermal.json": "fit-mep", "closure_m2.json": "verify-closure"}[name]
    assert main([command, "--config", name, "--quiet"]) == 0
