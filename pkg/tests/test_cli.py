import csv
import json

import pytest

from nlap.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from nlap.config import ConfigError, load_config, parse_config


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data), encoding="utf-8")
    return str(p)


CRITICAL = {"N": 2, "domain": "square", "level": 2, "a1": 1.0, "a2": 0.5, "r1": 0.5, "r2": 0.5,
         "lam_fraction": 0.5,
         "nonlinearity": {"name": "exp_critical", "a3": 1.0, "alpha": 1.0, "r3": 3.0}}
ZERO = {"N": 2, "domain": "square", "level": 2, "a1": 0.0, "a2": 0.0, "lam": 0.0,
        "nonlinearity": {"name": "zero", "a3": 1.0, "alpha": 1.0, "r3": 3.0}}
LINEAR = {**ZERO, "schedule": {"limit": False}}


def test_constants_default(tmp_path, capsys):
    assert main(["constants", "--output", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "constants.json").read_text())
    assert rep["constants"]["alpha_N"] == pytest.approx(12.566371, abs=1e-6)
    assert rep["certified"] is True


def test_constants_above_threshold(tmp_path, capsys):
    cfg = write(tmp_path, CRITICAL)
    assert main(["constants", "--config", cfg, "--lambda", "5", "--output", str(tmp_path)]) \
        == EXIT_CONFIG
    err = capsys.readouterr().err
    ls = json.loads((tmp_path / "constants.json").read_text())["constants"]["lambda_star"]
    assert f"{ls:.6g}" in err


def test_missing_r3_names_field(tmp_path, capsys):
    bad = {**CRITICAL, "nonlinearity": {"name": "exp_critical", "a3": 1.0, "alpha": 1.0}}
    assert main(["constants", "--config", write(tmp_path, bad)]) == EXIT_CONFIG
    assert "nonlinearity.r3" in capsys.readouterr().err


def test_config_errors():
    with pytest.raises(ConfigError, match="domain"):
        parse_config({"N": 3, "domain": "square"})
    with pytest.raises(ConfigError, match="lam"):
        parse_config({"lam": 0.1, "lam_fraction": 0.5})
    with pytest.raises(ConfigError, match="bogus"):
        parse_config({"bogus": 1})
    cfg = load_config(None, {"lam": 0.01, "level": 2, "seed": 3})
    assert cfg.lam == 0.01 and cfg.lam_fraction is None and cfg.seed == 3


def test_check_default_passes(tmp_path, capsys):
    assert main(["check", "--level", "2", "--output", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "check.json").read_text())
    assert rep["failed"] == 0 and rep["passed"] > 0


def test_check_suite_filter(tmp_path, capsys):
    assert main(["check", "--suite", "fk", "--output", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "check.json").read_text())
    assert {r["suite"] for r in rep["results"]} == {"fk"}


def test_check_bad_nonlinearity_fails(tmp_path, capsys):
    cfg = {**ZERO, "nonlinearity": {"name": "minus_linear", "a3": 1.0, "alpha": 1.0, "r3": 3.0}}
    code = main(["check", "--config", write(tmp_path, cfg), "--suite", "fk",
                 "--output", str(tmp_path)])
    assert code == EXIT_FAIL
    rep = json.loads((tmp_path / "check.json").read_text())
    verdict = {r["name"]: r["passed"] for r in rep["results"]}
    assert verdict["hypothesis_F"] is False


def test_solve_zero_data(tmp_path, capsys):
    cfg = write(tmp_path, ZERO)
    assert main(["solve", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["positivity"]["passed"]


def test_solve_linear_defect(tmp_path, capsys):
    assert main(["solve", "--config", write(tmp_path, LINEAR), "--output", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["weak_form_defect"] <= 1e-10


def test_solve_critical_regime_and_schema(tmp_path, capsys):
    cfg = write(tmp_path, CRITICAL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--output", str(a)]) == EXIT_OK
    assert main(["solve", "--config", cfg, "--seed", "5", "--output", str(b)]) == EXIT_OK
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    assert set(ra) == set(rb)
    assert ra["positivity"]["passed"] and ra["comparison"]["passed"]
    with open(a / "solution.csv", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "u"]
    assert len(rows) - 1 == 25  # vertices of level 2


def test_solve_regime_rejection(tmp_path, capsys):
    cfg = write(tmp_path, CRITICAL)
    assert main(["solve", "--config", cfg, "--lambda", "5", "--output", str(tmp_path)]) \
        == EXIT_CONFIG


def test_sweep(tmp_path, capsys):
    cfg = write(tmp_path, CRITICAL)
    assert main(["solve", "--config", cfg, "--sweep", "0.01:0.02:2",
                 "--output", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "sweep_000" / "report.json").exists()
    assert (tmp_path / "sweep_001" / "report.json").exists()


def test_subsolution_and_mesh_export(tmp_path, capsys):
    assert main(["subsolution", "--level", "2", "--output", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "subsolution.csv").exists()
    assert main(["mesh-export", "--level", "1", "--output", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "vertices.csv", encoding="utf-8") as fh:
        assert next(csv.reader(fh)) == ["id", "x", "y", "boundary"]


def test_threads_env_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NLAP_THREADS", "zero")
    assert main(["mesh-export", "--output", str(tmp_path)]) == EXIT_CONFIG
