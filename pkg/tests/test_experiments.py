import json

import pytest

from harnack_lab import ConfigError, poisson_matched
from harnack_lab.experiments import (EXPERIMENTS, ExperimentConfig, load_thresholds, run,
                                     validate_config)

SMALL = {"grid": {"L": 10.0, "n": 201}, "dt": 0.01, "sweeps": {"x0": [0.0, 2.0]}}


def _errors(raw):
    with pytest.raises(ConfigError) as err:
        validate_config(raw)
    return dict(err.value.errors)


def test_minimal_config_gets_defaults():
    cfg = validate_config('{"experiment": "E1_time_insensitive"}')
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.kernel == poisson_matched()
    assert cfg.grid.n == 1601 and cfg.grid.ext_policy == "zero_exterior"
    assert cfg.T == 1.0 and cfg.dt == 1e-3 and cfg.mode == "solver" and cfg.seed == 0
    assert cfg.sweeps["tau"] == [0.25, 0.5, 1.0]
    assert cfg.output_dir.endswith("E1_time_insensitive")
    assert cfg.threshold("THM_0_HARNACK") == load_thresholds()["ceilings"]["THM_0_HARNACK"]
    json.dumps(cfg.to_dict())


def test_range_and_typo_errors():
    errs = _errors({"experiment": "E1_time_insensitive", "kernel": {"s": 1.5}})
    assert "s must lie in (0,1)" in errs["kernel.s"]
    errs = _errors({"experiment": "E1_time_insensitive", "kernel": {"s": 0.5, "lamda": 1.0}})
    assert "lamda" in errs["kernel.lamda"]
    errs = _errors({"experiment": "E1_time_insensitive", "colour": 1})
    assert "colour" in errs["colour"]


def test_cross_field_rules():
    assert "grid.ext_policy" in _errors({"experiment": "E5_counterexample",
                                         "grid": {"ext_policy": "zero_exterior"}})
    assert "grid.ext_policy" in _errors({"experiment": "E1_time_insensitive",
                                         "grid": {"ext_policy": "dirichlet_data"}})
    assert "mode" in _errors({"experiment": "E5_counterexample", "mode": "oracle"})
    assert "mode" in _errors({"experiment": "E1_time_insensitive", "mode": "oracle",
                              "kernel": {"s": 0.3}})
    assert "T" in _errors({"experiment": "E9_energy_decay", "T": 1.0})
    assert "experiment" in _errors({"experiment": "E99"})
    assert "ceilings.NOPE" in _errors({"experiment": "E2_elliptic", "ceilings": {"NOPE": 1}})
    assert "" in _errors("{not json")


def test_every_experiment_has_a_valid_default():
    for exp in EXPERIMENTS:
        validate_config({"experiment": exp})


def test_small_run_is_deterministic(tmp_path):
    raw = {"experiment": "E2_elliptic", **SMALL, "output_dir": str(tmp_path / "a")}
    a = run(raw)
    assert a.status in (0, 1)
    ra = (tmp_path / "a" / "report.json").read_bytes()
    b = run(raw)
    assert ra == (tmp_path / "a" / "report.json").read_bytes()
    assert (tmp_path / "a" / "report.csv").read_text().startswith("kind,name,tau,x0")
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["status"] == a.status and meta["duration_s"] >= 0
    assert b.report == a.report


def test_oracle_mode_e1():
    res = run({"experiment": "E1_time_insensitive", "mode": "oracle"}, write=False)
    assert res.status == 0
    har = res.report["reports"]["THM_0_HARNACK"]
    assert har["max_c"] == pytest.approx(8.33, rel=0.02)
    assert res.report["checks"]["spot_THM_0_SUP"]["pass"] is True


def test_gaussian_contrast_run():
    res = run({"experiment": "E6_gaussian_contrast"}, write=False)
    assert res.status == 0
    chk = res.report["checks"]
    assert chk["gaussian_quotient_far"]["value"] > 100
    assert chk["poisson_quotient_far"]["value"] < 10


def test_lemmas_run():
    res = run({"experiment": "LEMMAS", "samples": 5000}, write=False)
    assert res.status == 0


def test_numeric_input_problem_is_status_2():
    # a ball that leaves the grid
    res = run({**SMALL, "experiment": "E2_elliptic", "sweeps": {"x0": [9.9]}}, write=False)
    assert res.status == 2 and "error" in res.report


def test_thread_env(monkeypatch):
    monkeypatch.setenv("HARNACK_LAB_THREADS", "zero")
    with pytest.raises(ConfigError):
        run({"experiment": "E2_elliptic", **SMALL}, write=False)
