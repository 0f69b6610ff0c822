#!/usr/bin/env python
"""
End-to-end runs of the ldp-lab subcommands on small configs
"""

import contextlib
import csv
import io
import json
import os
import sys
import tempfile

import pytest

# Import from src/ directory
sys.path.insert(0, 'src')
from ldp_lab.action import read_path_csv
from ldp_lab.cli import EXIT_ERROR, EXIT_OK, EXIT_VERDICT_FAIL, main
from ldp_lab.report_utils import MANIFEST_NAME, TABLE_COLUMNS

CUBIC = {"family": "cubic_example", "x0": [0.0]}
OU = {"family": "linear", "x0": [0.0], "coefficients": {"drift_matrix": [[-1.0]]}}
BROWNIAN = {"family": "linear", "x0": [0.0], "coefficients": {"drift_matrix": [[0.0]]}}


def run_cli(tmp, subcommand, config, *extra):
    """Write config into tmp, run main and return (status, stderr text, output dir)"""
    config = dict(config)
    config.setdefault("output", os.path.join(tmp, "out"))
    config.setdefault("settings", {"VERBOSE": False})
    config_file = os.path.join(tmp, "config.json")
    with open(config_file, 'w') as f:
        json.dump(config, f)
    err = io.StringIO()
    with contextlib.redirect_stderr(err):
        status = main([subcommand, "--config", config_file, *extra])
    return status, err.getvalue(), config["output"]


def read_json(out_dir, name):
    with open(os.path.join(out_dir, name)) as f:
        return json.load(f)


def test_check_hypotheses_cubic():
    config = {"model": CUBIC, "hypotheses": {"radii": [1, 2, 4, 8], "probes": 8, "L": 1.0, "pair_samples": 50}}
    with tempfile.TemporaryDirectory() as tmp:
        status, _, out = run_cli(tmp, "check-hypotheses", config)
        assert status == EXIT_OK
        report = read_json(out, "check_hypotheses.json")
        manifest = read_json(out, MANIFEST_NAME)
    assert report["K_estimate"] == pytest.approx(1.0, rel=1e-9)
    assert "fail" not in report["verdicts"].values()
    assert manifest["subcommand"] == "check-hypotheses"
    assert manifest["outputs"] == ["check_hypotheses.json"]
    assert manifest["config"]["model"] == CUBIC


def test_negative_dt_names_the_key():
    config = {"model": BROWNIAN, "sim": {"epsilon": 1.0, "T": 1.0, "dt": -0.001}, "exit": {"C": 1.0, "n": 10}}
    with tempfile.TemporaryDirectory() as tmp:
        status, err, _ = run_cli(tmp, "exit-prob", config)
    assert status == EXIT_ERROR
    assert "sim.dt" in err
    assert err.startswith("ERROR [")


def test_unknown_keys_are_rejected():
    with tempfile.TemporaryDirectory() as tmp:
        config = {"model": BROWNIAN, "sim": {"epsilon": 1.0, "T": 1.0, "foo": 1}, "exit": {"C": 1.0}}
        status, err, _ = run_cli(tmp, "exit-prob", config)
        assert status == EXIT_ERROR
        assert "sim.foo" in err
        status, err, _ = run_cli(tmp, "exit-prob", {"model": BROWNIAN, "simulation": {}})
        assert status == EXIT_ERROR
        assert "simulation" in err


def test_bad_model_coefficient_names_the_key():
    model = {"family": "cubic_example", "x0": [0.5], "coefficients": {"drift_scale": "abc"}}
    with tempfile.TemporaryDirectory() as tmp:
        status, err, _ = run_cli(tmp, "check-hypotheses", {"model": model})
    assert status == EXIT_ERROR
    assert err.startswith("ERROR [model]")
    assert "model.coefficients.drift_scale" in err
    assert "Traceback" not in err


def test_ladder_table():
    config = {
        "model": OU,
        "seed": 4,
        "sim": {"epsilon": 0.5, "T": 1.0, "dt": 0.01},
        "ladder": {"path": {"source": "flow", "T": 1.0, "n_steps": 100}, "delta": 1.0, "eps": [0.5, 0.3], "n": 200},
    }
    with tempfile.TemporaryDirectory() as tmp:
        status, _, out = run_cli(tmp, "ladder", config)
        assert status == EXIT_OK
        with open(os.path.join(out, "ladder.csv"), newline='') as f:
            rows = list(csv.reader(f))
        report = read_json(out, "ladder.json")
    assert rows[0] == TABLE_COLUMNS
    assert len(rows) == 3
    assert [float(r[0]) for r in rows[1:]] == [0.5, 0.3]
    assert report["caveat"]
    assert report["target"] == 0.0 or abs(report["target"]) < 1e-12


def test_lyapunov_scan_expanding_drift_fails():
    model = {"family": "linear", "x0": [0.0], "coefficients": {"drift_matrix": [[1.0]]}}
    config = {"model": model, "lyapunov": {"c": 1.0, "L": 1.0, "radii": [2, 4], "probes": 4}}
    with tempfile.TemporaryDirectory() as tmp:
        status, _, out = run_cli(tmp, "lyapunov-scan", config)
        assert status == EXIT_VERDICT_FAIL
        assert read_json(out, "lyapunov_scan.json")["verdict"] == "fail"


def test_reports_do_not_depend_on_workers():
    config = {"model": BROWNIAN, "seed": 5, "sim": {"epsilon": 1.0, "T": 0.5, "dt": 0.01},
              "exit": {"C": 0.8, "n": 100}, "settings": {"VERBOSE": False, "CHUNK_PATHS": 16}}
    with tempfile.TemporaryDirectory() as tmp:
        outputs = []
        for workers in ("1", "4"):
            config["output"] = os.path.join(tmp, f"out{workers}")
            status, _, out = run_cli(tmp, "exit-prob", config, "--workers", workers)
            assert status == EXIT_OK
            with open(os.path.join(out, "exit_prob.json"), 'rb') as f:
                outputs.append(f.read())
    assert outputs[0] == outputs[1]


def test_sampling_subcommands_do_not_depend_on_workers():
    quartic = {"family": "gradient_polynomial", "x0": [0.3], "coefficients": {"potential": [0, 0, 0, 0, 0.25]}}
    config = {"model": quartic, "seed": 11, "sim": {"epsilon": 0.8, "T": 0.5, "dt": 0.01},
              "coupling": {"beta": [0.2, 0.05], "C": 3.0, "n": 80},
              "ladder": {"path": {"source": "flow", "T": 0.5, "n_steps": 50}, "delta": 0.4, "eps": [0.8, 0.5],
                         "n": 80},
              "martingale": {"kind": "a", "alpha": [1.5, 2.0], "B": 1.0, "T": 1.0, "dt": 0.01, "n": 120},
              "settings": {"VERBOSE": False, "CHUNK_PATHS": 16}}
    outputs = [("coupling", ["coupling.json", "coupling.csv"]), ("ladder", ["ladder.json", "ladder.csv"]),
               ("martingale-check", ["martingale_check.json"])]
    with tempfile.TemporaryDirectory() as tmp:
        for subcommand, names in outputs:
            contents = []
            for workers in ("1", "4"):
                config["output"] = os.path.join(tmp, f"{subcommand}{workers}")
                status, _, out = run_cli(tmp, subcommand, config, "--workers", workers)
                assert status in (EXIT_OK, EXIT_VERDICT_FAIL)
                files = []
                for name in names:
                    with open(os.path.join(out, name), 'rb') as f:
                        files.append(f.read())
                contents.append(files)
            assert contents[0] == contents[1], subcommand


def test_infinite_action_is_written_as_string():
    config = {"model": OU, "action": {"path": {"source": "straight", "start": [0.5], "end": [1.0], "T": 1.0,
                                               "n_steps": 10}}}
    with tempfile.TemporaryDirectory() as tmp:
        status, _, out = run_cli(tmp, "action", config)
        assert status == EXIT_OK
        report = read_json(out, "action.json")
    assert report["value"] == "+inf"
    assert report["admissible"] is False


def test_minimizer_csv_feeds_back_into_action():
    config = {"model": OU, "minimize": {"end": [1.0], "T": 1.0, "n_steps": 50}}
    with tempfile.TemporaryDirectory() as tmp:
        status, _, out = run_cli(tmp, "minimize", config)
        assert status == EXIT_OK
        minimized = read_json(out, "minimize.json")
        csv_file = os.path.join(out, "minimizer.csv")
        path = read_path_csv(csv_file)
        assert path.n_steps == 50
        assert path.T == pytest.approx(1.0)
        again = {"model": OU, "output": os.path.join(tmp, "again"),
                 "action": {"path": {"source": "csv", "file": csv_file}}}
        status, _, out = run_cli(tmp, "action", again)
        assert status == EXIT_OK
        action = read_json(out, "action.json")
    assert action["value"] == pytest.approx(minimized["value"], rel=1e-9)


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
                print(f"✅ {name}")
            except Exception as e:
                failed += 1
                print(f"❌ {name}: {e!r}")
    sys.exit(1 if failed else 0)
