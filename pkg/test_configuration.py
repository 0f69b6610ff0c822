#!/usr/bin/env python
"""
Settings presets, overrides, worker resolution and strict config parsing
"""

import os
import sys

import pytest

# Import from src/ directory
sys.path.insert(0, 'src')
from ldp_lab.configs import PRESETS, make_settings
from ldp_lab.configuration import LLBaseSettings
from ldp_lab.errors import ConfigError
from ldp_lab.experiment import BLOCK_SCHEMAS, parse_block, parse_config

MODEL = {"family": "linear", "x0": [0.0], "coefficients": {"drift_matrix": [[-1.0]]}}


def without_env(name):
    """Remove an environment variable and return its previous value"""
    return os.environ.pop(name, None)


def restore_env(name, value):
    if value is None:
        os.environ.pop(name, None)
    else:
        os.environ[name] = value


def test_presets():
    assert set(PRESETS) == {'default', 'quick', 'acceptance'}
    assert make_settings().TITLE == "Default"
    assert make_settings().SIM_DT == 1e-3
    assert make_settings('quick').SIM_DT == 1e-2
    assert make_settings('acceptance').GRAD_TOL < LLBaseSettings.GRAD_TOL
    with pytest.raises(ConfigError) as info:
        make_settings('fast')
    assert info.value.key_path == "preset"


def test_fill_from_dict_and_object():
    cfg = make_settings(None, {'MAX_ITERS': 10, 'CHUNK_PATHS': 5})
    assert cfg.MAX_ITERS == 10 and cfg.CHUNK_PATHS == 5
    assert LLBaseSettings.MAX_ITERS == 2000

    class Overrides:
        SIM_DT = 0.02

    cfg = LLBaseSettings.Fill(make_settings(), Overrides)
    assert cfg.SIM_DT == 0.02
    assert 'SIM_DT' in cfg.AsDict()


def test_unknown_setting_is_rejected():
    with pytest.raises(ConfigError) as info:
        make_settings(None, {'SIM_DTT': 0.1})
    assert info.value.key_path == "settings.SIM_DTT"


def test_worker_resolution_order():
    saved = without_env("LDP_LAB_WORKERS")
    try:
        cfg = make_settings()
        assert cfg.ResolveWorkers() == (os.cpu_count() or 1)
        cfg.WORKERS = 2
        assert cfg.ResolveWorkers() == 2
        os.environ["LDP_LAB_WORKERS"] = "3"
        assert cfg.ResolveWorkers() == 3
        assert cfg.ResolveWorkers("5") == 5
        for bad in ("0", "many"):
            with pytest.raises(ConfigError) as info:
                cfg.ResolveWorkers(bad)
            assert info.value.key_path == "workers"
    finally:
        restore_env("LDP_LAB_WORKERS", saved)


def test_config_workers_and_preset():
    saved = without_env("LDP_LAB_WORKERS")
    try:
        exp = parse_config({"model": MODEL, "workers": 2, "preset": "quick", "seed": 9})
        assert exp.settings.ResolveWorkers() == 2
        assert exp.settings.SIM_DT == 1e-2
        assert exp.seed == 9
        assert exp.Resolved()['settings']['WORKERS'] == 2
    finally:
        restore_env("LDP_LAB_WORKERS", saved)


def test_config_workers_validated_when_env_is_set():
    saved = without_env("LDP_LAB_WORKERS")
    try:
        os.environ["LDP_LAB_WORKERS"] = "3"
        for bad in ("abc", 0):
            with pytest.raises(ConfigError) as info:
                parse_config({"model": MODEL, "workers": bad})
            assert info.value.key_path == "workers"
        assert parse_config({"model": MODEL, "workers": 2}).settings.ResolveWorkers() == 3
    finally:
        restore_env("LDP_LAB_WORKERS", saved)


def test_block_parsing():
    b = parse_block({"C": 2, "n": 50}, "exit", BLOCK_SCHEMAS['exit'])
    assert b == {"C": 2.0, "n": 50}
    assert parse_block({"C": 1.0}, "exit", BLOCK_SCHEMAS['exit'])["n"] == 1000
    for raw, key in (({"C": 1.0, "n": 2.5}, "exit.n"), ({"n": 5}, "exit.C"), ({"C": "far"}, "exit.C"),
                     ({"C": 1.0, "radius": 3}, "exit.radius")):
        with pytest.raises(ConfigError) as info:
            parse_block(raw, "exit", BLOCK_SCHEMAS['exit'])
        assert info.value.key_path == key


def test_missing_model_and_block():
    with pytest.raises(ConfigError) as info:
        parse_config({"seed": 1})
    assert info.value.key_path == "model"
    exp = parse_config({"model": MODEL})
    with pytest.raises(ConfigError) as info:
        exp.Block('sim')
    assert info.value.key_path == "sim"
    assert exp.Block('batch')['n'] == 1


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
