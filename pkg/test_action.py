#!/usr/bin/env python
"""
Action functional on grid paths: admissibility, zero-action flows,
scalar/pseudoinverse agreement, regularization and path files
"""

import os
import sys
import tempfile

import numpy as np
import pytest

# Import from src/ directory
sys.path.insert(0, 'src')
from ldp_lab.action import (ACTION_INFINITY, Path, finite_difference_velocity, flow_path, rate_functional,
                            rate_functional_regularized, rate_functional_scalar, read_path_csv, resample_path,
                            straight_line_path, write_path_csv)
from ldp_lab.errors import InvalidArgumentError
from ldp_lab.model import cubic_example_model, linear_model


def exp_decay_path(x0, T, n_steps):
    t = np.arange(n_steps + 1) * (T / n_steps)
    return Path(T=T, n_steps=n_steps, states=x0 * np.exp(-t))


def test_velocity_examples():
    assert np.all(finite_difference_velocity(Path(T=1.0, n_steps=4, states=np.ones(5))) == 0.0)
    ramp = Path(T=1.0, n_steps=4, states=np.arange(5) * 0.25)
    assert np.allclose(finite_difference_velocity(ramp), 1.0)
    assert np.allclose(finite_difference_velocity(Path(T=0.5, n_steps=1, states=[0.0, 1.0])), [[2.0]])


def test_path_validation():
    with pytest.raises(InvalidArgumentError):
        Path(T=1.0, n_steps=3, states=np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        Path(T=0.0, n_steps=1, states=np.zeros(2))


def test_constant_path_at_equilibrium_is_free():
    model = cubic_example_model([0.0])
    res = rate_functional(model, Path(T=1.0, n_steps=10, states=np.zeros(11)))
    assert res.admissible
    assert res.value == 0.0


def test_zero_action_flows():
    for model in (cubic_example_model([1.0]), linear_model([1.0], [[-1.0]])):
        path = flow_path(model, T=1.0, n_steps=2000)
        res = rate_functional(model, path)
        assert res.admissible
        assert res.value <= 1e-4
    res = rate_functional(linear_model([1.0], [[-1.0]]), exp_decay_path(1.0, 1.0, 1000))
    assert res.value <= 1e-5


def test_off_range_velocity_is_infinite():
    model = linear_model([0.0, 0.0], np.zeros((2, 2)), diffusion_matrix=np.diag([1.0, 0.0]))
    path = straight_line_path([0.0, 0.0], [0.0, 1.0], T=1.0, n_steps=10)
    res = rate_functional(model, path)
    assert not res.admissible
    assert res.value == ACTION_INFINITY
    assert res.divergent_nodes == list(range(10))


def test_start_mismatch_is_infinite():
    model = linear_model([0.0], [[-1.0]])
    res = rate_functional(model, straight_line_path([0.5], [1.0], T=1.0, n_steps=10))
    assert res.start_mismatch == pytest.approx(0.5)
    assert res.value == ACTION_INFINITY


def test_scalar_formula_agrees_with_pseudoinverse():
    model = cubic_example_model([0.5])
    path = exp_decay_path(0.5, 1.0, 200)
    full = rate_functional(model, path).value
    scalar = rate_functional_scalar(model, path)
    assert full > 0.0
    assert scalar == pytest.approx(full, rel=1e-9)


def test_scalar_zero_over_zero():
    silent = linear_model([1.0], [[-1.0]], diffusion_matrix=[[0.0]])
    assert rate_functional_scalar(silent, exp_decay_path(1.0, 1.0, 1000)) == pytest.approx(0.0, abs=1e-12)
    moving = linear_model([1.0], [[-1.0]], diffusion_matrix=[[0.0]])
    assert rate_functional_scalar(moving, Path(T=1.0, n_steps=10, states=np.ones(11))) == ACTION_INFINITY


def test_silent_node_tolerances_differ():
    still = linear_model([0.0], [[0.0]], diffusion_matrix=[[0.0]])
    creeping = Path(T=1.0, n_steps=10, states=np.linspace(0.0, 1e-8, 11))
    assert rate_functional_scalar(still, creeping) == 0.0
    result = rate_functional(still, creeping)
    assert result.value == ACTION_INFINITY
    assert result.divergent_nodes == list(range(10))


def test_regularized_bounds_and_limit():
    model = linear_model([0.0], [[-1.0]])
    path = straight_line_path([0.0], [1.0], T=2.0, n_steps=100)
    exact = rate_functional(model, path).value
    previous = 0.0
    for beta in (10.0, 1.0, 0.1, 1e-3, 1e-6):
        value = rate_functional_regularized(model, path, beta)
        assert value >= previous
        previous = value
    assert abs(previous - exact) <= 2e-6 * exact
    unweighted = rate_functional_regularized(linear_model([0.0], [[-1.0]], diffusion_matrix=[[0.0]]), path, 1.0)
    assert rate_functional_regularized(model, path, 100.0) <= unweighted / 100.0 * (1.0 + 1e-12)


def test_regularized_divergent_path_grows_without_bound():
    model = linear_model([0.0, 0.0], np.zeros((2, 2)), diffusion_matrix=np.diag([1.0, 0.0]))
    path = straight_line_path([0.0, 0.0], [0.0, 1.0], T=1.0, n_steps=10)
    assert rate_functional_regularized(model, path, 1e-8) > 1e6


def test_refinement_changes_little():
    model = linear_model([0.0], [[-1.0]])
    t = lambda n: np.arange(n + 1) * (2.0 / n)
    coarse = Path(T=2.0, n_steps=200, states=np.sinh(t(200)) / np.sinh(2.0))
    fine = Path(T=2.0, n_steps=400, states=np.sinh(t(400)) / np.sinh(2.0))
    dt = 2.0 / 200
    assert abs(rate_functional(model, coarse).value - rate_functional(model, fine).value) <= dt


def test_path_csv_round_trip():
    path = straight_line_path([0.0, 1.0], [1.0, -1.0], T=0.3, n_steps=3)
    with tempfile.TemporaryDirectory() as tmp:
        filepath = os.path.join(tmp, "path.csv")
        write_path_csv(path, filepath)
        with open(filepath) as f:
            assert f.readline().strip() == "t,x1,x2"
        back = read_path_csv(filepath)
    assert back.n_steps == 3
    assert back.T == pytest.approx(0.3)
    assert np.array_equal(back.states, path.states)


def test_resample_keeps_endpoints():
    path = straight_line_path([0.0], [2.0], T=1.0, n_steps=4)
    fine = resample_path(path, 16)
    assert fine.n_steps == 16
    assert fine.states[0, 0] == 0.0 and fine.states[-1, 0] == 2.0
    assert np.allclose(fine.states[:, 0], 2.0 * fine.times)


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
