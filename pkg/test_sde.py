#!/usr/bin/env python
"""
Tamed Euler simulation, the coupled perturbed process and reproducibility
across workers and chunk sizes
"""

import sys

import numpy as np
import pytest

# Import from src/ directory
sys.path.insert(0, 'src')
from ldp_lab.action import Path
from ldp_lab.errors import DivergenceError, InvalidArgumentError
from ldp_lab.model import cubic_example_model, gradient_polynomial_model, linear_model
from ldp_lab.rng import STREAM_B, STREAM_W, brownian_increments, chunk_increments
from ldp_lab.sde import (SimConfig, deviation_until_exit, first_exit_time, simulate, simulate_perturbed,
                         terminal_states)


def quartic_well(x0):
    """b = -x^3 with unit additive noise"""
    return gradient_polynomial_model(x0, [0.0, 0.0, 0.0, 0.0, 0.25])


def test_silent_noise_follows_tamed_recurrence():
    model = linear_model([2.0], [[-3.0]], diffusion_matrix=[[0.0]])
    cfg = SimConfig(epsilon=1.0, T=1.0, dt=0.01, seed=7)
    path = simulate(model, cfg)
    x = np.array([2.0])
    expected = [x.copy()]
    for _ in range(cfg.n_steps):
        b = -3.0 * x
        x = x + cfg.dt * b / (1.0 + cfg.dt * np.linalg.norm(b))
        expected.append(x.copy())
    assert np.allclose(path.states, np.array(expected), rtol=1e-14, atol=0.0)


def test_zero_epsilon_tracks_the_flow():
    model = cubic_example_model([1.0])
    path = simulate(model, SimConfig(epsilon=0.0, T=1.0, dt=1e-3))
    assert abs(path.states[-1, 0] - 1.0 / np.sqrt(3.0)) <= 1e-2
    assert np.all(np.diff(path.states[:, 0]) < 0.0)


def test_cubic_started_at_origin_stays_there():
    model = cubic_example_model([0.0])
    states, diverged = terminal_states(model, SimConfig(epsilon=1.0, T=1.0, dt=0.01), n=50)
    assert np.all(states == 0.0)
    assert not diverged.any()


def test_symmetric_drift_has_zero_mean():
    states, _ = terminal_states(quartic_well([0.0]), SimConfig(epsilon=1.0, T=1.0, dt=0.01, seed=11), n=4000)
    x = states[:, 0]
    se = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(x.mean()) <= 4.0 * se


def test_workers_and_chunks_do_not_change_results():
    cfg = SimConfig(epsilon=0.7, T=0.5, dt=0.01, seed=3)
    model = quartic_well([0.5])
    reference, _ = terminal_states(model, cfg, n=40, workers=1, chunk_size=40)
    for workers, chunk in ((1, 7), (4, 7), (3, 1)):
        states, _ = terminal_states(model, cfg, n=40, workers=workers, chunk_size=chunk)
        assert np.array_equal(states, reference)
    model2 = cubic_example_model([0.5, -0.5])
    one, _ = terminal_states(model2, cfg, n=30, workers=1, chunk_size=8)
    many, _ = terminal_states(model2, cfg, n=30, workers=4, chunk_size=8)
    assert np.array_equal(one, many)


def test_single_path_matches_batch_row():
    cfg = SimConfig(epsilon=0.5, T=0.2, dt=0.01, seed=5)
    model = quartic_well([0.5])
    states, _ = terminal_states(model, cfg, n=10, chunk_size=4)
    for i in (0, 3, 9):
        assert np.array_equal(simulate(model, cfg, path_index=i).states[-1], states[i])


def test_noise_blocks_are_per_path():
    block = chunk_increments(9, 5, 3, STREAM_B, 20, 2, 0.01)
    assert np.array_equal(block[1], brownian_increments(9, 6, STREAM_B, 20, 2, 0.01))
    assert not np.array_equal(block[1], brownian_increments(9, 6, STREAM_W, 20, 2, 0.01))


def test_tamed_and_plain_agree_at_small_dt():
    model = cubic_example_model([1.0])
    dt = 1e-3
    tamed = simulate(model, SimConfig(epsilon=0.0, T=1.0, dt=dt))
    plain = simulate(model, SimConfig(epsilon=0.0, T=1.0, dt=dt, scheme="plain"))
    assert np.max(np.abs(tamed.states - plain.states)) <= 10 * dt


def test_plain_scheme_divergence_is_reported():
    model = cubic_example_model([10.0])
    cfg = SimConfig(epsilon=0.0, T=5.0, dt=0.5, scheme="plain")
    with pytest.raises(DivergenceError) as info:
        simulate(model, cfg)
    assert info.value.step == 6
    states, diverged = terminal_states(model, cfg, n=3)
    assert diverged.all()
    assert np.all(states == 10.0)
    tamed = simulate(model, SimConfig(epsilon=0.0, T=5.0, dt=0.5))
    assert np.all(np.isfinite(tamed.states))


def test_zero_beta_coupling_is_identical():
    cfg = SimConfig(epsilon=0.8, T=1.0, dt=0.01, seed=2)
    coupled = simulate_perturbed(quartic_well([0.3]), cfg, beta=0.0)
    assert np.array_equal(coupled.base.states, coupled.perturbed.states)
    assert coupled.sup_deviation == 0.0


def test_perturbation_is_scaled_w_stream():
    model = linear_model([0.0], [[0.0]], diffusion_matrix=[[0.0]])
    cfg = SimConfig(epsilon=0.5, T=1.0, dt=0.01, seed=4)
    beta = 0.25
    coupled = simulate_perturbed(model, cfg, beta=beta)
    dW = cfg.epsilon * np.sqrt(beta) * brownian_increments(cfg.seed, 0, STREAM_W, cfg.n_steps, 1, cfg.dt)
    assert np.all(coupled.base.states == 0.0)
    assert np.allclose(coupled.perturbed.states[1:, 0], np.cumsum(dW[:, 0]), rtol=0.0, atol=1e-14)


def test_deviation_grows_with_beta():
    model = linear_model([0.0], [[-1.0]])
    cfg = SimConfig(epsilon=1.0, T=1.0, dt=0.01, seed=8, scheme="plain")
    devs = [simulate_perturbed(model, cfg, beta=b).sup_deviation for b in (0.01, 0.1, 0.5, 1.0)]
    assert all(a < b for a, b in zip(devs, devs[1:]))


def test_deviation_stops_at_first_exit():
    base = np.zeros((4, 1))
    perturbed = np.array([[0.0], [0.1], [2.0], [0.5]])
    assert deviation_until_exit(base, perturbed) == 2.0
    assert deviation_until_exit(base, perturbed, C=1.5) == 2.0
    assert deviation_until_exit(base, np.array([[0.0], [0.3], [0.2], [5.0]]), C=0.25) == pytest.approx(0.3)


def test_first_exit_time_examples():
    path = Path(T=3.0, n_steps=3, states=[0.0, 0.5, 1.0, 1.5])
    assert first_exit_time(path, 1.0) == 2.0
    assert first_exit_time(path, 0.4) == 1.0
    assert first_exit_time(path, 2.0) == float("inf")
    with pytest.raises(InvalidArgumentError):
        first_exit_time(path, 0.0)


def test_sim_config_validation_names_the_key():
    cases = [
        (dict(epsilon=-1.0, T=1.0), "epsilon"),
        (dict(epsilon=1.0, T=0.0), "T"),
        (dict(epsilon=1.0, T=1.0, dt=-0.001), "dt"),
        (dict(epsilon=1.0, T=1.0, dt=0.3), "dt"),
        (dict(epsilon=1.0, T=1.0, scheme="rk4"), "scheme"),
    ]
    for kwargs, key in cases:
        with pytest.raises(InvalidArgumentError) as info:
            SimConfig(**kwargs)
        assert info.value.key_path == key
    assert SimConfig(epsilon=0.1, T=1.0, dt=0.001).n_steps == 1000


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
