import csv

import numpy as np
import pytest

from tocsynth.dataset import DatasetMeta, build_samples
from tocsynth.feedback import SimConfig, euler_step, monte_carlo, replay, simulate_closed_loop
from tocsynth.nn import TrainConfig, train
from tocsynth.openloop import solve_time_optimal


@pytest.fixture(scope="module")
def model2():
    Z, U = build_samples(DatasetMeta(n=2, N_s=20, K=50, seed=1)).arrays()
    return train(Z, U, (2, 16, 1), TrainConfig(updates=3000)).model


def test_euler_step_matches_dynamics():
    Y = np.array([[1.0, 2.0, 3.0]])
    out = euler_step(Y, np.array([-1.0]), 0.1, np.array([0.0, 0.0, 1.0]))
    assert np.allclose(out, [[1.2, 2.3, 2.9]])


def test_start_inside_stop_ball(model2):
    rec = simulate_closed_loop(model2, [0.001, -0.002])
    assert rec.T_NN == 0 and rec.points == []


def test_zero_threshold_disables_fallback(model2):
    rec = simulate_closed_loop(model2, [0.5, 0.5], SimConfig(confidence_eps=0.0))
    assert rec.points and all(p.source == "network" for p in rec.points)
    assert rec.fallback_fraction == 0.0


def test_replay_is_bitwise(model2):
    for cfg in (SimConfig(), SimConfig(noise_sigma=0.3, seed=11)):
        rec = simulate_closed_loop(model2, [0.5, 0.5], cfg, run_index=4)
        assert np.array_equal(replay([0.5, 0.5], rec.controls, cfg, run_index=4), rec.states())


def test_noise_free_monte_carlo_has_no_spread(model2):
    stats = monte_carlo("net", [0.5, 0.5], SimConfig(), M=5, model=model2)
    assert np.all(stats.var == 0)
    assert np.all(stats.final_states == stats.final_states[0])


def test_monte_carlo_is_deterministic(model2):
    cfg = SimConfig(noise_sigma=0.1, seed=3, max_time=3.0)
    a = monte_carlo("net-fallback", [0.5, 0.5], cfg, M=20, model=model2)
    b = monte_carlo("net-fallback", [0.5, 0.5], cfg, M=20, model=model2)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.var, b.var)
    assert np.array_equal(a.final_states, b.final_states)


def test_single_run_equals_its_monte_carlo_slot(model2):
    cfg = SimConfig(noise_sigma=0.1, seed=3, max_time=3.0, confidence_eps=0.0)
    stats = monte_carlo("net", [0.5, 0.5], cfg, M=3, model=model2)
    rec = simulate_closed_loop(model2, [0.5, 0.5], cfg, mode="net", run_index=2)
    assert np.array_equal(stats.final_states[2], rec.final_y)


def test_open_loop_replay_noise_free_reaches_target():
    x = [0.5, 0.5]
    stats = monte_carlo("open", x, SimConfig(dt=1e-4), M=2)
    T = solve_time_optimal(x).T
    assert np.max(np.abs(stats.final_states)) < 1e-2
    assert stats.mean.shape[0] - 1 <= int(np.ceil(T / 1e-4))


def test_noise_scalings():
    assert SimConfig(noise_sigma=0.04, noise_is_variance=True, noise_scaling="direct").increment_std(0.01) == pytest.approx(0.2)
    assert SimConfig(noise_sigma=0.2, noise_scaling="sqrt_dt").increment_std(0.01) == pytest.approx(0.02)
    assert SimConfig(noise_sigma=0.2, noise_scaling="dt").increment_std(0.01) == pytest.approx(0.002)
    with pytest.raises(ValueError):
        SimConfig(noise_scaling="bogus")


def test_csv_outputs(model2, tmp_path):
    rec = simulate_closed_loop(model2, [0.5, 0.5])
    rows = list(csv.reader(open(rec.write_csv(tmp_path / "t.csv"))))
    assert rows[0] == ["tau", "y1", "y2", "u", "source"]
    assert rows[-1][-1] == "end" and len(rows) == len(rec.points) + 2
    stats = monte_carlo("net", [0.5, 0.5], SimConfig(max_time=1.0), M=2, model=model2)
    rows = list(csv.reader(open(stats.write_csv(tmp_path / "s.csv"))))
    assert rows[0] == ["tau", "mean_y1", "mean_y2", "var_y1", "var_y2"]


def test_oracle_controller_tracks_optimal_time(rng):
    cfg = SimConfig()
    for x in rng.uniform(-1, 1, (20, 2)):
        rec = simulate_closed_loop(None, x, cfg, mode="oracle")
        assert rec.T_NN is not None
        assert rec.T_NN <= solve_time_optimal(x).T + 2 * cfg.step_size(2)


def test_mode_validation(model2):
    with pytest.raises(ValueError):
        simulate_closed_loop(None, [0.5, 0.5], mode="net")
    with pytest.raises(ValueError):
        monte_carlo("net", [0.5, 0.5], M=0, model=model2)
