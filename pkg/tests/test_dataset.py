import json

import numpy as np
import pytest

from tocsynth.dataset import (
    Dataset,
    DatasetMeta,
    Sample,
    build_dataset,
    build_samples,
    generate_trajectory_samples,
    read_dataset,
    sample_initial_conditions,
)
from tocsynth.openloop import SwitchingSolution, control_at, solve_time_optimal


def test_initial_conditions_deterministic_and_bounded():
    a = sample_initial_conditions(2, 3, seed=0)
    b = sample_initial_conditions(2, 3, seed=0)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    X = np.array(sample_initial_conditions(3, 200, seed=4, bounds=[(-1, 0), (0, 2), (-0.5, 0.5)], grid=2**-10))
    assert np.all(X >= [-1, 0, -0.5]) and np.all(X <= [0, 2, 0.5])
    assert np.all(X * 2**10 == np.round(X * 2**10))


def test_initial_conditions_are_centred():
    X = np.array(sample_initial_conditions(2, 100_000, seed=1))
    assert np.all(np.abs(X.mean(axis=0)) < 0.01)


def test_empty_bounds_rejected():
    with pytest.raises(ValueError):
        sample_initial_conditions(2, 3, bounds=(1, 1))


def test_trajectory_samples_for_hand_solution():
    sol = SwitchingSolution(-1, (1.0, 1.0), 2.0)
    samples = generate_trajectory_samples([1.0, 0.0], sol, 100)
    assert len(samples) == 101
    assert samples[0].u == -1
    for k, s in enumerate(samples[1:], start=1):
        assert s.u == (-1 if 2.0 * k / 100 < 1.0 else 1)
    assert np.max(np.abs(samples[-1].z)) <= 1e-12
    ends = generate_trajectory_samples([1.0, 0.0], sol, 1)
    assert [s.u for s in ends] == [-1, 1]


def test_zero_time_gives_single_sample():
    sol = SwitchingSolution(1, (0.0, 0.0), 0.0)
    assert generate_trajectory_samples([0.0, 0.0], sol, 10) == [Sample((0.0, 0.0), 1)]


def test_labels_agree_with_fresh_solves(rng):
    x = rng.uniform(-1, 1, 3)
    sol = solve_time_optimal(x)
    switches = sol.switch_times
    samples = generate_trajectory_samples(x, sol, 20)
    for k, s in enumerate(samples[1:-1], start=1):
        tau = sol.T * k / 20
        if np.min(np.abs(switches - tau)) < 1e-6:
            continue
        assert control_at(solve_time_optimal(s.z), 0.0) == s.u


def test_sample_count_and_roundtrip(tmp_path):
    meta = DatasetMeta(n=2, N_s=50, K=100, seed=0)
    ds = build_dataset(meta, tmp_path / "d.jsonl")
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    assert len(ds) == meta.max_entries - 101 * meta.skipped_count
    assert len(lines) == len(ds) + 1
    assert json.loads(lines[0])["meta"]["N_s"] == 50
    back = read_dataset(tmp_path / "d.jsonl")
    assert back.samples == ds.samples
    assert back.meta.to_dict() == ds.meta.to_dict()
    _, U = ds.arrays()
    assert abs(np.mean(U == 1) - 0.5) <= 0.05 + 0.1  # 50 trajectories: loose balance


def test_files_are_byte_identical(tmp_path):
    build_dataset(DatasetMeta(n=2, N_s=5, K=10, seed=3), tmp_path / "a.jsonl")
    build_dataset(DatasetMeta(n=2, N_s=5, K=10, seed=3), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_parallel_build_matches_serial():
    serial = build_samples(DatasetMeta(n=2, N_s=8, K=5, seed=2))
    parallel = build_samples(DatasetMeta(n=2, N_s=8, K=5, seed=2), workers=2)
    assert serial.samples == parallel.samples


def test_antisymmetry(rng):
    for x in rng.uniform(-1, 1, (20, 2)):
        pos = generate_trajectory_samples(x, solve_time_optimal(x), 10)
        neg = generate_trajectory_samples(-x, solve_time_optimal(-x), 10)
        for a, b in zip(pos, neg):
            assert a.u == -b.u
            assert np.allclose(a.z, -np.array(b.z), atol=1e-9)


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample((0.0, 0.0), 0)
    with pytest.raises(ValueError):
        Sample((np.inf, 0.0), 1)


def test_reader_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"z": [0, 0], "u": 1}\n')
    with pytest.raises(ValueError):
        read_dataset(p)
    p.write_text("")
    with pytest.raises(ValueError):
        read_dataset(p)
