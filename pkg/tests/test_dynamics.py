import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symbound.bound_lab import wasserstein_w1
from symbound.dynamics import (
    Dataset,
    dumps17,
    GeneratorSpec,
    fresh_samples,
    load_dataset,
    make_dataset,
    save_dataset,
    simulate_many,
    simulate_series,
    step,
)
from symbound.errors import DatasetParseError, IntegrityError, InvalidArgumentError
from symbound.group_algebra import make_cyclic_rotation_group
from symbound.seeding import mix64

STILL = dict(omega_drift=0.0, damping_drift=0.0, noise_std=0.0, omega_spread=0.0, damping_spread=0.0)


def test_spec_validation():
    for bad in (dict(sym_break=-0.1), dict(state_bound=0.0), dict(damping0=0.0), dict(damping0=1.2),
                dict(noise_std=-1.0), dict(dim=3)):
        with pytest.raises(InvalidArgumentError):
            GeneratorSpec(**bad)


def test_spec_dict_round_trip():
    spec = GeneratorSpec(sym_break=0.2, noise_std=0.0)
    assert GeneratorSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(InvalidArgumentError):
        GeneratorSpec.from_dict({"bogus": 1})


def test_pure_rotation_preserves_norm(rng):
    spec = GeneratorSpec(**STILL, damping0=1.0)
    params = {"omega": 0.4, "damping": 1.0}
    for _ in range(20):
        x = rng.uniform(-0.5, 0.5, size=2)
        assert np.linalg.norm(step(spec, x, 3, params)) == pytest.approx(np.linalg.norm(x), abs=1e-15)


def test_symmetry_breaking_closed_form():
    # ball radius 2 keeps the clip inactive so the raw map value is visible
    spec = GeneratorSpec(**STILL, sym_break=0.3, omega0=0.0, damping0=1.0, state_bound=2.0)
    out = step(spec, np.array([1.0, 0.0]), 0, {"omega": 0.0, "damping": 1.0})
    assert np.allclose(out, [1.3, 0.0], atol=1e-15)


def test_step_clips_to_ball():
    spec = GeneratorSpec(**STILL, sym_break=0.3, omega0=0.0, damping0=1.0)
    out = step(spec, np.array([1.0, 0.0]), 0, {"omega": 0.0, "damping": 1.0})
    assert np.allclose(out, [1.0, 0.0])


@given(st.integers(0, 50), st.floats(-1, 1), st.floats(0.5, 1.0), st.sampled_from([2, 4, 8]))
def test_step_equivariant_without_breaking(t, omega, damping, order):
    spec = GeneratorSpec(sym_break=0.0)
    params = {"omega": omega, "damping": damping}
    rng = np.random.default_rng(t)
    x = rng.uniform(-0.7, 0.7, size=2)
    for g in make_cyclic_rotation_group(order).elements:
        assert np.max(np.abs(step(spec, g @ x, t, params) - g @ step(spec, x, t, params))) <= 1e-10


def test_step_not_equivariant_with_breaking():
    spec = GeneratorSpec(sym_break=0.3)
    params = {"omega": 0.3, "damping": 0.9}
    x = np.array([0.5, 0.1])
    J = make_cyclic_rotation_group(4).elements[1]
    assert np.max(np.abs(step(spec, J @ x, 1, params) - J @ step(spec, x, 1, params))) > 0.1


def test_damping_is_clamped():
    spec = GeneratorSpec(**{**STILL, "damping_drift": -1.0})
    out = step(spec, np.array([0.5, 0.0]), 10, {"omega": 0.0, "damping": 0.9})
    assert np.linalg.norm(out) <= 1e-5


def test_simulate_reproducible_and_bounded():
    spec = GeneratorSpec(noise_std=0.3)
    a = simulate_series(spec, 40, 2, 99)
    b = simulate_series(spec, 40, 2, 99)
    assert a == b
    assert a.states.shape == (41, 2)
    assert np.all(np.linalg.norm(a.states, axis=1) <= spec.state_bound + 1e-15)


def test_simulate_rejects_short_series():
    with pytest.raises(InvalidArgumentError):
        simulate_series(GeneratorSpec(), 2, 2, 0)


def test_noiseless_series_follows_closed_form():
    spec = GeneratorSpec(**STILL, damping0=0.95)
    s = simulate_series(spec, 12, 1, 5)
    c, w = s.params["damping"], s.params["omega"]
    A = c * np.array([[np.cos(w), -np.sin(w)], [np.sin(w), np.cos(w)]])
    for t in range(12):
        assert np.allclose(s.states[t + 1], A @ s.states[t], atol=1e-15)


def test_batch_simulation_matches_single():
    spec = GeneratorSpec(sym_break=0.2)
    seeds = [3, 17, 2**63 + 5]
    states, params = simulate_many(spec, 20, seeds)
    for i, sd in enumerate(seeds):
        single = simulate_series(spec, 20, 1, sd)
        assert np.array_equal(states[i], single.states)
        assert params[i] == single.params


def test_initial_state_distribution_centered():
    spec = GeneratorSpec()
    states, _ = simulate_many(spec, 1, range(1000))
    x1 = states[:, 0]
    # noise is added, so the first observation is the initial state plus N(0, 0.05^2)
    assert np.all(np.linalg.norm(x1 - 0.0, axis=1) <= 1.0)
    se = x1.std(axis=0, ddof=1) / np.sqrt(1000)
    assert np.all(np.abs(x1.mean(axis=0)) <= 3 * se)


def test_dataset_counts():
    ds = make_dataset(GeneratorSpec(), 2, 10, 3, 0)
    assert len(ds.train_samples) == 14 and len(ds.target_samples) == 2
    assert ds.windows.shape == (2, 7, 3, 2) and ds.targets.shape == (2, 7, 2)
    assert ds.horizon == 7


def test_windows_most_recent_first():
    ds = make_dataset(GeneratorSpec(), 1, 6, 2, 4)
    X = ds.states[0]  # X[s] is X_{s+1}
    z = ds.train_samples[0]
    assert z.t_index == 3
    assert np.array_equal(z.window[0], X[1]) and np.array_equal(z.window[1], X[0])
    assert np.array_equal(z.target, X[2])
    tz = ds.target_samples[0]
    assert tz.t_index == 7
    assert np.array_equal(tz.target, X[6]) and np.array_equal(tz.window[0], X[5])


def test_child_seeds_follow_mixer():
    ds = make_dataset(GeneratorSpec(), 3, 5, 1, 77)
    assert [s.seed for s in ds.series] == [mix64(77, i) for i in range(3)]


def test_adjacent_master_seeds_give_different_series():
    for s in range(100):
        a = make_dataset(GeneratorSpec(), 1, 3, 1, s)
        b = make_dataset(GeneratorSpec(), 1, 3, 1, s + 1)
        assert not np.array_equal(a.states[0, 0], b.states[0, 0])


def test_fresh_samples_cover_target_time():
    spec = GeneratorSpec()
    w, t = fresh_samples(spec, 4, 10, 2, 8)
    assert w.shape == (4, 9, 2, 2) and t.shape == (4, 9, 2)
    ds = make_dataset(spec, 4, 10, 2, 8)
    assert np.array_equal(w[:, :-1], ds.windows) and np.array_equal(t[:, -1], ds.target_states)


def test_exact_symmetry_pushforward_is_a_trajectory():
    spec = GeneratorSpec(noise_std=0.0, sym_break=0.0)
    s = simulate_series(spec, 15, 1, 21)
    for g in make_cyclic_rotation_group(4).elements:
        moved = s.states @ g.T
        for t in range(15):
            assert np.max(np.abs(step(spec, moved[t], t + 1, s.params) - moved[t + 1])) <= 1e-9


def test_asymmetry_grows_with_breaking_strength():
    c4 = make_cyclic_rotation_group(4)
    means = []
    for eps in (0.0, 0.1, 0.2, 0.4):
        vals = []
        for seed in range(20):
            ds = make_dataset(GeneratorSpec(sym_break=eps), 64, 12, 1, seed)
            pts = np.concatenate([ds.target_windows.reshape(64, -1), ds.target_states], axis=1)
            moved = np.concatenate([(ds.target_windows @ c4.elements[1].T).reshape(64, -1),
                                    ds.target_states @ c4.elements[1].T], axis=1)
            vals.append(wasserstein_w1(pts, moved))
        means.append(np.mean(vals))
    assert all(b >= a for a, b in zip(means, means[1:]))


# -- serialization --------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    ds = make_dataset(GeneratorSpec(sym_break=0.1), 3, 8, 2, 11)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back == ds
    assert np.array_equal(back.windows, ds.windows)
    header = json.loads(path.read_text().splitlines()[0])
    assert set(header) == {"N", "T", "k", "spec"}


def test_seventeen_digit_floats(tmp_path):
    assert dumps17({"a": [1 / 3, 0.1]}) == '{"a":[0.33333333333333331,0.10000000000000001]}'
    ds = make_dataset(GeneratorSpec(), 1, 3, 1, 0)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    states = json.loads(path.read_text().splitlines()[1])["states"]
    assert np.array_equal(np.array(states), ds.states[0])


def test_truncated_file_names_last_good_line(tmp_path):
    ds = make_dataset(GeneratorSpec(), 3, 5, 1, 0)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    text = path.read_text()
    path.write_text(text[: len(text) - 40])
    with pytest.raises(DatasetParseError) as info:
        load_dataset(path)
    assert info.value.line == 4 and info.value.last_good_line == 3
    assert "last good line: 3" in str(info.value)


def test_header_count_mismatch(tmp_path):
    ds = make_dataset(GeneratorSpec(), 2, 5, 1, 0)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:2]) + "\n")
    with pytest.raises(IntegrityError, match="N=2"):
        load_dataset(path)


def test_ball_violation_detected(tmp_path):
    ds = make_dataset(GeneratorSpec(), 1, 5, 1, 0)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["states"][2] = [5.0, 0.0]
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IntegrityError, match="ball"):
        load_dataset(path)


def test_dataset_needs_series():
    with pytest.raises(InvalidArgumentError):
        Dataset([], 1)
