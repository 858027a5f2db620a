"""Model validation, exact occupancy solves, and trajectory sampling."""

import numpy as np
import pytest

from valuedice import (NumericalError, Occupancy, TabularMdp, balance_residual,
                       build_ring_mdp, compute_occupancy, load_mdp,
                       occupancy_monte_carlo, random_mdp, sample_trajectory,
                       save_mdp, softmax_policy, sparse_expert_policy,
                       stochastic_expert_policy)


def _uniform_policy(n_states, n_actions=2):
    return softmax_policy(np.zeros((n_states, n_actions)))


def _random_policy(rng, n_states, n_actions):
    return softmax_policy(rng.normal(scale=1.5, size=(n_states, n_actions)))


# --- validate_mdp -----------------------------------------------------------

def test_validate_accepts_ring():
    from valuedice import validate_mdp
    assert validate_mdp(build_ring_mdp(8)) == []


def test_validate_names_broken_row():
    from valuedice import validate_mdp
    mdp = build_ring_mdp(4)
    mdp.transition[2, 1] *= 0.9
    problems = validate_mdp(mdp)
    assert len(problems) == 1
    assert "state 2" in problems[0] and "action 1" in problems[0]


def test_validate_rejects_gamma_one():
    from valuedice import validate_mdp
    mdp = build_ring_mdp(3)
    mdp.gamma = 1.0
    assert any("gamma must be < 1" in p for p in validate_mdp(mdp))


def test_validate_rejects_negative_probability():
    from valuedice import validate_mdp
    mdp = build_ring_mdp(3)
    mdp.transition[0, 0, 1] = -0.25
    mdp.transition[0, 0, 2] = 1.25
    assert any("negative" in p for p in validate_mdp(mdp))


def test_validate_rejects_shape_mismatch():
    from valuedice import validate_mdp
    bad = TabularMdp(3, 2, np.full((2, 2, 2), 0.5), np.array([1.0, 0.0, 0.0]), 0.9)
    problems = validate_mdp(bad)
    assert len(problems) == 1 and "shape" in problems[0]


def test_validate_rejects_initial_dist_sum():
    from valuedice import validate_mdp
    mdp = build_ring_mdp(3, initial_dist=np.array([0.5, 0.4, 0.0]))
    assert any("initial_dist sums" in p for p in validate_mdp(mdp))


# --- softmax_policy ---------------------------------------------------------

def test_softmax_uniform_at_zero_logits():
    assert np.array_equal(_uniform_policy(3).probs(), np.full((3, 2), 0.5))


def test_softmax_closed_form():
    p = softmax_policy(np.array([[np.log(3.0), 0.0]])).probs()
    np.testing.assert_allclose(p, [[0.75, 0.25]], atol=1e-15)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=(5, 3))
    shifted = logits.copy()
    shifted[2] += 11.5
    np.testing.assert_allclose(softmax_policy(logits).probs(),
                               softmax_policy(shifted).probs(), atol=1e-15)


def test_softmax_rows_sum_to_one_and_positive():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = _random_policy(rng, 6, 4).probs()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert p.min() > 0.0


def test_softmax_rejects_bad_input():
    with pytest.raises(ValueError):
        softmax_policy(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        softmax_policy(np.array([[0.0, np.inf]]))


def test_policy_log_probs_and_greedy():
    policy = stochastic_expert_policy(0.75, 8)
    np.testing.assert_allclose(np.exp(policy.log_probs()), policy.probs(), atol=1e-14)
    assert policy.greedy_actions()[0] == 0 and policy.greedy_actions()[4] == 1


# --- compute_occupancy ------------------------------------------------------

def test_occupancy_degenerate_single_state():
    mdp = TabularMdp(1, 1, np.ones((1, 1, 1)), np.array([1.0]), 0.7)
    d = compute_occupancy(mdp, softmax_policy(np.zeros((1, 1))))
    assert d.values[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_occupancy_two_state_symmetric_quarters():
    mdp = TabularMdp(2, 2, np.full((2, 2, 2), 0.5), np.array([0.5, 0.5]), 0.9)
    d = compute_occupancy(mdp, _uniform_policy(2))
    np.testing.assert_allclose(d.values, 0.25, atol=1e-12)


def test_occupancy_matches_power_series():
    # independent oracle: d = (1-gamma) sum_t gamma^t P_t(s) pi(a|s)
    mdp = random_mdp(6, 3, 3, seed=11, gamma=0.9)
    policy = _random_policy(np.random.default_rng(5), 6, 3)
    pi = policy.probs()
    step = np.einsum("sa,sat->st", pi, mdp.transition)
    p = mdp.initial_dist.copy()
    acc = np.zeros(6)
    w = 1.0 - mdp.gamma
    for _ in range(2000):  # gamma^2000 ~ 1e-92, tail is exactly zero in floats
        acc += w * p
        p = p @ step
        w *= mdp.gamma
    oracle = acc[:, None] * pi
    d = compute_occupancy(mdp, policy)
    np.testing.assert_allclose(d.values, oracle, atol=1e-10)


def test_occupancy_properties_random_instances():
    rng = np.random.default_rng(42)
    for case in range(100):
        n_s = int(rng.integers(2, 11))
        n_a = int(rng.integers(2, 5))
        mdp = random_mdp(n_s, n_a, min(2, n_s), seed=1000 + case,
                         gamma=float(rng.uniform(0.1, 0.99)))
        policy = _random_policy(rng, n_s, n_a)
        d = compute_occupancy(mdp, policy)
        assert abs(d.values.sum() - 1.0) < 1e-9
        assert d.values.min() >= 0.0
        assert balance_residual(mdp, policy, d) < 1e-9


def test_occupancy_solver_guard_fires_on_garbage():
    mdp = build_ring_mdp(4)
    bad = Occupancy(np.full((4, 2), 0.125))
    # residual check is reachable through balance_residual on a wrong table
    assert balance_residual(mdp, stochastic_expert_policy(0.75, 4), bad) > 1e-3
    with pytest.raises(NumericalError):
        broken = build_ring_mdp(4)
        broken.transition = np.zeros((4, 2, 4))
        broken.transition[:, :, 0] = np.nan
        compute_occupancy(broken, _uniform_policy(4))


# --- occupancy_monte_carlo --------------------------------------------------

def test_monte_carlo_degenerate_exact():
    mdp = TabularMdp(1, 1, np.ones((1, 1, 1)), np.array([1.0]), 0.5)
    d = occupancy_monte_carlo(mdp, softmax_policy(np.zeros((1, 1))), 100, seed=3)
    assert d.values[0, 0] == 1.0


def test_monte_carlo_deterministic_given_seed():
    mdp = build_ring_mdp(8)
    policy = stochastic_expert_policy()
    a = occupancy_monte_carlo(mdp, policy, 20_000, seed=9)
    b = occupancy_monte_carlo(mdp, policy, 20_000, seed=9)
    assert np.array_equal(a.values, b.values)


def test_monte_carlo_close_at_one_million():
    mdp = build_ring_mdp(8)
    policy = stochastic_expert_policy()
    exact = compute_occupancy(mdp, policy)
    mc = occupancy_monte_carlo(mdp, policy, 1_000_000, seed=0)
    dev = np.abs(mc.values - exact.values)
    assert dev.max() < 5e-3
    # each cell within 3 standard errors of the binomial count
    se = np.sqrt(exact.values * (1.0 - exact.values) / 1e6)
    assert np.all(dev <= 3.0 * se + 1e-12)


def test_monte_carlo_error_shrinks_with_samples():
    mdp = build_ring_mdp(8)
    policy = stochastic_expert_policy()
    exact = compute_occupancy(mdp, policy).values
    schedule = (1_000, 31_623, 1_000_000)
    mean_err = []
    for n in schedule:
        errs = [np.abs(occupancy_monte_carlo(mdp, policy, n, seed=s).values
                       - exact).max() for s in range(10)]
        mean_err.append(np.mean(errs))
    assert mean_err[0] > mean_err[1] > mean_err[2]


def test_monte_carlo_rejects_zero_samples():
    with pytest.raises(ValueError):
        occupancy_monte_carlo(build_ring_mdp(3), _uniform_policy(3), 0, seed=0)


# --- sample_trajectory ------------------------------------------------------

def test_trajectory_shapes_and_validity():
    mdp = random_mdp(5, 2, 2, seed=2)
    policy = _random_policy(np.random.default_rng(3), 5, 2)
    traj = sample_trajectory(mdp, policy, 30, seed=4)
    assert traj.horizon == 30
    assert len(traj.states) == 31 and len(traj.actions) == 30
    for t in range(30):
        assert mdp.transition[traj.states[t], traj.actions[t], traj.states[t + 1]] > 0.0


def test_trajectory_deterministic_given_seed():
    mdp = build_ring_mdp(8)
    policy = stochastic_expert_policy()
    a = sample_trajectory(mdp, policy, 50, seed=21)
    b = sample_trajectory(mdp, policy, 50, seed=21)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)


def test_trajectory_forced_path_under_deterministic_policy():
    mdp = build_ring_mdp(8)
    traj = sample_trajectory(mdp, sparse_expert_policy(), 9, seed=123)
    # 0 -> 1 -> 2 then the 1 <-> 2 cycle, regardless of seed
    assert list(traj.states) == [0, 1, 2, 1, 2, 1, 2, 1, 2, 1]
    assert set(traj.states.tolist()) <= {0, 1, 2}


def test_trajectory_rejects_zero_horizon():
    with pytest.raises(ValueError):
        sample_trajectory(build_ring_mdp(3), _uniform_policy(3), 0, seed=0)


# --- save / load ------------------------------------------------------------

def test_mdp_roundtrip(tmp_path):
    mdp = random_mdp(4, 3, 2, seed=8, gamma=0.8)
    path = tmp_path / "model.json"
    save_mdp(mdp, path)
    back = load_mdp(path)
    assert back.n_states == 4 and back.n_actions == 3 and back.gamma == 0.8
    np.testing.assert_array_equal(back.transition, mdp.transition)
    np.testing.assert_array_equal(back.initial_dist, mdp.initial_dist)


def test_load_rejects_invalid_file(tmp_path):
    mdp = build_ring_mdp(3)
    mdp.transition[0, 0] *= 0.5
    path = tmp_path / "broken.json"
    save_mdp(mdp, path)
    with pytest.raises(ValueError, match="invalid mdp file"):
        load_mdp(path)


def test_load_rejects_missing_field(tmp_path):
    path = tmp_path / "partial.json"
    path.write_text('{"n_states": 2, "n_actions": 1}')
    with pytest.raises(ValueError, match="missing field"):
        load_mdp(path)
