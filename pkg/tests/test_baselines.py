"""Behavioral cloning fits and the tabular adversarial baseline."""

import numpy as np
import pytest
from scipy.special import expit

from valuedice import (Discriminator, NumericalError, Occupancy,
                       TrainingConfig, Transition, bc_fit, build_ring_mdp,
                       compute_occupancy, gail_objective,
                       gail_optimal_discriminator, gail_train,
                       grad_discriminator, softmax_policy,
                       sparse_expert_dataset, stochastic_expert_policy)
from valuedice.environments import ExpertDataset


def _counts_dataset(counts):
    """Dataset with the given per-(state, action) transition counts."""
    ts = []
    for (s, a), n in counts.items():
        ts.extend(Transition(s, a, s, s) for _ in range(n))
    return ExpertDataset(transitions=ts)


# --- behavioral cloning -----------------------------------------------------

def test_bc_point_mass_state():
    demos = _counts_dataset({(0, 1): 20})
    policy = bc_fit(demos, 1e-4, n_states=1, n_actions=2)
    assert policy.probs()[0, 1] > 0.99


def test_bc_empirical_mle_at_zero_penalty():
    demos = _counts_dataset({(0, 0): 3, (0, 1): 1})
    policy = bc_fit(demos, 0.0, n_states=1, n_actions=2)
    np.testing.assert_allclose(policy.probs()[0], [0.75, 0.25], atol=1e-9)


def test_bc_unseen_states_exactly_uniform():
    demos = _counts_dataset({(0, 0): 5, (2, 1): 3})
    policy = bc_fit(demos, 1e-4, n_states=6, n_actions=2)
    p = policy.probs()
    for s in (1, 3, 4, 5):
        np.testing.assert_array_equal(p[s], [0.5, 0.5])
        np.testing.assert_array_equal(policy.logits[s], [0.0, 0.0])


def test_bc_unseen_rows_immune_to_data_elsewhere():
    small = _counts_dataset({(0, 0): 4})
    big = _counts_dataset({(0, 0): 4, (1, 1): 50, (2, 0): 7})
    p_small = bc_fit(small, 1e-3, n_states=5, n_actions=2).probs()
    p_big = bc_fit(big, 1e-3, n_states=5, n_actions=2).probs()
    for s in (3, 4):
        np.testing.assert_array_equal(p_small[s], [0.5, 0.5])
        np.testing.assert_array_equal(p_big[s], [0.5, 0.5])


def test_bc_penalty_schedule_approaches_mle_monotonically():
    demos = _counts_dataset({(0, 0): 6, (0, 1): 2})
    target = np.array([0.75, 0.25])
    gaps = []
    for weight in (1e-2, 1e-3, 1e-4):
        p = bc_fit(demos, weight, n_states=1, n_actions=2).probs()[0]
        gaps.append(np.abs(p - target).max())
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_bc_multistate_counts():
    demos = _counts_dataset({(0, 0): 9, (0, 1): 1, (1, 0): 2, (1, 1): 2})
    p = bc_fit(demos, 0.0, n_states=2, n_actions=2).probs()
    np.testing.assert_allclose(p[0], [0.9, 0.1], atol=1e-9)
    np.testing.assert_allclose(p[1], [0.5, 0.5], atol=1e-9)


def test_bc_validation():
    with pytest.raises(ValueError, match="nonempty"):
        bc_fit(ExpertDataset(), 1e-4)
    with pytest.raises(ValueError, match="nonnegative"):
        bc_fit(_counts_dataset({(0, 0): 1}), -1e-4)


def test_bc_on_sparse_ring_demonstrations():
    mdp = build_ring_mdp(8)
    demos = sparse_expert_dataset(mdp, 40, 40, seed=0)
    policy = bc_fit(demos, 1e-4, mdp.n_states, mdp.n_actions)
    p = policy.probs()
    # state 0 only appears once per trajectory, so the penalty bites harder
    assert p[0, 0] > 0.95 and p[1, 0] > 0.99 and p[2, 1] > 0.99
    for s in range(3, 8):
        np.testing.assert_array_equal(p[s], [0.5, 0.5])


# --- discriminator ----------------------------------------------------------

def _ring_pair():
    mdp = build_ring_mdp(8)
    d_e = compute_occupancy(mdp, stochastic_expert_policy(0.75, 8))
    d_p = compute_occupancy(mdp, softmax_policy(np.zeros((8, 2))))
    return mdp, d_e, d_p


def test_discriminator_h_stays_open_interval():
    # +-30 keeps the complementary mass representable in float64
    h = Discriminator(np.array([[-30.0, 30.0]])).h()
    assert 0.0 < h[0, 0] < h[0, 1] < 1.0


def test_gail_objective_at_half():
    _, d_e, d_p = _ring_pair()
    val = gail_objective(Discriminator(np.zeros((8, 2))), d_e, d_p)
    assert val == pytest.approx(-2.0 * np.log(2.0), abs=1e-12)


def test_gail_objective_symmetric_optimum():
    _, d_e, _ = _ring_pair()
    base = gail_objective(Discriminator(np.zeros((8, 2))), d_e, d_e)
    rng = np.random.default_rng(0)
    for _ in range(100):
        z = rng.normal(scale=0.5, size=(8, 2))
        assert gail_objective(Discriminator(z), d_e, d_e) <= base + 1e-12


def test_gail_optimum_is_local_max():
    _, d_e, d_p = _ring_pair()
    star = gail_optimal_discriminator(d_e, d_p)
    best = gail_objective(star, d_e, d_p)
    rng = np.random.default_rng(1)
    for _ in range(100):
        z = star.logits + rng.normal(scale=0.1, size=(8, 2))
        assert gail_objective(Discriminator(z), d_e, d_p) <= best + 1e-12


def test_gail_optimal_closed_forms():
    same = Occupancy(np.full((4, 2), 0.125))
    np.testing.assert_allclose(gail_optimal_discriminator(same, same).h(), 0.5,
                               atol=1e-9)
    # expert carries twice the policy mass on a shared support
    d_p = Occupancy(np.full((4, 2), 0.125))
    d_e = Occupancy(np.array([[0.25, 0.25], [0.25, 0.25], [0, 0], [0, 0.0]]))
    disc = gail_optimal_discriminator(d_e, d_p)
    np.testing.assert_allclose(disc.logits[:2], np.log(2.0), atol=1e-9)
    np.testing.assert_allclose(disc.h()[:2], 2.0 / 3.0, atol=1e-9)


def test_gail_gradient_ascent_reaches_optimum():
    _, d_e, d_p = _ring_pair()
    z = np.zeros((8, 2))
    for _ in range(4000):
        z += 4.0 * grad_discriminator(Discriminator(z), d_e, d_p)
    target = expit(np.log(d_e.values) - np.log(d_p.values))
    assert np.abs(Discriminator(z).h() - target).max() < 1e-10


def test_gail_gradient_matches_finite_differences():
    _, d_e, d_p = _ring_pair()
    rng = np.random.default_rng(2)
    z = rng.normal(size=(8, 2))
    analytic = grad_discriminator(Discriminator(z), d_e, d_p)
    h = 1e-6
    fd = np.zeros_like(z)
    for idx in np.ndindex(8, 2):
        for sign in (1.0, -1.0):
            bumped = z.copy()
            bumped[idx] += sign * h
            fd[idx] += sign * gail_objective(Discriminator(bumped), d_e, d_p)
    fd /= 2.0 * h
    np.testing.assert_allclose(analytic, fd, atol=1e-9)


# --- adversarial trainer ----------------------------------------------------

def test_gail_train_matched_start_stays_matched():
    # make the imitation target the occupancy of the all-zeros start policy:
    # the discriminator then has nothing to separate and nothing ever moves
    mdp, _, d_uniform = _ring_pair()
    res = gail_train(mdp, d_uniform, TrainingConfig(n_updates=200, eval_every=20))
    assert all(kl < 1e-6 for _, kl in res.kl_curve)


def test_gail_train_converges_on_stochastic_ring():
    mdp, d_e, _ = _ring_pair()
    res = gail_train(mdp, d_e, TrainingConfig(n_updates=3000, eval_every=100))
    kls = [k for _, k in res.kl_curve]
    assert kls[-1] < 5e-2
    assert kls[-1] < kls[0]


def test_gail_train_deterministic():
    mdp, d_e, _ = _ring_pair()
    cfg = TrainingConfig(n_updates=150, eval_every=50)
    a = gail_train(mdp, d_e, cfg)
    b = gail_train(mdp, d_e, cfg)
    assert a.kl_curve == b.kl_curve


def test_gail_train_aborts_on_blowup():
    mdp, d_e, _ = _ring_pair()
    cfg = TrainingConfig(policy_learning_rate=1e308, n_updates=5)
    with pytest.raises(NumericalError, match="non-finite"):
        with np.errstate(all="ignore"):
            gail_train(mdp, d_e, cfg)
