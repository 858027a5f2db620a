"""Behavioral cloning and a tabular adversarial baseline.

Both exist for head-to-head comparisons on the same MDPs and demonstration
sets as the saddle-point trainer. The adversarial baseline deliberately uses
exact occupancies for its discriminator, making it a best-case on-policy
variant rather than a faithful reproduction of the sampled original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .divergence import CLIP_BOUND, EPS_LOG, NuFunction, kl_occupancy
from .environments import ExpertDataset
from .errors import NumericalError
from .mdp import Occupancy, Policy, TabularMdp, compute_occupancy, occupancy_system, softmax_policy
from .training import LOGIT_PENALTY, SaddleState, TrainingConfig, TrainResult

_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITER = 100


def _bc_state_objective(theta: np.ndarray, counts: np.ndarray, total: int,
                        weight: float) -> float:
    return counts.sum() / total * float(logsumexp(theta)) \
        - float(counts @ theta) / total + weight * float(theta @ theta)


def bc_fit(demonstrations: ExpertDataset, regularizer_weight: float,
           n_states: int | None = None, n_actions: int | None = None) -> Policy:
    """Penalized maximum-likelihood tabular policy from demonstration counts.

    Damped Newton per state on the average negative log-likelihood plus
    regularizer_weight * ||logits||^2. States absent from the data are left at
    the penalty-only optimum, which is exactly uniform. Pass n_states or
    n_actions when the demonstrations do not visit the full table.
    """
    if len(demonstrations) == 0:
        raise ValueError("demonstrations must be nonempty")
    if regularizer_weight < 0:
        raise ValueError("regularizer_weight must be nonnegative")
    states = np.fromiter((t.state for t in demonstrations.transitions), np.int64)
    actions = np.fromiter((t.action for t in demonstrations.transitions), np.int64)
    if n_states is None:
        n_states = int(states.max()) + 1
    if n_actions is None:
        n_actions = int(actions.max()) + 1
    counts = np.zeros((n_states, n_actions))
    np.add.at(counts, (states, actions), 1.0)
    total = len(demonstrations)

    logits = np.zeros((n_states, n_actions))
    for s in range(n_states):
        n_s = counts[s]
        if n_s.sum() == 0.0:
            continue
        theta = logits[s]
        obj = _bc_state_objective(theta, n_s, total, regularizer_weight)
        for _ in range(_NEWTON_MAX_ITER):
            p = np.exp(theta - theta.max())
            p /= p.sum()
            grad = (n_s.sum() * p - n_s) / total + 2.0 * regularizer_weight * theta
            if np.abs(grad).max() < _NEWTON_TOL:
                break
            hess = n_s.sum() / total * (np.diag(p) - np.outer(p, p)) \
                + (2.0 * regularizer_weight + 1e-12) * np.eye(n_actions)
            step = np.linalg.solve(hess, -grad)
            scale = 1.0
            for _ in range(40):
                cand = theta + scale * step
                cand_obj = _bc_state_objective(cand, n_s, total, regularizer_weight)
                if cand_obj <= obj:
                    theta, obj = cand, cand_obj
                    break
                scale *= 0.5
            else:
                break  # no improving step left at float precision
        logits[s] = theta
    return softmax_policy(logits)


@dataclass
class Discriminator:
    """Per-pair classifier; h(s, a) = sigmoid(logits[s, a]) stays in (0, 1)."""

    logits: np.ndarray

    def h(self) -> np.ndarray:
        return expit(self.logits)


def gail_objective(h: Discriminator, d_e: Occupancy, d_p: Occupancy) -> float:
    """Expert-weighted log h plus policy-weighted log(1 - h)."""
    z = h.logits
    log_h = -np.logaddexp(0.0, -z)
    log_1mh = -np.logaddexp(0.0, z)
    return float(np.sum(d_e.values * log_h) + np.sum(d_p.values * log_1mh))


def grad_discriminator(h: Discriminator, d_e: Occupancy, d_p: Occupancy) -> np.ndarray:
    """Logit-space gradient of gail_objective."""
    s = h.h()
    return d_e.values * (1.0 - s) - d_p.values * s


def gail_optimal_discriminator(d_e: Occupancy, d_p: Occupancy,
                               eps: float = EPS_LOG) -> Discriminator:
    """Closed-form maximizer: logits are the regularized log occupancy ratio."""
    return Discriminator(np.log(d_e.values + eps) - np.log(d_p.values + eps))


def _policy_return_gradient(mdp: TabularMdp, policy: Policy, d_p: Occupancy,
                            reward: np.ndarray) -> np.ndarray:
    """Logit gradient of the occupancy-weighted reward via one adjoint solve."""
    m, _ = occupancy_system(mdp, policy)
    lam = np.linalg.solve(m.T, reward.reshape(-1)).reshape(reward.shape)
    pi = policy.probs()
    lam_centered = lam - np.einsum("sa,sa->s", pi, lam)[:, None]
    return d_p.state_marginal()[:, None] * pi * lam_centered


def gail_train(mdp: TabularMdp, d_e: Occupancy, cfg: TrainingConfig) -> TrainResult:
    """Alternate discriminator ascent with exact policy-gradient ascent.

    The discriminator sees the current policy's exact occupancy each update
    (nu_steps_per_policy_step ascent steps at nu_learning_rate, logits clipped
    to +-CLIP_BOUND), then the policy takes one ascent step on the occupancy-
    weighted discriminator logit reward, L2-penalized like the saddle trainer.
    """
    shape = (mdp.n_states, mdp.n_actions)
    theta = np.zeros(shape)
    z = np.zeros(shape)
    policy = softmax_policy(theta)
    d_p = compute_occupancy(mdp, policy)
    kl_curve = [(0, kl_occupancy(d_p, d_e))]
    objective_curve = [(0, gail_objective(Discriminator(z), d_e, d_p))]
    for update in range(1, cfg.n_updates + 1):
        for _ in range(cfg.nu_steps_per_policy_step):
            z = z + cfg.nu_learning_rate * grad_discriminator(Discriminator(z), d_e, d_p)
            np.clip(z, -CLIP_BOUND, CLIP_BOUND, out=z)
        g = _policy_return_gradient(mdp, policy, d_p, z)
        theta = theta + cfg.policy_learning_rate * (g - 2.0 * LOGIT_PENALTY * theta)
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"non-finite policy logits at update {update}")
        policy = softmax_policy(theta)
        d_p = compute_occupancy(mdp, policy)
        j = gail_objective(Discriminator(z), d_e, d_p)
        if not math.isfinite(j):
            raise NumericalError(f"non-finite objective at update {update}")
        if update % cfg.eval_every == 0 or update == cfg.n_updates:
            kl_curve.append((update, kl_occupancy(d_p, d_e)))
            objective_curve.append((update, j))
    final = SaddleState(policy, NuFunction(z), cfg.n_updates)
    return TrainResult(final, kl_curve, objective_curve, cfg.seed, 0.0)
