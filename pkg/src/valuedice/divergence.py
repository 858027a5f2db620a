"""Occupancy KL, its variational dual, and the change of variables to nu.

The dual test function x enters only through log-of-expected-exponent terms;
those always clip x to +/-CLIP_BOUND and accumulate max-shifted, so they can
never overflow. Linear terms use raw values, which is what makes the
telescoping identity exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mdp import Occupancy, Policy, TabularMdp, compute_occupancy

EPS_LOG = 1e-12
CLIP_BOUND = 40.0


@dataclass
class DualFunction:
    """Test function over (state, action); consumers treat values beyond
    +/-CLIP_BOUND as saturated."""

    values: np.ndarray


@dataclass
class NuFunction:
    """Real table over (state, action); the dual variable after the change of
    variables. Unbounded, unlike DualFunction."""

    values: np.ndarray


def log_expected_exp(x: np.ndarray, weights: np.ndarray) -> float:
    """log sum_i w_i e^{clip(x_i)}, max-shifted."""
    return float(logsumexp(np.clip(x, -CLIP_BOUND, CLIP_BOUND), b=weights))


def kl_occupancy(d_p: Occupancy, d_e: Occupancy, eps: float = EPS_LOG) -> float:
    """KL(d_p || d_e) with eps-smoothed logs so zero support never produces nan."""
    p = d_p.values
    e = d_e.values
    return float(np.sum(p * np.log((p + eps) / (e + eps))))


def kl_as_discounted_return(mdp: TabularMdp, policy: Policy, d_p: Occupancy,
                            d_e: Occupancy, eps: float = EPS_LOG) -> float:
    """Expected discounted log-ratio reward under the policy, which is -KL.

    Deliberately a separate accumulation path from kl_occupancy so the two can
    cross-check each other.
    """
    exact = compute_occupancy(mdp, policy)
    if np.abs(exact.values - d_p.values).max() > 1e-8:
        raise ValueError("d_p does not match the policy's occupancy")
    p = d_p.values
    return float(np.sum(p * (np.log(d_e.values + eps) - np.log(p + eps))))


def dv_objective(x: DualFunction, d_p: Occupancy, d_e: Occupancy) -> float:
    """Variational upper bound on -KL(d_p || d_e); tight at the log ratio."""
    return log_expected_exp(x.values, d_e.values) - float(np.sum(d_p.values * x.values))


def dv_optimal_x(d_p: Occupancy, d_e: Occupancy, eps: float = EPS_LOG) -> DualFunction:
    """The minimizing test function log(d_p/d_e), additive constant fixed to 0."""
    ratio = np.log((d_p.values + eps) / (d_e.values + eps))
    return DualFunction(np.clip(ratio, -CLIP_BOUND, CLIP_BOUND))


def bellman_operator(mdp: TabularMdp, policy: Policy, nu: NuFunction) -> np.ndarray:
    """Zero-reward expected Bellman backup of nu under the MDP and policy."""
    v_next = np.einsum("sa,sa->s", policy.probs(), nu.values)
    return mdp.gamma * np.einsum("sat,t->sa", mdp.transition, v_next)


def x_from_nu(mdp: TabularMdp, policy: Policy, nu: NuFunction) -> DualFunction:
    """Change of variables x = nu - B nu; left unclipped so the telescoping
    identity holds for every nu (exponential consumers clip)."""
    return DualFunction(nu.values - bellman_operator(mdp, policy, nu))


def initial_nu_expectation(mdp: TabularMdp, policy: Policy, nu: NuFunction) -> float:
    """E over initial state and first action of nu."""
    return float(np.einsum("s,sa,sa->", mdp.initial_dist, policy.probs(), nu.values))


def j_dice_exact(mdp: TabularMdp, policy: Policy, nu: NuFunction, d_e: Occupancy) -> float:
    """Saddle objective in nu form: the expert log-exponent term minus the
    telescoped initial-state term; infimum over nu is -KL(d_pi || d_e)."""
    x = x_from_nu(mdp, policy, nu)
    return log_expected_exp(x.values, d_e.values) \
        - (1.0 - mdp.gamma) * initial_nu_expectation(mdp, policy, nu)
