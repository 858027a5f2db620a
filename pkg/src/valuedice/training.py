"""Saddle-point trainers: exact occupancy-based updates and the minibatch loop.

Objective treated everywhere: maximize over policy logits, minimize over nu,
    J(policy, nu) = log E_mix[e^{nu - B nu}]
                    - (1-alpha)(1-gamma) E_init[nu] - alpha E_rb[nu - B nu]
where the mixture weighs expert occupancy (1-alpha) against replay occupancy
alpha. The exact trainer works on occupancy tables; the empirical trainer
reproduces the sampled batch losses and score-function updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .divergence import (CLIP_BOUND, NuFunction, bellman_operator,
                         initial_nu_expectation, kl_occupancy)
from .environments import DEFAULT_REPLAY_CAPACITY, ExpertDataset
from .errors import NumericalError
from .mdp import (Occupancy, Policy, TabularMdp, Transition, compute_occupancy,
                  occupancy_system, softmax_policy)

LOGIT_PENALTY = 1e-4


@dataclass
class MixConfig:
    """Replay mixture weight; alpha = 0 recovers the pure expert objective."""

    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")


@dataclass
class TrainingConfig:
    nu_learning_rate: float = 0.1
    policy_learning_rate: float = 0.01
    batch_size: int = 64
    n_updates: int = 3000
    nu_steps_per_policy_step: int = 4
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if min(self.nu_learning_rate, self.policy_learning_rate) <= 0:
            raise ValueError("learning rates must be positive")
        if min(self.batch_size, self.n_updates, self.nu_steps_per_policy_step,
               self.eval_every) < 1:
            raise ValueError("counts must be positive")


@dataclass
class SaddleState:
    policy: Policy
    nu: NuFunction
    update_index: int


@dataclass
class TrainResult:
    final_state: SaddleState
    kl_curve: list[tuple[int, float]]
    objective_curve: list[tuple[int, float]]
    seed: int = 0
    alpha: float = 0.0

    def to_csv(self, path) -> None:
        """Columns update,kl,j_value,alpha,seed; floats rendered to round-trip."""
        j_by_update = dict(self.objective_curve)
        with open(path, "w") as fh:
            fh.write("update,kl,j_value,alpha,seed\n")
            for update, kl in self.kl_curve:
                j = j_by_update.get(update, math.nan)
                fh.write(f"{update},{kl!r},{j!r},{self.alpha!r},{self.seed}\n")


def _mixture(d_e: Occupancy, d_rb: Occupancy, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * d_e.values + alpha * d_rb.values


def j_dice_mix_exact(mdp: TabularMdp, policy: Policy, nu: NuFunction,
                     d_e: Occupancy, d_rb: Occupancy, mix: MixConfig) -> float:
    """Replay-regularized saddle objective on exact occupancy tables."""
    a = mix.alpha
    x = nu.values - bellman_operator(mdp, policy, nu)
    log_term = float(logsumexp(np.clip(x, -CLIP_BOUND, CLIP_BOUND),
                               b=_mixture(d_e, d_rb, a)))
    return log_term \
        - (1.0 - a) * (1.0 - mdp.gamma) * initial_nu_expectation(mdp, policy, nu) \
        - a * float(np.sum(d_rb.values * x))


def _adjoint_bellman(mdp: TabularMdp, pi: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Transpose of the Bellman backup: routes table mass one step forward."""
    q = np.einsum("sa,sat->t", table, mdp.transition)
    return mdp.gamma * pi * q[:, None]


def _exp_weights(x: np.ndarray, d_mix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized d_mix e^{clip(x)} weights and the saturation mask."""
    xc = np.clip(x, -CLIP_BOUND, CLIP_BOUND)
    shifted = np.exp(xc - xc.max())
    w = d_mix * shifted
    w /= w.sum()
    return w, x == xc


def grad_nu_exact(mdp: TabularMdp, policy: Policy, nu: NuFunction,
                  d_e: Occupancy, d_rb: Occupancy, mix: MixConfig) -> np.ndarray:
    """Exact derivative of j_dice_mix_exact in every nu entry."""
    a = mix.alpha
    pi = policy.probs()
    x = nu.values - bellman_operator(mdp, policy, nu)
    w, live = _exp_weights(x, _mixture(d_e, d_rb, a))
    w_eff = np.where(live, w, 0.0)
    grad = w_eff - _adjoint_bellman(mdp, pi, w_eff)
    grad -= (1.0 - a) * (1.0 - mdp.gamma) * mdp.initial_dist[:, None] * pi
    grad -= a * (d_rb.values - _adjoint_bellman(mdp, pi, d_rb.values))
    return grad


def grad_policy_exact(mdp: TabularMdp, policy: Policy, nu: NuFunction,
                      d_e: Occupancy, d_rb: Occupancy, mix: MixConfig,
                      through_occupancy: bool = True) -> np.ndarray:
    """Exact derivative of j_dice_mix_exact in every policy logit.

    The explicit part covers the policy inside the Bellman backup and the
    initial-state expectation. With through_occupancy=True the replay table is
    treated as the current policy's own occupancy and the gradient of the
    occupancy solve is added via one adjoint system; d_rb must then actually
    be compute_occupancy(mdp, policy).
    """
    a = mix.alpha
    pi = policy.probs()
    nuv = nu.values
    x = nuv - bellman_operator(mdp, policy, nu)
    w, live = _exp_weights(x, _mixture(d_e, d_rb, a))
    w_eff = np.where(live, w, 0.0)

    # every explicit term factors through u(s) * pi(a|s) * (nu(s,a) - nu_bar(s))
    centered = nuv - np.einsum("sa,sa->s", pi, nuv)[:, None]
    q_w = np.einsum("sa,sat->t", w_eff, mdp.transition)
    q_rb = np.einsum("sa,sat->t", d_rb.values, mdp.transition)
    state_w = -mdp.gamma * q_w \
        - (1.0 - a) * (1.0 - mdp.gamma) * mdp.initial_dist \
        + a * mdp.gamma * q_rb
    grad = state_w[:, None] * pi * centered

    if through_occupancy and a > 0.0:
        m, b = occupancy_system(mdp, policy)
        d_flat = d_rb.values.reshape(-1)
        if np.abs(m @ d_flat - b).max() > 1e-6:
            raise ValueError("through_occupancy=True requires d_rb to be the "
                             "policy's own occupancy")
        # dJ/d(d_rb): log-term weight ratio minus the raw linear term
        xc = np.clip(x, -CLIP_BOUND, CLIP_BOUND)
        shift = xc.max()
        z = float(np.sum(_mixture(d_e, d_rb, a) * np.exp(xc - shift)))
        cost = a * (np.exp(xc - shift) / z - x)
        lam = np.linalg.solve(m.T, cost.reshape(-1)).reshape(nuv.shape)
        lam_centered = lam - np.einsum("sa,sa->s", pi, lam)[:, None]
        grad += d_rb.state_marginal()[:, None] * pi * lam_centered
    return grad


def train_exact(mdp: TabularMdp, d_e: Occupancy, mix: MixConfig,
                cfg: TrainingConfig, through_occupancy: bool = True) -> TrainResult:
    """Alternate nu descent and policy ascent on exact occupancy tables.

    The replay table is the current policy's exact occupancy, refreshed every
    update. Fully deterministic; the seed only labels the result.
    """
    shape = (mdp.n_states, mdp.n_actions)
    theta = np.zeros(shape)
    nuv = np.zeros(shape)
    policy = softmax_policy(theta)
    d_pi = compute_occupancy(mdp, policy)
    kl_curve = [(0, kl_occupancy(d_pi, d_e))]
    objective_curve = [(0, j_dice_mix_exact(mdp, policy, NuFunction(nuv), d_e, d_pi, mix))]
    for update in range(1, cfg.n_updates + 1):
        d_rb = d_pi
        nu = NuFunction(nuv)
        for _ in range(cfg.nu_steps_per_policy_step):
            nuv = nuv - cfg.nu_learning_rate * grad_nu_exact(mdp, policy, nu, d_e, d_rb, mix)
            nu = NuFunction(nuv)
        g = grad_policy_exact(mdp, policy, nu, d_e, d_rb, mix, through_occupancy)
        theta = theta + cfg.policy_learning_rate * (g - 2.0 * LOGIT_PENALTY * theta)
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"non-finite policy logits at update {update}")
        policy = softmax_policy(theta)
        d_pi = compute_occupancy(mdp, policy)
        j = j_dice_mix_exact(mdp, policy, nu, d_e, d_pi, mix)
        if not math.isfinite(j):
            raise NumericalError(f"non-finite objective at update {update}")
        if update % cfg.eval_every == 0 or update == cfg.n_updates:
            kl_curve.append((update, kl_occupancy(d_pi, d_e)))
            objective_curve.append((update, j))
    final = SaddleState(policy, NuFunction(nuv), cfg.n_updates)
    return TrainResult(final, kl_curve, objective_curve, cfg.seed, mix.alpha)


def geometric_time_index(horizon: int, gamma: float, seed) -> int:
    """Geom(1-gamma) draw conditioned on t < horizon by rejection."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    if gamma <= 0.0:
        rng.random()
        return 0
    log_gamma = math.log(gamma)
    while True:
        t = int(math.log1p(-rng.random()) / log_gamma)
        if t < horizon:
            return t


class EmpiricalObjective(NamedTuple):
    value: float
    j_log: float
    j_linear: float


def _batch_arrays(batch: list[Transition]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(batch)
    s = np.fromiter((t.state for t in batch), np.int64, n)
    a = np.fromiter((t.action for t in batch), np.int64, n)
    sn = np.fromiter((t.next_state for t in batch), np.int64, n)
    return s, a, sn


def j_dice_empirical(policy: Policy, nu: NuFunction, expert_batch: list[Transition],
                     rb_batch: list[Transition], initial_batch, mix: MixConfig,
                     gamma: float, seed, weights=None,
                     exact_actions: bool = False) -> EmpiricalObjective:
    """Minibatch losses of the sampled saddle objective.

    Successor actions and initial actions are drawn internally from the seed
    (ordering: expert successors, replay successors, initial actions). The
    `weights` triple (expert, replay, initial; each summing to 1) and
    `exact_actions` exist for exhaustive-batch checks against the exact
    objective; by default batches are uniform and paired, so expert, replay,
    and initial lengths must match.
    """
    if not (len(expert_batch) and len(rb_batch) and len(initial_batch)):
        raise ValueError("batches must be nonempty")
    a = mix.alpha
    se, ae, sen = _batch_arrays(expert_batch)
    rs, ra, rsn = _batch_arrays(rb_batch)
    s0 = np.asarray(initial_batch, dtype=np.int64)
    if weights is None:
        if not len(expert_batch) == len(rb_batch) == len(s0):
            raise ValueError("unweighted batches must be paired (equal lengths)")
        w_e = np.full(len(se), 1.0 / len(se))
        w_r = np.full(len(rs), 1.0 / len(rs))
        w_0 = np.full(len(s0), 1.0 / len(s0))
    else:
        w_e, w_r, w_0 = (np.asarray(w, dtype=float) for w in weights)

    nuv = nu.values
    if exact_actions:
        nu_bar = np.einsum("sa,sa->s", policy.probs(), nuv)
        v_e, v_r, v_0 = nu_bar[sen], nu_bar[rsn], nu_bar[s0]
    else:
        rng = np.random.default_rng(seed)
        pcum = np.cumsum(policy.probs(), axis=1)
        a_e = _kernels.pick_rows(pcum[sen], rng.random(len(sen)))
        a_r = _kernels.pick_rows(pcum[rsn], rng.random(len(rsn)))
        a_0 = _kernels.pick_rows(pcum[s0], rng.random(len(s0)))
        v_e, v_r, v_0 = nuv[sen, a_e], nuv[rsn, a_r], nuv[s0, a_0]

    d_e_term = nuv[se, ae] - gamma * v_e
    d_r_term = nuv[rs, ra] - gamma * v_r
    exponents = np.concatenate((d_e_term, d_r_term))
    exp_weights = np.concatenate(((1.0 - a) * w_e, a * w_r))
    j_log = float(logsumexp(np.clip(exponents, -CLIP_BOUND, CLIP_BOUND), b=exp_weights))
    j_linear = (1.0 - a) * (1.0 - gamma) * float(np.sum(w_0 * v_0)) \
        + a * float(np.sum(w_r * d_r_term))
    return EmpiricalObjective(j_log - j_linear, j_log, j_linear)


def train_empirical(mdp: TabularMdp, demonstrations: ExpertDataset, mix: MixConfig,
                    cfg: TrainingConfig, kl_target: Occupancy | None = None,
                    replay_capacity: int = DEFAULT_REPLAY_CAPACITY) -> TrainResult:
    """Minibatch saddle training against sampled demonstrations.

    Per update: one environment step with the current policy pushed into the
    replay ring, paired expert/replay minibatches via uniform-start plus
    truncated-geometric offsets, one nu descent and one policy ascent step.
    The recorded KL compares the exact occupancy of the current policy with
    `kl_target` (default: the demonstrations' empirical occupancy).
    """
    if len(demonstrations) == 0:
        raise ValueError("demonstrations must be nonempty")
    shape = (mdp.n_states, mdp.n_actions)
    if kl_target is None:
        kl_target = demonstrations.empirical_occupancy(*shape)
    ex_s, ex_a, ex_sn, ex_tail = demonstrations.arrays()
    capacity = min(replay_capacity, cfg.n_updates)
    asc = _kernels.truncation_table(mdp.gamma, max(int(ex_tail.max()), capacity))
    tr_cum = np.cumsum(mdp.transition, axis=2)
    p0_cum = np.cumsum(mdp.initial_dist)

    theta = np.zeros(shape)
    nuv = np.zeros(shape)
    buf_s = np.zeros(capacity, np.int64)
    buf_a = np.zeros(capacity, np.int64)
    buf_sn = np.zeros(capacity, np.int64)
    rng = np.random.default_rng(cfg.seed)
    ctl = np.array([_kernels.pick(p0_cum, rng.random()), 0, 0], np.int64)

    kl_curve = [(0, kl_occupancy(compute_occupancy(mdp, Policy(theta)), kl_target))]
    objective_curve = [(0, 0.0)]  # nu == 0 makes every batch objective exactly 0
    stride = 2 + 7 * cfg.batch_size
    # pre-drawn uniform blocks are capped in size; splitting Generator.random
    # calls does not change the stream, so chunking never affects results
    updates_per_block = max(1, (1 << 22) // stride)
    done = 0
    while done < cfg.n_updates:
        segment = min(cfg.eval_every, cfg.n_updates - done)
        j_last = 0.0
        while segment > 0:
            n_block = min(segment, updates_per_block)
            u = rng.random(n_block * stride)
            j_out = np.empty(n_block)
            _kernels.train_chunk(nuv, theta, ctl, u, n_block, cfg.batch_size,
                                 ex_s, ex_a, ex_sn, ex_tail, buf_s, buf_a, buf_sn,
                                 tr_cum, asc, mdp.gamma, mix.alpha,
                                 cfg.nu_learning_rate, cfg.policy_learning_rate,
                                 LOGIT_PENALTY, CLIP_BOUND, j_out)
            done += n_block
            segment -= n_block
            if not np.all(np.isfinite(j_out)):
                bad = int(np.argmax(~np.isfinite(j_out)))
                raise NumericalError(f"non-finite loss at update {done - n_block + bad + 1}")
            j_last = float(j_out[-1])
        kl_curve.append((done, kl_occupancy(compute_occupancy(mdp, Policy(theta)),
                                            kl_target)))
        objective_curve.append((done, j_last))
    final = SaddleState(softmax_policy(theta), NuFunction(nuv), cfg.n_updates)
    return TrainResult(final, kl_curve, objective_curve, cfg.seed, mix.alpha)
