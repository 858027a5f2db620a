"""Finite-MDP model, exact discounted occupancies, and trajectory sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError

ROW_SUM_TOL = 1e-12
OCCUPANCY_SUM_TOL = 1e-9


@dataclass
class TabularMdp:
    """Finite MDP; `transition` is indexed [state, action, next_state].

    `reward` is carried for completeness and never read by the imitation code.
    """

    n_states: int
    n_actions: int
    transition: np.ndarray
    initial_dist: np.ndarray
    gamma: float
    reward: np.ndarray | None = None


@dataclass
class Policy:
    """Tabular softmax policy; `logits` rows index states."""

    logits: np.ndarray

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def greedy_actions(self) -> np.ndarray:
        return self.probs().argmax(axis=1)


@dataclass
class Occupancy:
    """Discounted state-action visitation table; entries sum to one."""

    values: np.ndarray

    def state_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass
class Trajectory:
    """A rollout of `horizon` steps: states has length horizon+1, actions horizon."""

    states: np.ndarray
    actions: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.actions)


@dataclass
class Transition:
    """One logged step plus the start state of the trajectory it came from."""

    state: int
    action: int
    next_state: int
    episode_start: int


def validate_mdp(mdp: TabularMdp) -> list[str]:
    """Return the list of violated invariants; empty means valid."""
    problems: list[str] = []
    p = np.asarray(mdp.transition, dtype=float)
    p0 = np.asarray(mdp.initial_dist, dtype=float)
    if p.shape != (mdp.n_states, mdp.n_actions, mdp.n_states):
        problems.append(f"transition shape {p.shape} does not match "
                        f"({mdp.n_states}, {mdp.n_actions}, {mdp.n_states})")
        return problems
    if p0.shape != (mdp.n_states,):
        problems.append(f"initial_dist shape {p0.shape} does not match ({mdp.n_states},)")
        return problems
    if np.any(p < 0):
        problems.append("transition has negative entries")
    if np.any(p0 < 0):
        problems.append("initial_dist has negative entries")
    row_sums = p.sum(axis=2)
    bad = np.argwhere(np.abs(row_sums - 1.0) > ROW_SUM_TOL)
    for s, a in bad:
        problems.append(f"transition row (state {s}, action {a}) sums to {row_sums[s, a]:.6g}")
    if abs(p0.sum() - 1.0) > ROW_SUM_TOL:
        problems.append(f"initial_dist sums to {p0.sum():.6g}")
    if not 0.0 <= mdp.gamma < 1.0:
        problems.append("gamma must be < 1 and nonnegative")
    return problems


def softmax_policy(logits: np.ndarray) -> Policy:
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 2:
        raise ValueError("logits must be a (n_states, n_actions) table")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    return Policy(logits)


def occupancy_system(mdp: TabularMdp, policy: Policy) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and right-hand side of the linear balance system M d = b.

    Row (s,a) of M encodes d(s,a) - gamma * pi(a|s) * sum_{sb,ab} P[sb,ab,s] d(sb,ab);
    b(s,a) = (1-gamma) * p0(s) * pi(a|s).
    """
    pi = policy.probs()
    n = mdp.n_states * mdp.n_actions
    flow = np.einsum("sa,tbs->satb", pi, mdp.transition).reshape(n, n)
    m = np.eye(n) - mdp.gamma * flow
    b = (1.0 - mdp.gamma) * (mdp.initial_dist[:, None] * pi).reshape(n)
    return m, b


def compute_occupancy(mdp: TabularMdp, policy: Policy) -> Occupancy:
    """Solve the balance system exactly; the solution is the discounted occupancy."""
    m, b = occupancy_system(mdp, policy)
    d = np.linalg.solve(m, b)
    if not np.all(np.isfinite(d)) or np.abs(m @ d - b).max() > OCCUPANCY_SUM_TOL:
        raise NumericalError("occupancy solve failed the residual check")
    if d.min() < -1e-12:
        raise NumericalError("occupancy solve produced negative mass")
    d = np.clip(d, 0.0, None)  # scrub sub-1e-12 solver dust
    return Occupancy(d.reshape(mdp.n_states, mdp.n_actions))


def balance_residual(mdp: TabularMdp, policy: Policy, occupancy: Occupancy) -> float:
    """Max-abs residual of the balance equation at a candidate occupancy."""
    m, b = occupancy_system(mdp, policy)
    return float(np.abs(m @ occupancy.values.reshape(-1) - b).max())


def occupancy_monte_carlo(mdp: TabularMdp, policy: Policy, n_samples: int, seed,
                          chunk: int = 65536) -> Occupancy:
    """Estimate the occupancy from fresh geometric-length rollouts, one (s,a) each.

    Each sample draws t ~ Geom(1-gamma), rolls t steps from the initial
    distribution, and records (s_t, a_t); this is unbiased for the exact
    occupancy. Work is chunked to bound the pre-drawn uniform buffer.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    pi_cum = np.cumsum(policy.probs(), axis=1)
    tr_cum = np.cumsum(mdp.transition, axis=2)
    p0_cum = np.cumsum(mdp.initial_dist)
    counts = np.zeros((mdp.n_states, mdp.n_actions), dtype=np.int64)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        ts = _kernels.geometric_lengths(rng.random(m), mdp.gamma)
        offs = np.zeros(m, dtype=np.int64)
        np.cumsum(2 * ts[:-1] + 2, out=offs[1:])
        ublock = rng.random(int(2 * ts.sum() + 2 * m))
        _kernels.mc_counts(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts)
        done += m
    return Occupancy(counts / float(n_samples))


def sample_trajectory(mdp: TabularMdp, policy: Policy, horizon: int, seed) -> Trajectory:
    """Roll out `horizon` steps from the initial distribution."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    pi_cum = np.cumsum(policy.probs(), axis=1)
    tr_cum = np.cumsum(mdp.transition, axis=2)
    p0_cum = np.cumsum(mdp.initial_dist)
    states = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    states[0] = _kernels.pick(p0_cum, rng.random())
    for k in range(horizon):
        actions[k] = _kernels.pick(pi_cum[states[k]], rng.random())
        states[k + 1] = _kernels.pick(tr_cum[states[k], actions[k]], rng.random())
    return Trajectory(states, actions)


def save_mdp(mdp: TabularMdp, path) -> None:
    payload = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "initial_dist": np.asarray(mdp.initial_dist).tolist(),
        "transition": np.asarray(mdp.transition).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_mdp(path) -> TabularMdp:
    """Load and validate; files violating type invariants are rejected."""
    with open(path) as fh:
        payload = json.load(fh)
    try:
        mdp = TabularMdp(
            n_states=int(payload["n_states"]),
            n_actions=int(payload["n_actions"]),
            transition=np.asarray(payload["transition"], dtype=float),
            initial_dist=np.asarray(payload["initial_dist"], dtype=float),
            gamma=float(payload["gamma"]),
        )
    except KeyError as exc:
        raise ValueError(f"mdp file missing field {exc.args[0]}") from exc
    problems = validate_mdp(mdp)
    if problems:
        raise ValueError("invalid mdp file: " + "; ".join(problems))
    return mdp
