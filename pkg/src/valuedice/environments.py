"""Ring MDP, expert policies, demonstration datasets, and the replay buffer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mdp import (Occupancy, Policy, TabularMdp, Trajectory, Transition,
                  sample_trajectory, softmax_policy)

DETERMINISTIC_LOGIT = 50.0  # stray probability ~2e-22, finite log-ratios everywhere
DEFAULT_REPLAY_CAPACITY = 100_000


def build_ring_mdp(n_states: int = 8, gamma: float = 0.95,
                   initial_dist: np.ndarray | None = None) -> TabularMdp:
    """Ring of states; action 0 steps to (s+1) mod n, action 1 to (s-1) mod n.

    Default initial distribution is a point mass on state 0.
    """
    if n_states < 3:
        raise ValueError("ring needs at least 3 states")
    transition = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        transition[s, 0, (s + 1) % n_states] = 1.0
        transition[s, 1, (s - 1) % n_states] = 1.0
    if initial_dist is None:
        initial_dist = np.zeros(n_states)
        initial_dist[0] = 1.0
    else:
        initial_dist = np.asarray(initial_dist, dtype=float)
    return TabularMdp(n_states, 2, transition, initial_dist, gamma)


def stochastic_expert_policy(p_forward: float = 0.75, n_states: int = 8) -> Policy:
    """Clockwise-biased at states 0 and 1, counter-clockwise-biased elsewhere."""
    if not 0.0 < p_forward < 1.0:
        raise ValueError("p_forward must lie strictly in (0, 1)")
    logit = np.log(p_forward / (1.0 - p_forward))
    logits = np.zeros((n_states, 2))
    logits[0, 0] = logit
    logits[1, 0] = logit
    logits[2:, 1] = logit
    return softmax_policy(logits)


def sparse_expert_policy() -> Policy:
    """Deterministic 0->1, 1->2, 2->1; uniform at the never-visited states."""
    logits = np.zeros((8, 2))
    logits[0, 0] = DETERMINISTIC_LOGIT
    logits[1, 0] = DETERMINISTIC_LOGIT
    logits[2, 1] = DETERMINISTIC_LOGIT
    return softmax_policy(logits)


def virtual_initial_states(trajectory: Trajectory) -> list[Transition]:
    """Expand a rollout into per-step transitions, each its own episode start.

    Every visited state (except the last) thereby enters the empirical
    initial-state pool.
    """
    out = []
    for t in range(trajectory.horizon):
        s = int(trajectory.states[t])
        out.append(Transition(s, int(trajectory.actions[t]),
                              int(trajectory.states[t + 1]), s))
    return out


@dataclass
class ExpertDataset:
    """Demonstration transitions plus the trajectories they came from.

    Transitions are stored in trajectory order (contiguous per source
    trajectory); geometric offset sampling relies on that layout.
    """

    transitions: list[Transition] = field(default_factory=list)
    source_trajectories: list[Trajectory] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Flat (state, action, next_state, tail) views; tail counts the
        transitions remaining in the source trajectory from each position."""
        n = len(self.transitions)
        s = np.fromiter((t.state for t in self.transitions), np.int64, n)
        a = np.fromiter((t.action for t in self.transitions), np.int64, n)
        sn = np.fromiter((t.next_state for t in self.transitions), np.int64, n)
        tail = np.empty(n, np.int64)
        pos = 0
        for traj in self.source_trajectories:
            h = traj.horizon
            tail[pos:pos + h] = np.arange(h, 0, -1)
            pos += h
        if pos != n:
            raise ValueError("transitions are not traceable to the source trajectories")
        return s, a, sn, tail

    def initial_state_pool(self) -> np.ndarray:
        return np.unique([t.episode_start for t in self.transitions])

    def empirical_occupancy(self, n_states: int, n_actions: int) -> Occupancy:
        """Uniform (s, a) frequencies over all stored transitions."""
        counts = np.zeros((n_states, n_actions))
        for t in self.transitions:
            counts[t.state, t.action] += 1.0
        return Occupancy(counts / counts.sum())

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for t in self.transitions:
                fh.write(json.dumps({"s": t.state, "a": t.action,
                                     "s_next": t.next_state,
                                     "episode_start": t.episode_start}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "ExpertDataset":
        """Rebuild from serialized transitions; trajectory boundaries are
        recovered by splitting wherever the state chain breaks."""
        transitions = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                transitions.append(Transition(int(row["s"]), int(row["a"]),
                                              int(row["s_next"]),
                                              int(row["episode_start"])))
        trajectories = []
        group: list[Transition] = []
        for t in transitions:
            if group and t.state != group[-1].next_state:
                trajectories.append(_group_to_trajectory(group))
                group = []
            group.append(t)
        if group:
            trajectories.append(_group_to_trajectory(group))
        return cls(transitions, trajectories)


def _group_to_trajectory(group: list[Transition]) -> Trajectory:
    states = np.array([t.state for t in group] + [group[-1].next_state], dtype=np.int64)
    actions = np.array([t.action for t in group], dtype=np.int64)
    return Trajectory(states, actions)


def generate_demonstrations(mdp: TabularMdp, expert: Policy, n_trajectories: int,
                            horizon: int, seed) -> ExpertDataset:
    """Sample expert rollouts and expand each through the virtual-start scheme."""
    rng = np.random.default_rng(seed)
    dataset = ExpertDataset()
    for _ in range(n_trajectories):
        traj = sample_trajectory(mdp, expert, horizon, rng)
        dataset.source_trajectories.append(traj)
        dataset.transitions.extend(virtual_initial_states(traj))
    return dataset


def sparse_expert_dataset(mdp: TabularMdp, horizon: int, n_trajectories: int,
                          seed) -> ExpertDataset:
    """Demonstrations covering only states {0, 1, 2} of the 8-state ring."""
    if mdp.n_states != 8 or mdp.n_actions != 2:
        raise ValueError("the sparse expert is defined on the 8-state ring")
    return generate_demonstrations(mdp, sparse_expert_policy(), n_trajectories,
                                   horizon, seed)


def random_mdp(n_states: int, n_actions: int, branching: int, seed,
               gamma: float = 0.95) -> TabularMdp:
    """Random sparse-transition MDP for property tests; always valid."""
    if branching > n_states:
        raise ValueError("branching cannot exceed n_states")
    rng = np.random.default_rng(seed)
    transition = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            succ = rng.choice(n_states, size=branching, replace=False)
            transition[s, a, succ] = rng.dirichlet(np.ones(branching))
    initial = rng.dirichlet(np.ones(n_states))
    return TabularMdp(n_states, n_actions, transition, initial, gamma)


class ReplayBuffer:
    """FIFO transition store backed by flat arrays; single writer."""

    def __init__(self, capacity: int = DEFAULT_REPLAY_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.empty(capacity, np.int64)
        self.actions = np.empty(capacity, np.int64)
        self.next_states = np.empty(capacity, np.int64)
        self.episode_starts = np.empty(capacity, np.int64)
        self.size = 0
        self._write = 0

    def __len__(self) -> int:
        return self.size

    @property
    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        head = (self._write - self.size) % self.capacity
        idx = (head + np.arange(self.size)) % self.capacity
        return [Transition(int(self.states[i]), int(self.actions[i]),
                           int(self.next_states[i]), int(self.episode_starts[i]))
                for i in idx]

    def push(self, t: Transition) -> None:
        w = self._write
        self.states[w] = t.state
        self.actions[w] = t.action
        self.next_states[w] = t.next_state
        self.episode_starts[w] = t.episode_start
        self._write = (w + 1) % self.capacity
        if self.size < self.capacity:
            self.size += 1

    def sample(self, batch_size: int, seed) -> list[Transition]:
        """Uniform with replacement over stored items."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        rng = np.random.default_rng(seed)
        head = (self._write - self.size) % self.capacity
        idx = (head + rng.integers(0, self.size, size=batch_size)) % self.capacity
        return [Transition(int(self.states[i]), int(self.actions[i]),
                           int(self.next_states[i]), int(self.episode_starts[i]))
                for i in idx]


def replay_push(buffer: ReplayBuffer, t: Transition) -> ReplayBuffer:
    buffer.push(t)
    return buffer


def replay_sample(buffer: ReplayBuffer, batch_size: int, seed) -> list[Transition]:
    return buffer.sample(batch_size, seed)
