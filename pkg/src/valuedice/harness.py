"""Experiment orchestration: configs, metric rows, CSV/JSON emission.

Output contract: for output prefix P, runs write P.csv (MetricsRow schema)
and P.json (summary). Floats are rendered with repr() so files round-trip
bitwise and identical configs produce byte-identical CSVs.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .baselines import bc_fit, gail_train
from .divergence import kl_occupancy
from .environments import (ExpertDataset, build_ring_mdp, generate_demonstrations,
                           random_mdp, sparse_expert_dataset,
                           stochastic_expert_policy)
from .errors import ConfigError, NumericalError
from .mdp import Occupancy, TabularMdp, compute_occupancy, softmax_policy
from .training import (MixConfig, TrainingConfig, TrainResult, train_empirical,
                       train_exact)

EXPERIMENTS = ("ring-sparse", "ring-stochastic", "random-sweep")
ALGORITHMS = ("valuedice-exact", "valuedice-empirical", "bc", "gail")
BC_REGULARIZER = 1e-4
KL_FLOOR = -1e-12


@dataclass
class EnvironmentOverrides:
    gamma: float = 0.95
    n_states: int = 8
    p_forward: float = 0.75
    n_trajectories: int = 40
    horizon: int = 40


@dataclass
class ExperimentConfig:
    experiment: str = "ring-stochastic"
    algorithm: str = "valuedice-exact"
    mix: MixConfig = field(default_factory=MixConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    environment: EnvironmentOverrides = field(default_factory=EnvironmentOverrides)
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f: raw[f] for f in ("experiment", "algorithm", "seeds", "out") if f in raw}
        unknown = set(raw) - {"experiment", "algorithm", "seeds", "out",
                              "mix", "training", "environment"}
        if unknown:
            raise ConfigError(f"unknown config field {sorted(unknown)[0]!r}")
        for section, typ in (("mix", MixConfig), ("training", TrainingConfig),
                             ("environment", EnvironmentOverrides)):
            sub = dict(raw.get(section, {}))
            bad = set(sub) - set(typ.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown config field {section}.{sorted(bad)[0]}")
            try:
                known[section] = typ(**sub)
            except ValueError as exc:
                raise ConfigError(f"invalid {section} config: {exc}") from exc
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


class MetricsRow(NamedTuple):
    update: int
    seed: int
    algorithm: str
    alpha: float
    kl: float
    j_value: float


def _check_row(row: MetricsRow) -> MetricsRow:
    if row.kl < KL_FLOOR:
        raise NumericalError(f"negative KL {row.kl!r} at update {row.update}")
    return row


def _build_environment(config: ExperimentConfig, seed: int):
    """Per-seed (mdp, demonstrations, training target occupancy)."""
    env = config.environment
    if config.experiment == "ring-stochastic":
        mdp = build_ring_mdp(env.n_states, gamma=env.gamma)
        expert = stochastic_expert_policy(env.p_forward, env.n_states)
        demos = generate_demonstrations(mdp, expert, env.n_trajectories,
                                        env.horizon, seed)
        # full-support expert: the exact occupancy is the honest target
        target = compute_occupancy(mdp, expert)
    elif config.experiment == "ring-sparse":
        mdp = build_ring_mdp(env.n_states, gamma=env.gamma)
        demos = sparse_expert_dataset(mdp, env.horizon, env.n_trajectories, seed)
        # no full expert policy exists off {0,1,2}; compare against the data
        target = demos.empirical_occupancy(mdp.n_states, mdp.n_actions)
    else:  # random-sweep
        mdp = random_mdp(env.n_states, 2, 2, seed, gamma=env.gamma)
        rng = np.random.default_rng(seed + 1)
        expert = softmax_policy(rng.normal(scale=2.0, size=(mdp.n_states, 2)))
        demos = generate_demonstrations(mdp, expert, env.n_trajectories,
                                        env.horizon, seed)
        target = compute_occupancy(mdp, expert)
    return mdp, demos, target


def _run_single(config: ExperimentConfig, algorithm: str, seed: int,
                mdp: TabularMdp, demos: ExpertDataset,
                target: Occupancy) -> list[MetricsRow]:
    cfg = replace(config.training, seed=seed)
    if algorithm == "valuedice-exact":
        result = train_exact(mdp, target, config.mix, cfg)
    elif algorithm == "valuedice-empirical":
        result = train_empirical(mdp, demos, config.mix, cfg, kl_target=target)
    elif algorithm == "gail":
        result = gail_train(mdp, target, cfg)
    else:  # bc: no update loop, one row at update 0
        policy = bc_fit(demos, BC_REGULARIZER, mdp.n_states, mdp.n_actions)
        kl = kl_occupancy(compute_occupancy(mdp, policy), target)
        return [_check_row(MetricsRow(0, seed, algorithm, 0.0, kl, math.nan))]
    j_by_update = dict(result.objective_curve)
    alpha = config.mix.alpha if algorithm.startswith("valuedice") else 0.0
    return [_check_row(MetricsRow(u, seed, algorithm, alpha, kl,
                                  j_by_update.get(u, math.nan)))
            for u, kl in result.kl_curve]


def _write_rows(path: Path, rows: list[MetricsRow]) -> None:
    rows = sorted(rows, key=lambda r: (r.seed, r.update, r.algorithm))
    with open(path, "w") as fh:
        fh.write("update,seed,algorithm,alpha,kl,j_value\n")
        for r in rows:
            fh.write(f"{r.update},{r.seed},{r.algorithm},{r.alpha!r},"
                     f"{r.kl!r},{r.j_value!r}\n")


def _summarize(rows: list[MetricsRow]) -> dict:
    summary: dict = {"algorithms": {}}
    by_algo: dict[str, dict[int, float]] = {}
    for r in rows:
        by_algo.setdefault(r.algorithm, {})[r.seed] = r.kl  # last row per seed wins
    for algo, finals in by_algo.items():
        vals = np.array([finals[s] for s in sorted(finals)])
        summary["algorithms"][algo] = {
            "final_kl_mean": float(vals.mean()),
            "final_kl_stddev": float(vals.std()),
            "final_kl_per_seed": {str(s): finals[s] for s in sorted(finals)},
        }
    summary["ranking"] = sorted(summary["algorithms"],
                                key=lambda a: summary["algorithms"][a]["final_kl_mean"])
    return summary


def _policy_tables(config: ExperimentConfig, seed: int) -> dict:
    """BC policy snapshot for the summary: probabilities and greedy actions."""
    mdp, demos, _ = _build_environment(config, seed)
    policy = bc_fit(demos, BC_REGULARIZER, mdp.n_states, mdp.n_actions)
    return {
        "seed": seed,
        "per_state_policy": [[float(p) for p in row] for row in policy.probs()],
        "greedy_actions": [int(a) for a in policy.greedy_actions()],
    }


def _execute(config: ExperimentConfig, algorithms: tuple[str, ...]) -> int:
    out = Path(config.out)
    if str(out.parent) not in ("", "."):
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        rows: list[MetricsRow] = []
        for seed in config.seeds:
            mdp, demos, target = _build_environment(config, seed)
            for algorithm in algorithms:
                rows.extend(_run_single(config, algorithm, seed, mdp, demos, target))
        summary = _summarize(rows)
        summary["experiment"] = config.experiment
        summary["seeds"] = list(config.seeds)
        if "bc" in algorithms:
            summary["bc_policy"] = _policy_tables(config, config.seeds[0])
        _write_rows(Path(str(out) + ".csv"), rows)
        with open(str(out) + ".json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def run_experiment(config: ExperimentConfig) -> int:
    """Run the configured algorithm for every seed; write CSV + JSON summary."""
    return _execute(config, (config.algorithm,))


def compare_baselines(config: ExperimentConfig) -> int:
    """Head-to-head on shared per-seed demonstrations; one CSV, ranked summary."""
    return _execute(config, ("valuedice-exact", "bc", "gail"))


def export_kl_curve(result: TrainResult, path) -> None:
    """Two-column update,kl CSV; repr floats round-trip bitwise."""
    if not result.kl_curve:
        raise ValueError("result has an empty curve")
    with open(path, "w") as fh:
        fh.write("update,kl\n")
        for update, kl in result.kl_curve:
            fh.write(f"{update},{kl!r}\n")
