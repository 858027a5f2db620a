"""Time the jitted kernels against the vectorized numpy fallback.

Calls the private per-path entry points directly so both sides run in one
process regardless of the VALUEDICE_NUMBA switch. Reports best-of-N wall
times and cross-path agreement on the final state.

    python3 benchmarks/bench_kernels.py --mc-samples 200000 --updates 20000
"""

import argparse
import time

import numpy as np

import valuedice._kernels as kernels
from valuedice import (build_ring_mdp, generate_demonstrations,
                       stochastic_expert_policy)


def _best(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_mc(n_samples, repeats):
    mdp = build_ring_mdp(8)
    policy = stochastic_expert_policy(0.75, 8)
    rng = np.random.default_rng(0)
    ts = kernels.geometric_lengths(rng.random(n_samples), mdp.gamma)
    offs = np.concatenate(([0], np.cumsum(2 * ts + 2)))[:-1].astype(np.int64)
    ublock = rng.random(int((2 * ts + 2).sum()))
    p0_cum = np.cumsum(mdp.initial_dist)
    pi_cum = np.cumsum(policy.probs(), axis=1)
    tr_cum = np.cumsum(mdp.transition, axis=2)

    def run(fn):
        counts = np.zeros((8, 2), np.int64)
        fn(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts)
        return counts

    t_np = _best(lambda: run(kernels._mc_counts_np), repeats)
    print(f"mc_counts   numpy  {n_samples} samples: {t_np:.3f} s")
    if not kernels._HAS_NUMBA:
        print("mc_counts   numba  unavailable (numba not importable)")
        return
    run(kernels._mc_counts_nb)  # compile outside the timed region
    t_nb = _best(lambda: run(kernels._mc_counts_nb), repeats)
    agree = np.array_equal(run(kernels._mc_counts_np), run(kernels._mc_counts_nb))
    print(f"mc_counts   numba  {n_samples} samples: {t_nb:.3f} s "
          f"({t_np / t_nb:.1f}x, counts identical: {agree})")


def bench_train(n_updates, batch, repeats):
    mdp = build_ring_mdp(8)
    expert = stochastic_expert_policy(0.75, 8)
    demos = generate_demonstrations(mdp, expert, 25, 20, seed=0)
    ex_s, ex_a, ex_sn, ex_tail = demos.arrays()
    capacity = 4096
    asc = kernels.truncation_table(mdp.gamma, max(int(ex_tail.max()), capacity))
    tr_cum = np.cumsum(mdp.transition, axis=2)
    u = np.random.default_rng(1).random(n_updates * (2 + 7 * batch))

    def run(fn):
        nu = np.zeros((8, 2))
        theta = np.zeros((8, 2))
        ctl = np.array([0, 0, 0], np.int64)
        bufs = [np.zeros(capacity, np.int64) for _ in range(3)]
        j_out = np.empty(n_updates)
        fn(nu, theta, ctl, u, n_updates, batch, ex_s, ex_a, ex_sn, ex_tail,
           *bufs, tr_cum, asc, mdp.gamma, 0.1, 0.1, 0.01, 1e-4, 40.0, j_out)
        return nu, theta, ctl

    t_np = _best(lambda: run(kernels._train_chunk_np), repeats)
    print(f"train_chunk numpy  {n_updates} updates (batch {batch}): {t_np:.3f} s")
    if not kernels._HAS_NUMBA:
        print("train_chunk numba  unavailable (numba not importable)")
        return
    run(kernels._train_chunk_nb)
    t_nb = _best(lambda: run(kernels._train_chunk_nb), repeats)
    nu_a, th_a, ctl_a = run(kernels._train_chunk_np)
    nu_b, th_b, ctl_b = run(kernels._train_chunk_nb)
    print(f"train_chunk numba  {n_updates} updates (batch {batch}): {t_nb:.3f} s "
          f"({t_np / t_nb:.1f}x)")
    print(f"            agreement: max |d nu| {np.abs(nu_a - nu_b).max():.2e}, "
          f"max |d theta| {np.abs(th_a - th_b).max():.2e}, "
          f"control state identical: {np.array_equal(ctl_a, ctl_b)}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mc-samples", type=int, default=200_000)
    parser.add_argument("--updates", type=int, default=20_000)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    bench_mc(args.mc_samples, args.repeats)
    bench_train(args.updates, args.batch, args.repeats)


if __name__ == "__main__":
    main()
