"""Hot sampling and update loops: numba kernels with a vectorized numpy fallback.

The active path is chosen once at import time: numba when importable, unless
VALUEDICE_NUMBA=0 (or "false") forces the numpy implementations. Both paths
consume identical pre-drawn uniform streams and share the same cumulative
probability tables, so every integer decision (state, action, batch index,
time offset) is bitwise identical across paths; float accumulations may
differ by summation order only.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-free installs
    _HAS_NUMBA = False

USE_NUMBA = _HAS_NUMBA and os.environ.get("VALUEDICE_NUMBA", "1").lower() not in ("0", "false")


def geometric_lengths(u: np.ndarray, gamma: float) -> np.ndarray:
    """Unbounded Geom(1-gamma) draws via inverse CDF; u=0 maps to 0, never overflows."""
    if gamma <= 0.0:
        return np.zeros(u.shape[0], dtype=np.int64)
    return np.floor(np.log1p(-u) / np.log(gamma)).astype(np.int64)


def pick(cum: np.ndarray, u: float) -> int:
    """First index with u < cum[index]; last index catches cumsum shortfall."""
    n = cum.shape[0]
    idx = int(np.searchsorted(cum, u, side="right"))
    return idx if idx < n else n - 1


def pick_rows(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized pick with one cumulative row per draw."""
    idx = (u[:, None] >= cum_rows).sum(axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


def truncation_table(gamma: float, max_len: int) -> np.ndarray:
    """asc[k] = 1 - gamma^k, built by cumulative product so both paths share bytes."""
    if max_len < 1:
        max_len = 1
    powers = np.concatenate(([1.0], np.cumprod(np.full(max_len, gamma))))
    return 1.0 - powers


def _trunc_geom_np(u: np.ndarray, asc: np.ndarray, length: np.ndarray) -> np.ndarray:
    """Geom(1-gamma) conditioned below per-draw length, via the shared asc table."""
    target = u * asc[length]
    k = np.searchsorted(asc, target, side="left") - 1
    return np.clip(k, 0, length - 1)


# ---------------------------------------------------------------------------
# Monte-Carlo occupancy counts.
#
# Uniform block layout per sample (after the separate geometric-length draw t):
#   [u_s0, (u_a0, u_s1), ..., (u_a_{t-1}, u_s_t), u_a_t]   -> 2t + 2 entries.
# ---------------------------------------------------------------------------


def _mc_counts_np(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts):
    n = ts.shape[0]
    s = np.minimum(np.searchsorted(p0_cum, ublock[offs], side="right"), p0_cum.size - 1)
    alive = np.arange(n)
    k = 0
    while True:
        alive = alive[ts[alive] > k]
        if alive.size == 0:
            break
        sa = s[alive]
        a = pick_rows(pi_cum[sa], ublock[offs[alive] + 1 + 2 * k])
        s[alive] = pick_rows(tr_cum[sa, a], ublock[offs[alive] + 2 + 2 * k])
        k += 1
    a = pick_rows(pi_cum[s], ublock[offs + 1 + 2 * ts])
    np.add.at(counts, (s, a), 1)


if _HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _pick_row_nb(cum, s, u):
        n = cum.shape[1]
        for a in range(n - 1):
            if u < cum[s, a]:
                return a
        return n - 1

    @njit(cache=True)
    def _pick_vec_nb(cum, u):
        n = cum.shape[0]
        for i in range(n - 1):
            if u < cum[i]:
                return i
        return n - 1

    @njit(cache=True)
    def _trunc_geom_nb(u, asc, length):
        target = u * asc[length]
        k = 0
        while asc[k + 1] < target:
            k += 1
        if k > length - 1:
            k = length - 1
        return k

    @njit(cache=True)
    def _mc_counts_nb(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts):
        n = ts.shape[0]
        for i in range(n):
            off = offs[i]
            t = ts[i]
            s = _pick_vec_nb(p0_cum, ublock[off])
            for k in range(t):
                a = _pick_row_nb(pi_cum, s, ublock[off + 1 + 2 * k])
                s = _pick_vec_nb(tr_cum[s, a], ublock[off + 2 + 2 * k])
            a = _pick_row_nb(pi_cum, s, ublock[off + 1 + 2 * t])
            counts[s, a] += 1


def mc_counts(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts):
    if USE_NUMBA:
        _mc_counts_nb(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts)
    else:
        _mc_counts_np(ts, offs, ublock, p0_cum, pi_cum, tr_cum, counts)


# ---------------------------------------------------------------------------
# Empirical saddle-point trainer inner loop.
#
# Uniform layout per update (2 + 7B entries):
#   [u_env_action, u_env_next,
#    then per batch slot: u_expert_idx, u_expert_off, u_replay_idx,
#    u_replay_off, u_action0, u_expert_next_action, u_replay_next_action]
#
# ctl holds [env_state, buffer_size, buffer_write]; the buffer is a FIFO ring,
# oldest at (write - size) mod capacity. Gradients follow the score-function
# form at the sampled successor/initial actions; clip saturation zeroes the
# corresponding exponential-path derivative.
# ---------------------------------------------------------------------------


def _train_chunk_np(nu, theta, ctl, u, n_upd, batch, ex_s, ex_a, ex_sn, ex_tail,
                    buf_s, buf_a, buf_sn, tr_cum, asc, gamma, alpha,
                    lr_nu, lr_pi, penalty, clip, j_out):
    n_states = nu.shape[0]
    capacity = buf_s.shape[0]
    n_expert = ex_s.shape[0]
    stride = 2 + 7 * batch
    for up in range(n_upd):
        blk = u[up * stride:(up + 1) * stride]
        z = theta - theta.max(axis=1, keepdims=True)
        pi = np.exp(z)
        pi /= pi.sum(axis=1, keepdims=True)
        pi_cum = np.cumsum(pi, axis=1)

        env_s = int(ctl[0])
        a = pick(pi_cum[env_s], blk[0])
        env_sn = pick(tr_cum[env_s, a], blk[1])
        w = int(ctl[2])
        buf_s[w] = env_s
        buf_a[w] = a
        buf_sn[w] = env_sn
        ctl[2] = (w + 1) % capacity
        if ctl[1] < capacity:
            ctl[1] += 1
        ctl[0] = env_sn
        size = int(ctl[1])
        head = (int(ctl[2]) - size) % capacity

        ub = blk[2:].reshape(batch, 7)
        k = np.minimum((ub[:, 0] * n_expert).astype(np.int64), n_expert - 1)
        item = k + _trunc_geom_np(ub[:, 1], asc, ex_tail[k])
        s0 = ex_s[k]
        se, ae, sen = ex_s[item], ex_a[item], ex_sn[item]
        r = np.minimum((ub[:, 2] * size).astype(np.int64), size - 1)
        phys = (head + r + _trunc_geom_np(ub[:, 3], asc, size - r)) % capacity
        rs, ra, rsn = buf_s[phys], buf_a[phys], buf_sn[phys]
        a0 = pick_rows(pi_cum[s0], ub[:, 4])
        aen = pick_rows(pi_cum[sen], ub[:, 5])
        ran = pick_rows(pi_cum[rsn], ub[:, 6])

        de = nu[se, ae] - gamma * nu[sen, aen]
        dr = nu[rs, ra] - gamma * nu[rsn, ran]
        dec = np.clip(de, -clip, clip)
        drc = np.clip(dr, -clip, clip)
        m = max(dec.max(), drc.max())
        ee = (1.0 - alpha) * np.exp(dec - m)
        er = alpha * np.exp(drc - m)
        esum = ee.sum() + er.sum()
        j_log = m + np.log(esum / batch)
        j_lin = ((1.0 - alpha) * (1.0 - gamma) * nu[s0, a0] + alpha * dr).mean()
        j_out[up] = j_log - j_lin

        ce = np.where(de == dec, ee / esum, 0.0)
        cr = np.where(dr == drc, er / esum, 0.0)
        g_nu = np.zeros_like(nu)
        np.add.at(g_nu, (se, ae), ce)
        np.add.at(g_nu, (sen, aen), -gamma * ce)
        np.add.at(g_nu, (rs, ra), cr)
        np.add.at(g_nu, (rsn, ran), -gamma * cr)
        np.add.at(g_nu, (s0, a0), -(1.0 - alpha) * (1.0 - gamma) / batch)
        np.add.at(g_nu, (rs, ra), -alpha / batch)
        np.add.at(g_nu, (rsn, ran), alpha * gamma / batch)

        g_th = np.zeros_like(theta)
        row = np.zeros(n_states)
        for sarr, aarr, coef in (
            (sen, aen, -gamma * ce * nu[sen, aen]),
            (rsn, ran, -gamma * cr * nu[rsn, ran]),
            (s0, a0, -(1.0 - alpha) * (1.0 - gamma) / batch * nu[s0, a0]),
            (rsn, ran, alpha * gamma / batch * nu[rsn, ran]),
        ):
            np.add.at(g_th, (sarr, aarr), coef)
            row[:] = 0.0
            np.add.at(row, sarr, coef)
            g_th -= row[:, None] * pi

        nu -= lr_nu * g_nu
        theta += lr_pi * (g_th - 2.0 * penalty * theta)


if _HAS_NUMBA:

    @njit(cache=True)
    def _add_score_nb(g, pi, s, a, coef):
        g[s, a] += coef
        for b in range(g.shape[1]):
            g[s, b] -= coef * pi[s, b]

    @njit(cache=True)
    def _train_chunk_nb(nu, theta, ctl, u, n_upd, batch, ex_s, ex_a, ex_sn, ex_tail,
                        buf_s, buf_a, buf_sn, tr_cum, asc, gamma, alpha,
                        lr_nu, lr_pi, penalty, clip, j_out):
        n_states, n_actions = nu.shape
        capacity = buf_s.shape[0]
        n_expert = ex_s.shape[0]
        stride = 2 + 7 * batch
        pi = np.empty((n_states, n_actions))
        pi_cum = np.empty((n_states, n_actions))
        g_nu = np.empty((n_states, n_actions))
        g_th = np.empty((n_states, n_actions))
        b_s0 = np.empty(batch, np.int64)
        b_a0 = np.empty(batch, np.int64)
        b_se = np.empty(batch, np.int64)
        b_ae = np.empty(batch, np.int64)
        b_sen = np.empty(batch, np.int64)
        b_aen = np.empty(batch, np.int64)
        b_rs = np.empty(batch, np.int64)
        b_ra = np.empty(batch, np.int64)
        b_rsn = np.empty(batch, np.int64)
        b_ran = np.empty(batch, np.int64)
        b_de = np.empty(batch)
        b_dr = np.empty(batch)
        b_dec = np.empty(batch)
        b_drc = np.empty(batch)
        b_ee = np.empty(batch)
        b_er = np.empty(batch)

        for up in range(n_upd):
            base = up * stride
            for s in range(n_states):
                mx = theta[s, 0]
                for a in range(1, n_actions):
                    if theta[s, a] > mx:
                        mx = theta[s, a]
                tot = 0.0
                for a in range(n_actions):
                    pi[s, a] = np.exp(theta[s, a] - mx)
                    tot += pi[s, a]
                c = 0.0
                for a in range(n_actions):
                    pi[s, a] /= tot
                    c += pi[s, a]
                    pi_cum[s, a] = c

            env_s = ctl[0]
            a = _pick_row_nb(pi_cum, env_s, u[base])
            env_sn = _pick_vec_nb(tr_cum[env_s, a], u[base + 1])
            w = ctl[2]
            buf_s[w] = env_s
            buf_a[w] = a
            buf_sn[w] = env_sn
            ctl[2] = (w + 1) % capacity
            if ctl[1] < capacity:
                ctl[1] += 1
            ctl[0] = env_sn
            size = ctl[1]
            head = (ctl[2] - size) % capacity

            for i in range(batch):
                ub = base + 2 + 7 * i
                k = np.int64(u[ub] * n_expert)
                if k >= n_expert:
                    k = n_expert - 1
                item = k + _trunc_geom_nb(u[ub + 1], asc, ex_tail[k])
                b_s0[i] = ex_s[k]
                b_se[i] = ex_s[item]
                b_ae[i] = ex_a[item]
                b_sen[i] = ex_sn[item]
                r = np.int64(u[ub + 2] * size)
                if r >= size:
                    r = size - 1
                phys = (head + r + _trunc_geom_nb(u[ub + 3], asc, size - r)) % capacity
                b_rs[i] = buf_s[phys]
                b_ra[i] = buf_a[phys]
                b_rsn[i] = buf_sn[phys]
                b_a0[i] = _pick_row_nb(pi_cum, b_s0[i], u[ub + 4])
                b_aen[i] = _pick_row_nb(pi_cum, b_sen[i], u[ub + 5])
                b_ran[i] = _pick_row_nb(pi_cum, b_rsn[i], u[ub + 6])

            m = -1e300
            for i in range(batch):
                de = nu[b_se[i], b_ae[i]] - gamma * nu[b_sen[i], b_aen[i]]
                dr = nu[b_rs[i], b_ra[i]] - gamma * nu[b_rsn[i], b_ran[i]]
                dec = min(max(de, -clip), clip)
                drc = min(max(dr, -clip), clip)
                b_de[i] = de
                b_dr[i] = dr
                b_dec[i] = dec
                b_drc[i] = drc
                if dec > m:
                    m = dec
                if drc > m:
                    m = drc
            esum = 0.0
            for i in range(batch):
                b_ee[i] = (1.0 - alpha) * np.exp(b_dec[i] - m)
                b_er[i] = alpha * np.exp(b_drc[i] - m)
                esum += b_ee[i] + b_er[i]
            j_log = m + np.log(esum / batch)
            j_lin = 0.0
            for i in range(batch):
                j_lin += (1.0 - alpha) * (1.0 - gamma) * nu[b_s0[i], b_a0[i]] + alpha * b_dr[i]
            j_lin /= batch
            j_out[up] = j_log - j_lin

            for s in range(n_states):
                for b in range(n_actions):
                    g_nu[s, b] = 0.0
                    g_th[s, b] = 0.0
            for i in range(batch):
                ce = b_ee[i] / esum
                cr = b_er[i] / esum
                if b_de[i] == b_dec[i]:
                    g_nu[b_se[i], b_ae[i]] += ce
                    g_nu[b_sen[i], b_aen[i]] -= gamma * ce
                    _add_score_nb(g_th, pi, b_sen[i], b_aen[i],
                                  -gamma * ce * nu[b_sen[i], b_aen[i]])
                if b_dr[i] == b_drc[i]:
                    g_nu[b_rs[i], b_ra[i]] += cr
                    g_nu[b_rsn[i], b_ran[i]] -= gamma * cr
                    _add_score_nb(g_th, pi, b_rsn[i], b_ran[i],
                                  -gamma * cr * nu[b_rsn[i], b_ran[i]])
                g_nu[b_s0[i], b_a0[i]] -= (1.0 - alpha) * (1.0 - gamma) / batch
                g_nu[b_rs[i], b_ra[i]] -= alpha / batch
                g_nu[b_rsn[i], b_ran[i]] += alpha * gamma / batch
                _add_score_nb(g_th, pi, b_s0[i], b_a0[i],
                              -(1.0 - alpha) * (1.0 - gamma) / batch * nu[b_s0[i], b_a0[i]])
                _add_score_nb(g_th, pi, b_rsn[i], b_ran[i],
                              alpha * gamma / batch * nu[b_rsn[i], b_ran[i]])

            for s in range(n_states):
                for b in range(n_actions):
                    nu[s, b] -= lr_nu * g_nu[s, b]
                    theta[s, b] += lr_pi * (g_th[s, b] - 2.0 * penalty * theta[s, b])


def train_chunk(*args):
    if USE_NUMBA:
        _train_chunk_nb(*args)
    else:
        _train_chunk_np(*args)
