"""Exact polymer path sampling: skeleton draws from the backward tables,
then Brownian bridges through the chosen atoms."""
import math
from dataclasses import dataclass

import numpy as np


from .kernel import LogValue, bridge_fill, heat_kernel_log
from .partition import dp_tables, log_partition, log_p2p


def transition_log_probs(tables):
    """(n+1) x (n+1) matrix of log step probabilities. Row 0 is the start,
    row i+1 is atom i; column 0 is 'stop', column j+1 is 'jump to atom j'."""
    t, x, lu, B = tables.t, tables.x, tables.log_marks, tables.backward
    n = len(t)
    lb = math.log(tables.beta) if tables.beta > 0 else -math.inf
    t0, x0 = tables.start
    src_t = np.concatenate([[t0], t])
    src_x = np.vstack([x0[None, :], x])
    src_B = np.concatenate([[tables.backward_start], B])
    P = np.full((n + 1, n + 1), -math.inf)
    P[:, 0] = -src_B
    for i in range(n + 1):
        later = np.arange(n)[t > src_t[i]] if i == 0 else np.arange(i, n)
        if len(later) == 0:
            continue
        P[i, later + 1] = (lb + lu[later] + B[later] - src_B[i]
                           + heat_kernel_log(t[later] - src_t[i], x[later] - src_x[i]))
    return P


def sample_skeleton(tables, rng, n_draws=None):
    """Draw atom skeletons with probability w(sigma)/Z. Returns one tuple of
    atom indices (into ``tables.t``), or a list of them when n_draws is set."""
    n = len(tables.t)
    single = n_draws is None
    k = 1 if single else n_draws
    if n == 0:
        out = [()] * k
        return out[0] if single else out
    P = np.exp(transition_log_probs(tables))
    cdf = np.cumsum(P, axis=1)
    cdf /= cdf[:, -1:]
    state = np.zeros(k, dtype=np.int64)
    alive = np.ones(k, dtype=bool)
    paths = [[] for _ in range(k)]
    while alive.any():
        idx = np.nonzero(alive)[0]
        u = rng.random(len(idx))
        nxt = np.empty(len(idx), dtype=np.int64)
        for c in range(0, len(idx), 4096):
            rows = cdf[state[idx[c:c + 4096]]]
            nxt[c:c + 4096] = np.sum(rows <= u[c:c + 4096, None], axis=1)
        nxt = np.minimum(nxt, n)
        stop = nxt == 0
        alive[idx[stop]] = False
        for i, j in zip(idx[~stop], nxt[~stop]):
            paths[i].append(int(j) - 1)
        state[idx[~stop]] = nxt[~stop]
    out = [tuple(p) for p in paths]
    return out[0] if single else out


def skeleton_log_prob(tables, skeleton):
    """Sum of step log probabilities along a skeleton (including stopping)."""
    P = transition_log_probs(tables)
    cur, total = 0, 0.0
    for j in skeleton:
        total += P[cur, j + 1]
        cur = j + 1
    return total + P[cur, 0]


@dataclass
class PolymerPath:
    skeleton: tuple
    times: np.ndarray
    positions: np.ndarray
    atom_times: np.ndarray
    log_weight_of_skeleton: float

    def to_csv(self, path, append=False, sample_id=None):
        d = self.positions.shape[1]
        is_atom = np.isin(self.times, self.atom_times)
        with open(path, "a" if append else "w") as fh:
            if not append:
                cols = (["sample"] if sample_id is not None else []) + ["t"] + \
                    [f"x_{i + 1}" for i in range(d)] + ["is_atom"]
                fh.write(",".join(cols) + "\n")
            for t, x, a in zip(self.times, self.positions, is_atom):
                row = ([str(sample_id)] if sample_id is not None else []) + \
                    [repr(float(t))] + [repr(float(v)) for v in x] + [str(int(a))]
                fh.write(",".join(row) + "\n")


def default_grid(T, n=2 ** 10):
    return np.linspace(0.0, T, n + 1)


def sample_path(cloud, beta, window=None, grid=None, rng=None, tables=None, lam=None):
    """One path from the polymer measure on [0, T]."""
    if tables is None:
        tables = dp_tables(cloud, beta, window, lam=lam)
    if grid is None:
        grid = default_grid(tables.T)
    sk = sample_skeleton(tables, rng)
    anchors_t = np.concatenate([[0.0], tables.t[list(sk)]])
    anchors_x = np.vstack([tables.start[1][None, :], tables.x[list(sk)]])
    times, pos = bridge_fill(anchors_t, anchors_x, grid, rng)
    lw = 0.0
    if sk:
        lw = tables.log_drift_factor + len(sk) * math.log(beta) + float(np.sum(tables.log_marks[list(sk)])) \
            + float(np.sum(heat_kernel_log(np.diff(anchors_t), np.diff(anchors_x, axis=0))))
    else:
        lw = tables.log_drift_factor
    return PolymerPath(sk, times, pos, tables.t[list(sk)], lw)


def estimate_Q_of_f(cloud, beta, window, f, n_samples, rng, grid=None, lam=None):
    """Monte Carlo mean and standard error of f over polymer paths. ``f``
    receives (times, positions)."""
    tables = dp_tables(cloud, beta, window, lam=lam)
    vals = np.empty(n_samples)
    for k in range(n_samples):
        path = sample_path(cloud, beta, window, grid, rng, tables)
        vals[k] = f(path.times, path.positions)
    se = vals.std(ddof=1) / math.sqrt(n_samples) if n_samples > 1 else math.nan
    return float(vals.mean()), float(se)


def marginal_density(cloud, beta, window, times, positions, lam=None):
    """Joint density of (B_{t_1}, ..., B_{t_k}) under the polymer measure,
    t_k = T: product of point-to-point partition functions over Z."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(np.concatenate([[0.0], times])) <= 0):
        raise ValueError("times must be strictly increasing and positive")
    T = times[-1]
    positions = np.asarray(positions, dtype=float).reshape(len(times), cloud.d)
    total = 0.0
    prev_t, prev_x = 0.0, np.zeros(cloud.d)
    for t, x in zip(times, positions):
        total += log_p2p(cloud, beta, window, t, x, lam=lam, start=(prev_t, prev_x))
        prev_t, prev_x = t, x
    return LogValue(total - log_partition(cloud, beta, window, T, lam))


def endpoint_log_density(cloud, beta, window, xs, T=None, lam=None):
    """log density of B_T under the polymer measure at each point of ``xs``."""
    T = cloud.T if T is None else T
    return log_p2p(cloud, beta, window, T, xs, lam=lam) - log_partition(cloud, beta, window, T, lam)


def empty_skeleton_prob(tables):
    """Q(sigma = empty) = exp(-beta drift T)/Z."""
    return math.exp(tables.log_drift_factor - tables.log_Z_forward)
