"""Lattice directed polymer with heavy-tailed site weights and the
intermediate-disorder scaling toward the continuum model."""
import math
from dataclasses import dataclass

import numpy as np

from .kernel import LogValue
from .measures import critical_alpha

MAX_SITES = 5 * 10 ** 7


@dataclass
class DiscreteEnvironment:
    """eta[n-1] holds the weights at time n on the box [-N, N]^d (only the
    parity cone reachable by the walk matters)."""
    N: int
    d: int
    alpha: float
    eta: np.ndarray
    seed: int = 0

    @property
    def law(self):
        c, m = environment_constants(self.alpha)
        return {"kind": "shifted_pareto", "alpha": self.alpha, "scale": c, "shift": m}


def environment_constants(alpha):
    """eta = c (P - m) with P Pareto(alpha) on [1, inf): E[eta] = 0 forces
    m = alpha/(alpha-1); ess-inf eta = -1 forces c = 1/(m-1) = alpha - 1."""
    if alpha <= 1:
        raise ValueError("a centered heavy-tailed environment needs alpha > 1")
    m = alpha / (alpha - 1)
    return 1.0 / (m - 1), m


def sample_eta(alpha, size, rng):
    c, m = environment_constants(alpha)
    p = (1.0 - rng.random(size)) ** (-1.0 / alpha)
    return c * (p - m)


def sample_environment(N, d, alpha, rng, seed=0):
    side = 2 * N + 1
    if N * side ** d > MAX_SITES:
        raise ValueError(f"N = {N} too large for d = {d}")
    return DiscreteEnvironment(N, d, alpha, sample_eta(alpha, (N,) + (side,) * d, rng), seed)


def zero_environment(N, d, alpha=1.5):
    side = 2 * N + 1
    return DiscreteEnvironment(N, d, alpha, np.zeros((N,) + (side,) * d))


def _step(Z, d):
    out = np.zeros_like(Z)
    for ax in range(d):
        out += np.roll(Z, 1, axis=ax) + np.roll(Z, -1, axis=ax)
    return out / (2 * d)


def transfer_tables(env, beta):
    """Normalized forward tables W[n] and log scales: the unnormalized
    Z(n, x) = W[n][x] * exp(log_scale[n])."""
    if not (0 <= beta < 1):
        raise ValueError("beta must lie in [0, 1) so that weights stay positive")
    N, d = env.N, env.d
    side = 2 * N + 1
    W = np.zeros((N + 1,) + (side,) * d)
    W[(0,) + (N,) * d] = 1.0
    scales = np.zeros(N + 1)
    for n in range(1, N + 1):
        z = _step(W[n - 1], d) * (1.0 + beta * env.eta[n - 1])
        s = z.sum()
        W[n] = z / s
        scales[n] = scales[n - 1] + math.log(s)
    return W, scales


def discrete_partition(env, beta):
    """Z = E[prod_n (1 + beta eta_{n, S_n})] for the simple random walk."""
    _, scales = transfer_tables(env, beta)
    return LogValue(float(scales[-1]))


def endpoint_law(env, beta):
    """Lattice sites and Gibbs probabilities of S_N (first coordinate
    marginal for d > 1)."""
    W, _ = transfer_tables(env, beta)
    last = W[-1]
    if env.d > 1:
        last = last.sum(axis=tuple(range(1, env.d)))
    sites = np.arange(-env.N, env.N + 1)
    return sites, last / last.sum()


def sample_walks(env, beta, n, rng):
    """Gibbs-weighted walks by backward sampling through the tables.
    Returns an int array (n, N+1, d)."""
    W, _ = transfer_tables(env, beta)
    N, d = env.N, env.d
    side = 2 * N + 1
    flat = W[-1].ravel()
    idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
    pos = np.array(np.unravel_index(idx, (side,) * d)).T  # (n, d)
    out = np.empty((n, N + 1, d), dtype=np.int64)
    out[:, N] = pos
    moves = np.vstack([np.eye(d, dtype=np.int64), -np.eye(d, dtype=np.int64)])
    for k in range(N, 0, -1):
        cand = out[:, k][:, None, :] + moves[None, :, :]  # (n, 2d, d)
        ok = np.all((cand >= 0) & (cand < side), axis=2)
        cc = np.clip(cand, 0, side - 1)
        w = W[k - 1][tuple(cc[..., j] for j in range(d))] * ok
        w /= w.sum(axis=1, keepdims=True)
        u = rng.random(n)
        choice = np.minimum(np.sum(np.cumsum(w, axis=1) <= u[:, None], axis=1), 2 * d - 1)
        out[:, k - 1] = cand[np.arange(n), choice]
    return out - N


def walk_weight_log(env, beta, walk):
    """log of prod (1+beta eta) (2d)^-N for one explicit walk (n, d)."""
    N, d = env.N, env.d
    idx = tuple((walk[1:, j] + N) for j in range(d))
    return float(np.sum(np.log1p(beta * env.eta[(np.arange(N),) + idx]))) - N * math.log(2 * d)


def intermediate_beta(beta_hat, N, alpha, d):
    """beta_N = beta_hat 2^((1-alpha)/alpha) d^(d(1-alpha)/2) N^(-(d/2alpha)(1+2/d-alpha))."""
    if not (1 < alpha < critical_alpha(d)):
        raise ValueError(f"alpha must lie in (1, {critical_alpha(d)}) for d = {d}")
    expo = -(d / (2 * alpha)) * (1 + 2 / d - alpha)
    return beta_hat * 2 ** ((1 - alpha) / alpha) * d ** (d * (1 - alpha) / 2) * N ** expo


def rescaled_path(walk, N, d, ts=None):
    """sqrt(d/N) times the linear interpolation of the walk at times N t."""
    walk = np.asarray(walk, dtype=float).reshape(N + 1, -1)
    if ts is None:
        ts = np.arange(N + 1) / N
    ts = np.asarray(ts, dtype=float)
    s = ts * N
    k = np.minimum(np.floor(s).astype(int), N - 1)
    u = (s - k)[:, None]
    return math.sqrt(d / N) * ((1 - u) * walk[k] + u * walk[k + 1])


def ks_lattice_vs_continuous(sites, probs, scale, xgrid, cdf):
    """Kolmogorov distance between the lattice law of scale*sites and a
    continuous CDF tabulated on xgrid."""
    z = scale * sites
    G = np.interp(z, xgrid, cdf, left=0.0, right=1.0)
    F_after = np.cumsum(probs)
    F_before = F_after - probs
    return float(max(np.max(np.abs(F_after - G)), np.max(np.abs(F_before - G))))


@dataclass
class ScalingRow:
    N: int
    beta_N: float
    mean_logZ: float
    var_logZ: float
    ks_endpoint: float


def scaling_comparison(alpha, d, beta_hat, Ns, n_env, reference, rng):
    """Per-N disorder statistics of the lattice polymer against a continuum
    endpoint reference given as (xgrid, cdf) of the first coordinate."""
    xgrid, cdf = reference
    rows = []
    for N in Ns:
        bN = intermediate_beta(beta_hat, N, alpha, d)
        logs = np.empty(n_env)
        avg = None
        for k in range(n_env):
            env = sample_environment(N, d, alpha, rng)
            W, scales = transfer_tables(env, bN)
            logs[k] = scales[-1]
            last = W[-1] if d == 1 else W[-1].sum(axis=tuple(range(1, d)))
            avg = last if avg is None else avg + last
        avg /= avg.sum()
        sites = np.arange(-N, N + 1)
        ks = ks_lattice_vs_continuous(sites, avg, math.sqrt(d / N), xgrid, cdf)
        rows.append(ScalingRow(N, bN, float(logs.mean()), float(logs.var(ddof=1)), ks))
    return rows


def continuum_endpoint_reference(lam, beta, a, L, n_clouds, rng, xgrid, T=1.0):
    """Disorder-averaged endpoint CDF of the continuum polymer (d = 1) on
    ``xgrid``, from truncated clouds at level a."""
    from .cloud import sample_cloud
    from .sampler import endpoint_log_density
    dens = np.zeros(len(xgrid))
    for _ in range(n_clouds):
        c = sample_cloud(lam, T, L, a, 1, rng=rng)
        dens += np.exp(endpoint_log_density(c, beta, None, xgrid[:, None], T))
    dens /= n_clouds
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(xgrid))])
    return xgrid, cdf / cdf[-1]


def write_report(path, rows):
    with open(path, "w") as fh:
        fh.write("N,beta_N,mean_logZ,var_logZ,ks_endpoint\n")
        for r in rows:
            fh.write(f"{r.N},{float(r.beta_N)!r},{float(r.mean_logZ)!r},{float(r.var_logZ)!r},{float(r.ks_endpoint)!r}\n")
