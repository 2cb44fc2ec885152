"""Partition functions of the polymer in a truncated Poisson environment.

Every value is the positive skeleton sum

    Z = exp(-beta * drift * T) * sum over time-ordered atom subsets s of
        beta^|s| * prod rho_{dt}(dx) * prod u

evaluated in log domain by an O(n^2) forward (or backward) recursion.
"""
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import erfcx, gammaln, logsumexp

from .kernel import LOG_2PI, LogValue, heat_kernel_log, simplex_series_coefficient
from .measures import (INF, TruncationWindow, comparison_constant_large,
                       comparison_constant_small, drift_rate, mean_rate, mu,
                       second_moment_mass)
from .cloud import truncate


# ---- compiled recursions ----

@numba.njit(cache=True, fastmath=True)
def _forward_log(t, x, lu, logbeta, t0, x0):
    """F[j] = log(beta u_j [rho(start->j) + sum_{i<j} exp(F[i]) rho(i->j)])."""
    n, d = x.shape
    half_d = 0.5 * d
    F = np.empty(n)
    buf = np.empty(n + 1)
    for j in range(n):
        dt = t[j] - t0
        s = 0.0
        for k in range(d):
            z = x[j, k] - x0[k]
            s += z * z
        v = -half_d * (LOG_2PI + math.log(dt)) - s / (2.0 * dt)
        buf[0] = v
        m = v
        for i in range(j):
            dt = t[j] - t[i]
            s = 0.0
            for k in range(d):
                z = x[j, k] - x[i, k]
                s += z * z
            v = F[i] - half_d * (LOG_2PI + math.log(dt)) - s / (2.0 * dt)
            buf[i + 1] = v
            if v > m:
                m = v
        acc = 0.0
        for i in range(j + 1):
            acc += math.exp(buf[i] - m)
        F[j] = logbeta + lu[j] + m + math.log(acc)
    return F


@numba.njit(cache=True, fastmath=True)
def _backward_log(t, x, lu, logbeta, t0, x0):
    """B[i] = log(1 + sum_{j>i} beta u_j rho(i->j) exp(B[j])); also the
    same quantity from the start point."""
    n, d = x.shape
    half_d = 0.5 * d
    B = np.empty(n)
    buf = np.empty(n + 1)
    start = 0.0
    for i in range(n - 1, -2, -1):
        if i >= 0:
            ti = t[i]
        else:
            ti = t0
        buf[0] = 0.0
        m = 0.0
        cnt = 1
        for j in range(i + 1, n):
            dt = t[j] - ti
            s = 0.0
            for k in range(d):
                if i >= 0:
                    z = x[j, k] - x[i, k]
                else:
                    z = x[j, k] - x0[k]
                s += z * z
            v = logbeta + lu[j] + B[j] - half_d * (LOG_2PI + math.log(dt)) - s / (2.0 * dt)
            buf[cnt] = v
            cnt += 1
            if v > m:
                m = v
        acc = 0.0
        for k in range(cnt):
            acc += math.exp(buf[k] - m)
        if i >= 0:
            B[i] = m + math.log(acc)
        else:
            start = m + math.log(acc)
    return B, start


@numba.njit(cache=True)
def _max_path(t, x, score, pen, t0, x0, use_space):
    """M[j] = score_j + max(start term, max_{i<j} M[i] + link(i, j)) where the
    link is -pen * |dx|^2/dt (use_space) or -pen * log dt (otherwise)."""
    n, d = x.shape
    M = np.empty(n)
    for j in range(n):
        dt = t[j] - t0
        if use_space:
            s = 0.0
            for k in range(d):
                z = x[j, k] - x0[k]
                s += z * z
            best = -pen * s / dt
        else:
            best = -pen * math.log(dt)
        for i in range(j):
            dt = t[j] - t[i]
            if use_space:
                s = 0.0
                for k in range(d):
                    z = x[j, k] - x[i, k]
                    s += z * z
                v = M[i] - pen * s / dt
            else:
                v = M[i] - pen * math.log(dt)
            if v > best:
                best = v
        M[j] = score[j] + best
    return M


# ---- tables ----

def _window(cloud, window):
    if window is None:
        return TruncationWindow(cloud.a_min)
    if not isinstance(window, TruncationWindow):
        return TruncationWindow(*window)
    return window


def _origin_x(cloud, x0):
    return np.zeros(cloud.d) if x0 is None else np.asarray(x0, dtype=float).reshape(cloud.d)


@dataclass
class DPTables:
    """Forward and backward log tables of one truncated cloud."""
    t: np.ndarray
    x: np.ndarray
    log_marks: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    backward_start: float
    beta: float
    window: TruncationWindow
    drift: float
    T: float
    start: tuple = field(default=(0.0, None))

    @property
    def log_drift_factor(self):
        return -self.beta * self.drift * (self.T - self.start[0])

    @property
    def log_Z_forward(self):
        return self.log_drift_factor + float(logsumexp(np.concatenate([[0.0], self.forward])))

    @property
    def log_Z_backward(self):
        return self.log_drift_factor + self.backward_start


def dp_tables(cloud, beta, window=None, T=None, lam=None, start=(0.0, None), backward=True):
    """Build DPTables for atoms of ``cloud`` with marks in ``window`` and
    times in (start time, T). ``backward=False`` skips the backward pass."""
    window = _window(cloud, window)
    lam = lam or cloud.intensity
    view = truncate(cloud, window)
    T = cloud.T if T is None else T
    t0, x0 = start[0], _origin_x(cloud, start[1])
    keep = (view.t > t0) & (view.t < T)
    t, x, lu = view.t[keep], view.x[keep], view.log_marks[keep]
    logbeta = math.log(beta) if beta > 0 else -math.inf
    if beta > 0:
        F = _forward_log(t, x, lu, logbeta, t0, x0)
        if backward:
            B, bs = _backward_log(t, x, lu, logbeta, t0, x0)
        else:
            B, bs = np.full(len(t), math.nan), math.nan
    else:
        F, B, bs = np.full(len(t), -math.inf), np.zeros(len(t)), 0.0
    return DPTables(t, x, lu, F, B, float(bs), beta, window, drift_rate(lam, window), T,
                    (t0, x0))


def log_partition(cloud, beta, window=None, T=None, lam=None):
    """log of the point-to-plane partition function (float)."""
    return dp_tables(cloud, beta, window, T, lam, backward=False).log_Z_forward


def partition_point_to_plane(cloud, beta, window=None, T=None, lam=None):
    return LogValue(log_partition(cloud, beta, window, T, lam))


def log_p2p(cloud, beta, window, t, x, lam=None, start=(0.0, None)):
    """log Z[(start), (t, x)] for one time and an array of endpoints x
    (shape (k, d) or (d,)). Only atoms with times in (start, t) enter."""
    if t <= start[0]:
        raise ValueError("endpoint time must exceed the start time")
    tab = dp_tables(cloud, beta, window, T=t, lam=lam, start=start, backward=False)
    return _close(tab, t, x)


def _close(tab, t, x):
    x = np.asarray(x, dtype=float)
    d = len(tab.start[1])
    single = x.ndim == 0 or (x.ndim == 1 and x.shape[0] == d)
    xs = x.reshape(-1, d)
    t0, x0 = tab.start
    terms = [heat_kernel_log(np.full(len(xs), t - t0), xs - x0)[:, None]]
    if len(tab.t):
        diff = xs[:, None, :] - tab.x[None, :, :]
        terms.append(tab.forward[None, :] + heat_kernel_log(t - tab.t[None, :], diff))
    out = logsumexp(np.concatenate(terms, axis=1), axis=1) - tab.beta * tab.drift * (t - t0)
    return float(out[0]) if single else out


def partition_point_to_point(cloud, beta, window, endpoint, lam=None):
    t, x = endpoint
    return LogValue(log_p2p(cloud, beta, window, t, np.asarray(x, dtype=float), lam))


def partition_between(cloud, beta, window, p1, p2, lam=None):
    """Z from (t1, x1) to (t2, x2): atoms with times in (t1, t2) only."""
    (t1, x1), (t2, x2) = p1, p2
    if t1 >= t2:
        raise ValueError("need t1 < t2")
    x1 = np.asarray(x1, dtype=float).reshape(cloud.d)
    return LogValue(log_p2p(cloud, beta, window, t2, np.asarray(x2, dtype=float), lam,
                            start=(t1, x1)))


def brute_force_enumeration(cloud, beta, window=None, endpoint=None, T=None, lam=None,
                            return_terms=False):
    """Explicit sum over all 2^n atom subsets (n <= 20).

    Subsets are encoded as bitmasks; each atom is processed in time order and
    appended to every subset containing it, so each subset's weight is the
    plain product of its kernels and marks."""
    window = _window(cloud, window)
    lam = lam or cloud.intensity
    view = truncate(cloud, window)
    horizon = cloud.T if T is None else T
    if endpoint is not None:
        horizon = endpoint[0]
    keep = view.t < horizon
    t, x, lu = view.t[keep], view.x[keep], view.log_marks[keep]
    n = len(t)
    if n > 20:
        raise ValueError("brute force is capped at 20 atoms")
    d = cloud.d
    masks = np.arange(2 ** n, dtype=np.int64)
    logw = np.zeros(2 ** n)
    last_t = np.zeros(2 ** n)
    last_x = np.zeros((2 ** n, d))
    for k in range(n):
        has = (masks >> k) & 1 == 1
        logw[has] += (math.log(beta) + lu[k]
                      + heat_kernel_log(t[k] - last_t[has], x[k] - last_x[has]))
        last_t[has] = t[k]
        last_x[has] = x[k]
    if endpoint is not None:
        te, xe = endpoint[0], np.asarray(endpoint[1], dtype=float).reshape(d)
        logw += heat_kernel_log(te - last_t, xe - last_x)
    logw += -beta * drift_rate(lam, window) * horizon
    if return_terms:
        return masks, logw
    return LogValue(float(logsumexp(logw)))


# ---- restricted partition function ----

@dataclass
class RestrictionParams:
    q: float
    gamma: float
    p: float = 1.5

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")


def default_restriction(q, d, p=1.5):
    return RestrictionParams(q, d / 2.0, p)


def in_restricted_set(times, log_marks, q, gamma, t0=0.0):
    """True iff every subchain s' satisfies prod u' < q^|s'| prod gap'^gamma
    (gaps measured within s', first gap from t0)."""
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        return True
    score = np.asarray(log_marks, dtype=float) - math.log(q)
    M = _max_path(times, np.zeros((len(times), 1)), score, gamma, t0, np.zeros(1), False)
    return bool(np.max(M) < 0)


def restricted_partition(cloud, beta, window, params, lam=None, T=None):
    """Skeleton sum restricted to subsets whose every subchain passes the
    mark-versus-gap test. Exact enumeration with pruning (a failing subset
    makes every superset fail), capped at 20 atoms."""
    window = _window(cloud, window)
    lam = lam or cloud.intensity
    view = truncate(cloud, window)
    T = cloud.T if T is None else T
    keep = view.t < T
    t, x, lu = view.t[keep], view.x[keep], view.log_marks[keep]
    n = len(t)
    if n > 20:
        raise ValueError("restriction experiment requires smaller window (at most 20 atoms)")
    lq, g, lb = math.log(params.q), params.gamma, math.log(beta)
    logs = [0.0]

    # state: (last index or -1, M values of chain ends in the current subset, log weight)
    def extend(last, chain, logw):
        lt = 0.0 if last < 0 else t[last]
        lx = np.zeros(cloud.d) if last < 0 else x[last]
        for j in range(last + 1, n):
            best = -g * math.log(t[j])
            for ti, mi in chain:
                best = max(best, mi - g * math.log(t[j] - ti))
            mj = lu[j] - lq + best
            if mj >= 0:
                continue
            w = logw + lb + lu[j] + heat_kernel_log(t[j] - lt, x[j] - lx)
            logs.append(w)
            extend(j, chain + [(t[j], mj)], w)

    extend(-1, [], 0.0)
    return LogValue(float(logsumexp(logs)) - beta * drift_rate(lam, window) * T)


def restricted_gap_bound(lam, beta, q, params, eps, mmax=200):
    """Gamma-series upper bound on E[Z^{[a,q)} - restricted Z] at T = 1,
    uniform in a (uses the increasing-function comparison constant)."""
    p, g = params.p, params.gamma
    e = g * (p + eps - 1)
    if e >= 1:
        raise ValueError("need gamma (p + eps - 1) < 1")
    cbold = comparison_constant_large(lam, q, p) * q ** (1 - p)
    r = math.log(beta * 2 ** eps * cbold / eps)
    m = np.arange(1, mmax + 1)
    terms = m * r + m * gammaln(1 - e) - gammaln(m * (1 - e) + 1)
    return math.exp(beta * mu(lam) + float(logsumexp(terms))) / (p - 1)


def restricted_second_moment_bound(lam, beta, q, params, eps, d, mmax=200):
    """Gamma-series upper bound on E[(restricted Z)^2] at T = 1."""
    p, g = params.p, params.gamma
    if not (0 < eps < 2 - p):
        raise ValueError("need 0 < eps < 2 - p")
    e = d / 2.0 - (2 - p - eps) * g
    if e >= 1:
        raise ValueError("need d/2 - (2 - p - eps) gamma < 1")
    cbold = comparison_constant_small(lam, q, p) * q ** (2 - p)
    r = math.log(beta ** 2 * cbold / eps / (2 ** d * math.pi ** (d / 2)))
    m = np.arange(1, mmax + 1)
    terms = m * r + np.array([math.log(simplex_series_coefficient(int(k), e)) for k in m])
    series = 1.0 + math.exp(float(logsumexp(terms))) / (2 - p - eps)
    return math.exp(2 * beta * mu(lam, q)) * series


# ---- sweeps ----

@dataclass
class SweepReport:
    levels: list
    log_Z: list
    rel_diff: list
    n_atoms: list
    seed: int = 0
    intensity: dict = None

    def rows(self):
        return list(zip(self.levels, self.log_Z, self.rel_diff, self.n_atoms))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("a_level,log_Z,rel_diff,n_atoms\n")
            for a, lz, rd, n in self.rows():
                fh.write(f"{float(a)!r},{float(lz)!r},{float(rd)!r},{n}\n")

    def to_dict(self):
        return {"levels": self.levels, "log_Z": self.log_Z, "rel_diff": self.rel_diff,
                "n_atoms": self.n_atoms, "seed": self.seed, "intensity": self.intensity}


def a_sweep(family, beta, levels=None, b=INF, T=None, lam=None):
    """Partition values on one coupled family, from the coarsest level down.
    rel_diff[k] = |Z_k - Z_{k-1}| / Z_k (nan for the first level)."""
    levels = family.levels if levels is None else sorted(levels, reverse=True)
    lam = lam or family.base.intensity
    logs, counts, rel = [], [], []
    for a in levels:
        view = family.view(a, b)
        logs.append(log_partition(view, beta, TruncationWindow(a, b), T, lam))
        counts.append(len(view))
        rel.append(math.nan if len(logs) == 1 else abs(math.expm1(logs[-2] - logs[-1])))
    desc = None if lam is None else lam.descriptor()
    return SweepReport(list(levels), logs, rel, counts, family.base.seed, desc)


# ---- closed-form moments ----

@dataclass
class MomentOracles:
    mean: float
    truncation_gap: float
    second_moment: float
    second_moment_series_beta2: float
    second_moment_series_beta1: float
    mean_rate: float
    variance_mass: float


def second_moment_series(beta, V, rate, T, power=2, mmax=400):
    """e^{2 beta rate T} sum_m (beta^power V / (2 sqrt pi))^m * simplex(m, 1/2, T)
    in d = 1 (power = 2 is the replica computation; power = 1 is the
    alternative prefactor kept for comparison)."""
    c = beta ** power * V / (2 * math.sqrt(math.pi))
    if c == 0:
        return math.exp(2 * beta * rate * T)
    m = np.arange(0, mmax + 1)
    terms = m * math.log(c) + m * gammaln(0.5) + 0.5 * m * math.log(T) - gammaln(0.5 * m + 1)
    return math.exp(2 * beta * rate * T + float(logsumexp(terms)))


def moment_oracles(lam, beta, window, T=1.0, q=None):
    """Closed-form expectations for the truncated partition function."""
    if not isinstance(window, TruncationWindow):
        window = TruncationWindow(*window)
    rate = mean_rate(lam, window)
    if rate == INF:
        raise ValueError("first moment diverges for this window")
    mean = math.exp(beta * rate * T)
    gap = math.nan
    if q is not None:
        if q == INF:
            gap = 0.0
        else:
            gap = mean - math.exp(beta * mean_rate(lam, TruncationWindow(window.a, q)) * T)
    V = second_moment_mass(lam, window)
    if V == INF:
        s2 = s1 = closed = INF
    else:
        s2 = second_moment_series(beta, V, rate, T, power=2)
        s1 = second_moment_series(beta, V, rate, T, power=1)
        x = beta ** 2 * V * math.sqrt(T) / 2
        # e^{x^2}(1 + erf x) = 2 e^{x^2} - erfcx(x)
        closed = math.exp(2 * beta * rate * T) * (2 * math.exp(x * x) - erfcx(x))
    return MomentOracles(mean, gap, closed, s2, s1, rate, V)


def windowing_bias(log_Z, L, T, endpoint_norm=0.0):
    """Estimate of the mass lost by truncating space to [-L, L]^d."""
    return math.exp(log_Z - (L - endpoint_norm) ** 2 / (2 * T))


def default_half_width(T, endpoint_norm=0.0):
    return endpoint_norm + 6 * math.sqrt(T)
