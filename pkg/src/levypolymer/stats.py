"""Degeneracy diagnostics: the Y_a counting statistics with closed-form
moments, blow-up events, the entropy-energy maximum and the sup-weight
statistic."""
import math
from dataclasses import dataclass, asdict
from itertools import combinations

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .cloud import sample_cloud, size_biased_augment
from .kernel import heat_kernel_log
from .measures import INF, AlphaStable, Tabulated
from .montecarlo import RunningMoments
from .partition import _max_path


# ---- Y_a statistics ----

def _box_prob(R):
    # P(|N(0,1)| <= R)
    return 2.0 * ndtr(R) - 1.0


def degeneracy_Y(cloud, a, R, d=None):
    """Y_a on atoms with t <= 1.

    d = 1: sum of v over v in [a, 1), |x| <= R
    d = 2: sum of v/(t v v) over v in [a, 1), |x|_inf <= R sqrt(t)
    d >= 3: count of atoms with |x|_inf <= R sqrt(t), v >= a v t^(d/2)
    """
    d = cloud.d if d is None else d
    if len(cloud) == 0:
        return 0.0
    t, lu = cloud.t, cloud.log_marks
    xn = np.max(np.abs(cloud.x), axis=1)
    inside = t <= 1.0
    if d == 1:
        keep = inside & (lu >= math.log(a)) & (lu < 0.0) & (xn <= R)
        return float(np.sum(np.exp(lu[keep])))
    if d == 2:
        keep = inside & (lu >= math.log(a)) & (lu < 0.0) & (xn <= R * np.sqrt(t))
        v = np.exp(lu[keep])
        return float(np.sum(v / np.maximum(t[keep], v)))
    thresh = np.maximum(math.log(a), 0.5 * d * np.log(np.maximum(t, 1e-300)))
    keep = inside & (xn <= R * np.sqrt(t)) & (lu >= thresh)
    return float(np.count_nonzero(keep))


def _d3_integral(lam, a, d, f):
    # int_0^1 f(t) dt with a kink where t^(d/2) = a
    brk = [a ** (2.0 / d)] if a < 1 else None
    val, _ = integrate.quad(f, 0.0, 1.0, points=brk, limit=200, epsabs=1e-14, epsrel=1e-11)
    return val


@dataclass
class YMoments:
    mean: float
    var: float
    mean_sizebiased: float
    q_a: float


def y_moments(lam, beta, a, R, d):
    """Closed-form mean and variance of Y_a under the plain cloud law, and
    its mean under the size-biased law."""
    if d == 1:
        m1 = lam.moment(1.0, a, 1.0) if a < 1 else 0.0
        m2 = lam.moment(2.0, a, 1.0) if a < 1 else 0.0
        q, _ = integrate.quad(lambda t: _box_prob(R / math.sqrt(t)) if t > 0 else 1.0,
                              0.0, 1.0, limit=200, epsabs=1e-14)
        return YMoments(2 * R * m1, 2 * R * m2, 2 * R * m1 + beta * q * m2, q)
    if d == 2:
        if a >= 1:
            return YMoments(0.0, 0.0, 0.0, _box_prob(R) ** 2)
        # inner time integrals: int t v/(t v v) dt = v^2/2 + v(1-v),
        # int t v^2/(t v v)^2 dt = v^2/2 + v^2 |log v|, int v/(t v v) dt = v(1 + |log v|)
        m1, m2 = lam.moment(1.0, a, 1.0), lam.moment(2.0, a, 1.0)
        l2 = lam.log_moment(2.0, 1, a, 1.0)
        q = _box_prob(R) ** 2
        mean = 4 * R * R * (m1 - 0.5 * m2)
        var = 4 * R * R * (0.5 * m2 + l2)
        return YMoments(mean, var, mean + beta * q * (m2 + l2), q)
    def lev(t):
        return max(a, t ** (0.5 * d))
    base = _d3_integral(lam, a, d, lambda t: t ** (0.5 * d) * lam.tail_mass(lev(t)))
    mean = (2 * R) ** d * base
    q = _box_prob(R) ** d
    extra = beta * q * _d3_integral(lam, a, d, lambda t: lam.moment(1.0, lev(t), INF))
    return YMoments(mean, mean, mean + extra, q)


def default_R(lam, a, d):
    """Dimension-dependent radius R_a (grows as a decreases)."""
    if d == 1:
        return math.sqrt(lam.moment(2.0, a, 1.0)) if a < 1 else 0.0
    if d == 2:
        return lam.log_moment(2.0, 1, a, 1.0) ** 0.25 if a < 1 else 0.0
    base = _d3_integral(lam, a, d, lambda t: t ** (0.5 * d) * lam.tail_mass(max(a, t ** (0.5 * d))))
    return base ** (1.0 / (2 * d))


def _stat_cloud(lam, a, R, d, rng):
    # plain cloud on [0,1] x [-R,R]^d large enough for Y_a
    return sample_cloud(lam, 1.0, max(R, 1e-12), a, d, rng=rng)


@dataclass
class ShiftReport:
    a: float
    R: float
    mean_P: float
    se_P: float
    var_P: float
    mean_sizebiased: float
    se_sizebiased: float
    var_sizebiased: float
    separation: float
    closed_mean_P: float
    closed_var_P: float
    closed_mean_sizebiased: float
    n_replicas: int

    def to_dict(self):
        return asdict(self)


def size_biased_shift_test(lam, beta, a, d, R=None, n_replicas=1000, rng=None):
    """Y_a under plain clouds and under size-biased clouds (plain cloud plus
    atoms along an independent Brownian path), with the separation
    statistic (mean gap)^2 / (Var_P + Var_sizebiased)."""
    R = default_R(lam, a, d) if R is None else R
    plain, biased = RunningMoments(), RunningMoments()
    for _ in range(n_replicas):
        c = _stat_cloud(lam, a, R, d, rng)
        plain.push(degeneracy_Y(c, a, R, d))
        cb, _ = size_biased_augment(c, beta, a, rng, lam=lam)
        biased.push(degeneracy_Y(cb, a, R, d))
    gap = biased.mean - plain.mean
    denom = plain.var + biased.var
    sep = 0.0 if beta == 0 else (gap * gap / denom if denom > 0 else math.inf)
    mom = y_moments(lam, beta, a, R, d)
    return ShiftReport(a, R, plain.mean, plain.se, plain.var, biased.mean, biased.se, biased.var,
                       sep, mom.mean, mom.var, mom.mean_sizebiased, n_replicas)


# ---- blow-up events ----

def log_tail_mass_at_log(lam, s):
    """log lambda([e^s, inf)) without forming e^s."""
    if isinstance(lam, AlphaStable):
        return -lam.alpha * s
    if isinstance(lam, Tabulated) and s >= math.log(lam.v[-1]):
        if lam.tail == "log-power":
            th = lam.theta
            return math.log(lam._tail_amp / th) - th * math.log(s)
        if lam.tail == "power":
            _, _, c, sl = lam._power_pieces()[-1]
            e = sl + 1
            return math.log(c / -e) + e * s if e < 0 else math.inf
        return -math.inf
    m = lam.tail_mass(math.exp(s))
    return math.log(m) if m > 0 else -math.inf


def blowup_rates(lam, d, jmax):
    """Poisson means of the atom counts behind A_j, j = 1..jmax:
    1/2 (2^(j+1))^d (1 - 2^-d) lambda([exp(4^(j+1)), inf)), i.e. time 1/2
    times the volume of the shell 2^(j-1) <= |x|_inf < 2^j."""
    js = np.arange(1, jmax + 1)
    out = np.empty(jmax)
    for k, j in enumerate(js):
        lt = log_tail_mass_at_log(lam, 4.0 ** (j + 1))
        out[k] = 0.5 * 2.0 ** (d * (j + 1)) * (1 - 2.0 ** -d) * math.exp(lt) if lt > -math.inf else 0.0
    return js, out


def blowup_events(cloud, d=None, jmax=10):
    """Indicators of A_j: some atom with t in [1/2, 1],
    |x|_inf in [2^(j-1), 2^j) and log v >= 4^(j+1)."""
    d = cloud.d if d is None else d
    xn = np.max(np.abs(cloud.x), axis=1) if len(cloud) else np.zeros(0)
    tin = (cloud.t >= 0.5) & (cloud.t <= 1.0)
    out = np.zeros(jmax, dtype=bool)
    for j in range(1, jmax + 1):
        out[j - 1] = bool(np.any(tin & (xn >= 2.0 ** (j - 1)) & (xn < 2.0 ** j)
                                 & (cloud.log_marks >= 4.0 ** (j + 1))))
    return out


def sample_blowup_cloud(lam, d, jmax, rng):
    """Cloud on [0,1] x [-2^jmax, 2^jmax]^d keeping only marks >= e^16 (the
    smallest level any A_j looks at)."""
    return sample_cloud(lam, 1.0, 2.0 ** jmax, math.exp(16.0), d, rng=rng)


# ---- entropy-energy ----

def entropy_H(times, xs, t0=0.0, x0=None):
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float).reshape(len(times), -1)
    x0 = np.zeros(xs.shape[1]) if x0 is None else np.asarray(x0, dtype=float)
    dt = np.diff(np.concatenate([[t0], times]))
    dx = np.diff(np.vstack([x0[None, :], xs]), axis=0)
    return float(np.sum(np.sum(dx * dx, axis=1) / dt))


def energy_G(log_marks):
    return float(np.sum(log_marks))


def entropy_energy_sup(cloud, eps):
    """max over nonempty atom chains of G - (eps/2) H; -inf for an empty cloud."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if len(cloud) == 0:
        return -math.inf
    x0 = np.zeros(cloud.d) if cloud.origin[1] is None else np.asarray(cloud.origin[1], dtype=float)
    M = _max_path(cloud.t, cloud.x, cloud.log_marks, 0.5 * eps, float(cloud.origin[0]), x0, True)
    return float(M.max())


def entropy_energy_brute(cloud, eps):
    """Exhaustive maximum over all nonempty subsets (small clouds only)."""
    n = len(cloud)
    if n > 20:
        raise ValueError("exhaustive maximization limited to 20 atoms")
    best = -math.inf
    for k in range(1, n + 1):
        for sub in combinations(range(n), k):
            idx = list(sub)
            v = energy_G(cloud.log_marks[idx]) - 0.5 * eps * entropy_H(cloud.t[idx], cloud.x[idx])
            best = max(best, v)
    return best


def sup_weight_statistic(cloud, T=None):
    """log of max over atoms (t <= T) of v rho_t(x); -inf when empty."""
    T = cloud.T if T is None else T
    keep = (cloud.t > 0) & (cloud.t <= T)
    if not keep.any():
        return -math.inf
    return float(np.max(cloud.log_marks[keep] + heat_kernel_log(cloud.t[keep], cloud.x[keep])))


# ---- sweep diagnostics ----

@dataclass
class DiagnosticRow:
    a: float
    Y_mean_P: float
    Y_mean_sizebiased: float
    separation: float
    T_entropy: float


def degeneracy_sweep(lam, beta, levels, d, n_replicas, rng, eps=1.0):
    """Separation statistic and mean entropy-energy maximum along a grid of
    truncation levels."""
    rows = []
    for a in levels:
        rep = size_biased_shift_test(lam, beta, a, d, None, n_replicas, rng)
        ent = []
        for _ in range(min(n_replicas, 50)):
            c = _stat_cloud(lam, a, max(rep.R, 1.0), d, rng)
            v = entropy_energy_sup(c, eps)
            if v > -math.inf:
                ent.append(v)
        rows.append(DiagnosticRow(float(a), rep.mean_P, rep.mean_sizebiased, rep.separation,
                                  float(np.mean(ent)) if ent else -math.inf))
    return rows


def write_diagnostics(path, rows):
    with open(path, "w") as fh:
        fh.write("a,Y_mean_P,Y_mean_sizebiased,separation,T_entropy\n")
        for r in rows:
            fh.write(f"{float(r.a)!r},{float(r.Y_mean_P)!r},{float(r.Y_mean_sizebiased)!r},{float(r.separation)!r},{float(r.T_entropy)!r}\n")
