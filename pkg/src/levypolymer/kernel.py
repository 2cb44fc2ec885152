"""Heat kernels in log form, kernel chains, simplex integrals and
Brownian-bridge path filling."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, ndtri

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class LogValue:
    """A nonnegative number stored as its natural log (-inf encodes 0)."""
    log: float

    @classmethod
    def from_value(cls, v):
        if v < 0:
            raise ValueError("LogValue holds nonnegative numbers only")
        return cls(math.log(v) if v > 0 else -math.inf)

    @classmethod
    def zero(cls):
        return cls(-math.inf)

    @property
    def is_zero(self):
        return self.log == -math.inf

    @property
    def value(self):
        return math.exp(self.log)

    def __mul__(self, other):
        if isinstance(other, LogValue):
            return LogValue(self.log + other.log)
        return self * LogValue.from_value(other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, LogValue):
            return LogValue(self.log - other.log)
        return LogValue(self.log - math.log(other))

    def __add__(self, other):
        if not isinstance(other, LogValue):
            other = LogValue.from_value(other)
        return LogValue(float(np.logaddexp(self.log, other.log)))

    __radd__ = __add__

    def __pow__(self, k):
        return LogValue(self.log * k)

    def __float__(self):
        return self.value


def log_sum(logs):
    """log of the sum of exp(logs); -inf for an empty input."""
    logs = np.asarray(logs, dtype=float)
    if logs.size == 0:
        return -math.inf
    return float(logsumexp(logs))


def heat_kernel_log(t, x):
    """log rho_t(x) = -(d/2) log(2 pi t) - |x|^2/(2t). ``x`` has its
    coordinates on the last axis; ``t`` broadcasts against the leading axes."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    d = x.shape[-1]
    out = -0.5 * d * (LOG_2PI + np.log(t)) - np.sum(x * x, axis=-1) / (2 * t)
    return float(out) if np.ndim(out) == 0 else out


def kernel_chain_log(times, points, origin=(0.0, None)):
    """log of prod rho_{t_i - t_{i-1}}(x_i - x_{i-1}) starting at ``origin``."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return 0.0
    points = np.asarray(points, dtype=float).reshape(len(times), -1)
    t0, x0 = origin
    x0 = np.zeros(points.shape[1]) if x0 is None else np.asarray(x0, dtype=float)
    tt = np.concatenate([[t0], times])
    if np.any(np.diff(tt) <= 0):
        raise ValueError("chain times must be strictly increasing after the origin")
    xx = np.vstack([x0, points])
    return float(np.sum(heat_kernel_log(np.diff(tt), np.diff(xx, axis=0))))


def squared_kernel_integral(t, d):
    """int rho_t(x)^2 dx = 2^-d (pi t)^(-d/2)."""
    if t <= 0:
        raise ValueError("t must be positive")
    return 2.0 ** -d * (math.pi * t) ** (-d / 2)


def simplex_series_coefficient(m, exponent, T=1.0, final_gap=False):
    """Integral over 0 < t_1 < ... < t_m < T of prod (t_i - t_{i-1})^-exponent.

    With ``final_gap`` the last gap T - t_m carries the same power as well,
    giving Gamma(1-e)^(m+1) T^((m+1)(1-e)-1) / Gamma((m+1)(1-e)).
    """
    if exponent >= 1:
        raise ValueError("exponent must be < 1 for convergence")
    if m < 0:
        raise ValueError("m must be >= 0")
    g = 1.0 - exponent
    if final_gap:
        k = m + 1
        return math.exp(k * gammaln(g) + (k * g - 1) * math.log(T) - gammaln(k * g))
    if m == 0:
        return 1.0
    return math.exp(m * gammaln(g) + m * g * math.log(T) - gammaln(m * g + 1))


def standard_normal(rng, size):
    """Gaussian draws by inverse CDF of uniforms from ``rng``."""
    u = rng.random(size)
    return ndtri(np.clip(u, 2.0 ** -60, None))


def bridge_fill(anchor_times, anchor_points, grid, rng, d=None):
    """Brownian path through the anchors evaluated on ``grid``.

    ``anchor_times`` starts with 0 (position from ``anchor_points[0]``);
    after the last anchor the path continues as free Brownian motion.
    Returns (times, positions) on the merged grid + anchor times.
    """
    at = np.asarray(anchor_times, dtype=float)
    ax = np.asarray(anchor_points, dtype=float).reshape(len(at), -1)
    if d is None:
        d = ax.shape[1]
    if at[0] != 0 or np.any(np.diff(at) <= 0):
        raise ValueError("anchors must start at 0 with increasing times")
    times = np.union1d(np.asarray(grid, dtype=float), at)
    times = times[times >= 0]
    idx = np.searchsorted(times, at)
    # free Brownian motion on the merged grid, then pin each segment:
    # x0 + W(s) - (s - s0)/(s1 - s0) (W(s1) - W(s0) - (x1 - x0))
    incr = np.sqrt(np.diff(times))[:, None] * standard_normal(rng, (len(times) - 1, d))
    w = np.vstack([np.zeros((1, d)), np.cumsum(incr, axis=0)])
    pos = np.empty((len(times), d))
    for k in range(len(at)):
        i0 = idx[k]
        if k + 1 < len(at):
            i1 = idx[k + 1]
            frac = ((times[i0:i1 + 1] - times[i0]) / (times[i1] - times[i0]))[:, None]
            gap = w[i1] - w[i0] - (ax[k + 1] - ax[k])
            pos[i0:i1 + 1] = ax[k] + (w[i0:i1 + 1] - w[i0]) - frac * gap
        else:
            pos[i0:] = ax[k] + (w[i0:] - w[i0])
    return times, pos
