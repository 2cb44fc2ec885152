"""Stochastic heat equation driven by a truncated Poisson noise, built from
point-to-point partition functions, with a mild-form residual check."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, roots_legendre

from .kernel import heat_kernel_log
from .measures import TruncationWindow, drift_rate
from .partition import _forward_log, _window, dp_tables
from .cloud import truncate


class GrowthConditionError(ValueError):
    pass


@dataclass
class InitialCondition:
    """Initial measure u0.

    kind 'dirac': unit mass at ``points[0]``
    kind 'atomic': masses ``masses`` (may be signed) at ``points``
    kind 'density': function ``fn`` on the box [lo, hi]^d; ``growth`` is a
        constant c with |u0|([-r, r]^d) <= exp(c r^2) when ``box`` is None.
    """
    kind: str
    points: np.ndarray = None
    masses: np.ndarray = None
    fn: object = None
    box: tuple = None
    growth: float = 0.0

    @classmethod
    def dirac(cls, y0):
        return cls("dirac", points=np.atleast_2d(np.asarray(y0, dtype=float)),
                   masses=np.ones(1))

    @classmethod
    def atomic(cls, points, masses):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls("atomic", points=pts, masses=np.asarray(masses, dtype=float))

    @classmethod
    def density(cls, fn, box=None, growth=0.0):
        return cls("density", fn=fn, box=box, growth=growth)

    def check_growth(self, T):
        """limsup r^-2 log |u0|([-r,r]^d) < 1/(2T); automatic for compact support."""
        if self.kind in ("dirac", "atomic") or self.box is not None:
            return True
        if self.growth >= 1.0 / (2 * T):
            raise GrowthConditionError(
                f"growth constant {self.growth} is not below 1/(2T) = {1 / (2 * T)}")
        return True


def _reverse_tables(cloud, beta, window, t, x, lam):
    """Log weights G_i of all continuations from atom i to the endpoint
    (t, x): the forward recursion run on the time-reversed cloud."""
    window = _window(cloud, window)
    view = truncate(cloud, window)
    keep = view.t < t
    ts, xs, lu = view.t[keep], view.x[keep], view.log_marks[keep]
    rev = slice(None, None, -1)
    logbeta = math.log(beta) if beta > 0 else -math.inf
    if beta > 0 and len(ts):
        G = _forward_log(t - ts[rev], xs[rev].copy(), lu[rev].copy(), logbeta, 0.0,
                         np.asarray(x, dtype=float).reshape(cloud.d))[rev]
    else:
        G = np.full(len(ts), -math.inf)
    return ts, xs, G, drift_rate(lam or cloud.intensity, window)


def log_kernel_from(cloud, beta, window, t, x, ys, lam=None):
    """log Z[(0, y), (t, x)] for every start point y in ``ys`` (k, d)."""
    ts, xs, G, drift = _reverse_tables(cloud, beta, window, t, x, lam)
    ys = np.asarray(ys, dtype=float).reshape(-1, cloud.d)
    x = np.asarray(x, dtype=float).reshape(cloud.d)
    terms = [heat_kernel_log(np.full(len(ys), t), x - ys)[:, None]]
    if len(ts):
        terms.append(G[None, :] + heat_kernel_log(ts[None, :], xs[None, :, :] - ys[:, None, :]))
    return logsumexp(np.concatenate(terms, axis=1), axis=1) - beta * drift * t


def she_value(cloud, beta, window, u0, t, x, lam=None, return_error=False):
    """u(t, x) = int Z[(0, y), (t, x)] u0(dy)."""
    if not (0 < t <= cloud.T):
        raise ValueError("t must lie in (0, T]")
    u0.check_growth(cloud.T)
    x = np.asarray(x, dtype=float).reshape(cloud.d)
    err = 0.0
    if u0.kind in ("dirac", "atomic"):
        lk = log_kernel_from(cloud, beta, window, t, x, u0.points, lam)
        val = float(np.sum(u0.masses * np.exp(lk)))
    else:
        if cloud.d != 1:
            val, err = _density_tensor(cloud, beta, window, u0, t, x, lam)
        else:
            lo, hi = u0.box if u0.box is not None else (-np.inf, np.inf)
            ts, xs, G, drift = _reverse_tables(cloud, beta, window, t, x, lam)

            def integrand(y):
                lk = [heat_kernel_log(t, x - y)]
                if len(ts):
                    lk.extend(G + heat_kernel_log(ts, (xs - y)))
                return math.exp(float(logsumexp(lk)) - beta * drift * t) * u0.fn(y)

            pts = [p for p in np.concatenate([[x[0]], xs[:, 0]]) if lo < p < hi]
            if np.isfinite(lo) and np.isfinite(hi):
                val, err = integrate.quad(integrand, lo, hi, points=pts or None, limit=500,
                                          epsabs=1e-13, epsrel=1e-10)
            else:
                val, err = integrate.quad(integrand, lo, hi, limit=500, epsabs=1e-13, epsrel=1e-10)
    return (val, err) if return_error else val


def _density_tensor(cloud, beta, window, u0, t, x, lam, n=201):
    lo, hi = u0.box
    g = np.linspace(lo, hi, n)
    mesh = np.stack(np.meshgrid(*([g] * cloud.d), indexing="ij"), axis=-1).reshape(-1, cloud.d)
    vals = np.exp(log_kernel_from(cloud, beta, window, t, x, mesh, lam)) * np.array([u0.fn(y) for y in mesh])
    vals = vals.reshape([n] * cloud.d)
    for _ in range(cloud.d):
        vals = integrate.trapezoid(vals, g, axis=0)
    return float(vals), math.nan


@dataclass
class ResidualReport:
    max_relative: float
    points: list = field(default_factory=list)


def mild_residual(cloud, beta, window, u0, times, xs, n_space=2 ** 12, n_time=16, lam=None):
    """Max relative residual of the mild equation

        u(t,x) = int rho_t(x-y) u0(dy)
                 + beta [ sum_{atoms s<t} rho_{t-s}(x-y) u(s,y) v
                          - drift int_0^t int rho_{t-s}(x-y) u(s,y) dy ds ]

    for d = 1 and atomic/dirac u0. The atom sum is exact; the drift integral
    uses Gauss-Legendre panels in s split at atom times and a trapezoid rule
    with ``n_space`` points in y.
    """
    if cloud.d != 1:
        raise ValueError("mild residual is implemented for d = 1")
    if u0.kind not in ("dirac", "atomic"):
        raise ValueError("mild residual needs a dirac or atomic initial condition")
    window = _window(cloud, window)
    lam = lam or cloud.intensity
    drift = drift_rate(lam, window)
    view = truncate(cloud, window)
    starts = [dp_tables(cloud, beta, window, T=cloud.T, lam=lam, start=(0.0, y), backward=False)
              for y in u0.points]

    def u_at(s, ys):
        # u(s, y) for an array of y: partition from each initial atom
        ys = np.asarray(ys, dtype=float).reshape(-1, 1)
        total = np.zeros(len(ys))
        for tab, m, y0 in zip(starts, u0.masses, u0.points):
            keep = tab.t < s
            terms = [heat_kernel_log(np.full(len(ys), s), ys - y0)[:, None]]
            if keep.any():
                terms.append(tab.forward[keep][None, :]
                             + heat_kernel_log(s - tab.t[keep][None, :], ys[:, None, :] - tab.x[keep][None, :, :]))
            total += m * np.exp(logsumexp(np.concatenate(terms, axis=1), axis=1) - beta * drift * s)
        return total

    gl_x, gl_w = roots_legendre(n_time)
    worst, report = 0.0, []
    for t in np.atleast_1d(times):
        in_t = view.t < t
        at, ax, au = view.t[in_t], view.x[in_t, 0], view.marks[in_t]
        u_atoms = np.array([u_at(s, [y])[0] for s, y in zip(at, ax)])
        edges = np.concatenate([[0.0], at, [t]])
        pos = np.concatenate([ax, u0.points[:, 0]])
        for x in np.atleast_1d(xs):
            lhs = u_at(t, [x])[0]
            heat = float(np.sum(u0.masses * np.exp(heat_kernel_log(np.full(len(u0.points), t),
                                                                   x - u0.points))))
            atom_sum = float(np.sum(np.exp(heat_kernel_log(t - at, (x - ax)[:, None])) * u_atoms * au))
            lo = min(pos.min(), x) - 10 * math.sqrt(t)
            hi = max(pos.max(), x) + 10 * math.sqrt(t)
            ygrid = np.linspace(lo, hi, n_space)
            dint = 0.0
            for s0, s1 in zip(edges[:-1], edges[1:]):
                if s1 <= s0:
                    continue
                ss = 0.5 * (s1 - s0) * gl_x + 0.5 * (s1 + s0)
                inner = np.array([integrate.trapezoid(
                    np.exp(heat_kernel_log(np.full(n_space, t - s), (x - ygrid)[:, None])) * u_at(s, ygrid),
                    ygrid) for s in ss])
                dint += 0.5 * (s1 - s0) * float(np.dot(gl_w, inner))
            rhs = heat + beta * (atom_sum - drift * dint)
            rel = abs(lhs - rhs) / abs(lhs)
            report.append((float(t), float(x), lhs, rhs, rel))
            worst = max(worst, rel)
    return ResidualReport(worst, report)


def write_field_csv(path, rows, d=1):
    """rows: iterable of (t, x-vector, u)."""
    with open(path, "w") as fh:
        fh.write(",".join(["t"] + [f"x_{i + 1}" for i in range(d)] + ["u"]) + "\n")
        for t, x, u in rows:
            fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in np.atleast_1d(x)]
                              + [repr(float(u))]) + "\n")
