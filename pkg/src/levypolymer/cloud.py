"""Marked Poisson clouds on [0,T] x [-L,L]^d x marks."""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import standard_normal
from .measures import INF, AlphaStable, Tabulated, TruncationWindow
from .montecarlo import make_rng


def intensity_from_descriptor(desc):
    if desc["kind"] == "alpha_stable":
        return AlphaStable(desc["alpha"])
    if desc["kind"] == "tabulated":
        return Tabulated(desc["v"], desc["density"], head=desc.get("head", "none"),
                         tail=desc.get("tail", "none"), theta=desc.get("theta"))
    raise ValueError(f"unknown intensity kind {desc['kind']!r}")


@dataclass
class PointCloud:
    """Time-sorted atoms stored as arrays. Marks are kept as logs so that
    very heavy tails never overflow; ``marks`` exponentiates on demand."""
    t: np.ndarray
    x: np.ndarray
    log_marks: np.ndarray
    T: float
    L: float
    a_min: float
    d: int
    seed: int = 0
    intensity: object = None
    origin: tuple = field(default=(0.0, None))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.x = np.asarray(self.x, dtype=float).reshape(len(self.t), self.d)
        self.log_marks = np.asarray(self.log_marks, dtype=float).reshape(-1)
        n = len(self.t)
        if self.log_marks.shape != (n,):
            raise ValueError("one mark per atom required")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("atom times must be strictly increasing")
        if n and (self.t[0] < self.origin[0] or self.t[-1] > self.origin[0] + self.T):
            raise ValueError("atom times outside [0, T]")
        if n and np.any(self.log_marks < math.log(self.a_min) - 1e-12):
            raise ValueError("mark below a_min")
        if self.a_min <= 0:
            raise ValueError("a_min must be positive")

    def __len__(self):
        return len(self.t)

    @property
    def marks(self):
        return np.exp(self.log_marks)

    @property
    def t0(self):
        return self.origin[0]

    def _replace(self, keep=None, **kw):
        t, x, lm = self.t, self.x, self.log_marks
        if keep is not None:
            t, x, lm = t[keep], x[keep], lm[keep]
        args = dict(t=t, x=x, log_marks=lm, T=self.T, L=self.L, a_min=self.a_min,
                    d=self.d, seed=self.seed, intensity=self.intensity, origin=self.origin)
        args.update(kw)
        return PointCloud(**args)

    def view(self, a, b=INF):
        return truncate(self, TruncationWindow(a, b))

    def before(self, t):
        """Atoms with time strictly below ``t``."""
        return self._replace(keep=self.t < t)

    def to_csv(self, path):
        header = ",".join(["t"] + [f"x_{i + 1}" for i in range(self.d)] + ["mark"])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for ti, xi, lm in zip(self.t, self.x, self.log_marks):
                fh.write(",".join(repr(float(v)) for v in [ti, *xi, math.exp(lm)]) + "\n")
        meta = {"T": self.T, "L": self.L, "d": self.d, "a_min": self.a_min, "seed": self.seed,
                "intensity": None if self.intensity is None else self.intensity.descriptor(),
                "log_marks": [float(v) for v in self.log_marks]}
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=1)

    @classmethod
    def from_csv(cls, path):
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        d = int(meta["d"])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, d + 2))
        lm = meta.get("log_marks")
        # the sidecar keeps exact log marks; the CSV mark column is for humans
        lm = np.array(lm) if lm is not None and len(lm) == len(data) else np.log(data[:, -1])
        lam = meta.get("intensity")
        return cls(t=data[:, 0], x=data[:, 1:1 + d], log_marks=lm, T=meta["T"], L=meta["L"],
                   a_min=meta["a_min"], d=d, seed=meta.get("seed", 0),
                   intensity=None if lam is None else intensity_from_descriptor(lam))


def make_cloud(t, x, marks, T=1.0, L=None, a_min=None, d=None, intensity=None):
    """Build a cloud from explicit atoms (sorted by time here)."""
    t = np.asarray(t, dtype=float).reshape(-1)
    marks = np.asarray(marks, dtype=float).reshape(-1)
    if d is None:
        d = 1 if np.ndim(x) <= 1 else np.shape(x)[1]
    x = np.asarray(x, dtype=float).reshape(len(t), d)
    order = np.argsort(t, kind="stable")
    if L is None:
        L = float(np.max(np.abs(x))) if len(t) else 1.0
    if a_min is None:
        a_min = float(marks.min()) if len(t) else 1.0
    return PointCloud(t[order], x[order], np.log(marks[order]), T, L, a_min, d,
                      intensity=intensity)


def expected_count(lam, T, L, a_min, d):
    return T * (2 * L) ** d * lam.tail_mass(a_min)


def sample_cloud(lam, T, L, a_min, d, seed=0, rng=None):
    """Poisson cloud with intensity dt dx lambda(dv) restricted to
    [0,T] x [-L,L]^d x [a_min, inf)."""
    if not (a_min > 0):
        raise ValueError("a_min must be positive (infinite intensity otherwise)")
    mass = lam.tail_mass(a_min)
    if not np.isfinite(mass):
        raise ValueError("infinite intensity above a_min")
    if rng is None:
        rng = make_rng(seed)
    n = rng.poisson(T * (2 * L) ** d * mass)
    while True:
        t = np.sort(rng.uniform(0.0, T, n))
        if n < 2 or np.all(np.diff(t) > 0):
            break
    x = rng.uniform(-L, L, (n, d))
    lm = lam.sample_log_marks(a_min, n, rng) if n else np.zeros(0)
    return PointCloud(t, x, lm, T, L, a_min, d, seed=int(seed), intensity=lam)


def truncate(cloud, window):
    """View keeping atoms with marks in [a, b)."""
    if not isinstance(window, TruncationWindow):
        window = TruncationWindow(*window)
    if window.a < cloud.a_min * (1 - 1e-12):
        raise ValueError(f"window level {window.a} below sampled level {cloud.a_min}")
    keep = cloud.log_marks >= math.log(window.a)
    if window.b != INF:
        keep &= cloud.log_marks < math.log(window.b)
    return cloud._replace(keep=keep, a_min=window.a)


def superpose(base, t, x, log_marks, a_min=None):
    """Base cloud plus extra atoms (time collisions are rejected). ``a_min``
    is the sampling level of the extra atoms."""
    t_all = np.concatenate([base.t, np.asarray(t, dtype=float)])
    order = np.argsort(t_all, kind="stable")
    x_all = np.vstack([base.x, np.asarray(x, dtype=float).reshape(-1, base.d)])[order]
    lm = np.concatenate([base.log_marks, np.asarray(log_marks, dtype=float)])[order]
    if a_min is None:
        a_min = float(np.exp(np.min(log_marks))) if len(lm) > len(base) else base.a_min
    a_min = min(base.a_min, a_min)
    return base._replace(t=t_all[order], x=x_all, log_marks=lm, a_min=a_min)


def shift(cloud, s, y):
    """Translate atoms by (-s, -y): the environment seen from (s, y)."""
    y = np.broadcast_to(np.asarray(y, dtype=float), (cloud.d,))
    t0, x0 = cloud.origin
    x0 = np.zeros(cloud.d) if x0 is None else np.asarray(x0)
    return cloud._replace(t=cloud.t - s, x=cloud.x - y, origin=(t0 - s, x0 - y))


class CoupledCloudFamily:
    """One base cloud sampled at the smallest level; coarser levels are
    views keeping the atoms with larger marks."""

    def __init__(self, base, levels):
        levels = sorted((float(a) for a in levels), reverse=True)
        if levels[-1] < base.a_min * (1 - 1e-12):
            raise ValueError("levels must be >= the base sampling level")
        self.base, self.levels = base, levels

    @classmethod
    def sample(cls, lam, T, L, levels, d, seed=0, rng=None):
        return cls(sample_cloud(lam, T, L, min(levels), d, seed=seed, rng=rng), levels)

    def view(self, a, b=INF):
        return truncate(self.base, TruncationWindow(a, b))

    def __iter__(self):
        return (self.view(a) for a in self.levels)


def brownian_at(times, d, rng, T=None):
    """Standard Brownian motion sampled at sorted ``times``."""
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        return np.zeros((0, d))
    dt = np.diff(np.concatenate([[0.0], times]))
    return np.cumsum(np.sqrt(dt)[:, None] * standard_normal(rng, (len(times), d)), axis=0)


def size_biased_augment(cloud, beta, a, rng, lam=None):
    """Add atoms (t, B_t, v) with (t, v) ~ Poisson(dt x beta v 1{v>=a} lambda(dv))
    on [0, T], B an independent Brownian path. Returns the augmented cloud and
    (times, positions) of B at the added atoms."""
    lam = lam or cloud.intensity
    if beta == 0:
        return cloud, (np.zeros(0), np.zeros((0, cloud.d)))
    rate = lam.moment(1.0, a, INF)
    if not np.isfinite(rate):
        raise ValueError("size-biased augmentation needs int_{[a,inf)} v lambda(dv) < inf")
    n = rng.poisson(beta * rate * cloud.T)
    t_new = np.sort(rng.uniform(0.0, cloud.T, n))
    b_new = brownian_at(t_new, cloud.d, rng)
    lm_new = lam.sample_log_marks(a, n, rng, p=1.0) if n else np.zeros(0)
    t = np.concatenate([cloud.t, t_new])
    order = np.argsort(t, kind="stable")
    t = t[order]
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("time collision while augmenting; resample")
    x = np.vstack([cloud.x, b_new])[order]
    lm = np.concatenate([cloud.log_marks, lm_new])[order]
    L = max(cloud.L, float(np.max(np.abs(b_new))) if n else 0.0)
    out = PointCloud(t, x, lm, cloud.T, L, min(cloud.a_min, a), cloud.d, seed=cloud.seed,
                     intensity=lam)
    return out, (t_new, b_new)
