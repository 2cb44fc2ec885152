"""Seeded random streams, mergeable moment accumulators and a replica map."""
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def make_rng(seed, *key):
    """Counter-based Philox stream for master ``seed`` and replica ``key``.

    Streams are derived with SeedSequence(seed, spawn_key=key), so replica
    k of run s is reproducible independently of how replicas are scheduled.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *key):
    """A 63-bit integer seed for a sub-stream (used when an object records
    its own seed, e.g. a sampled cloud)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


class RunningMoments:
    """Count, mean and centered second moment with an associative merge."""

    def __init__(self, count=0, mean=0.0, m2=0.0):
        self.count, self.mean, self.m2 = count, mean, m2

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return cls()
        mean = float(v.mean())
        return cls(v.size, mean, float(np.sum((v - mean) ** 2)))

    def push(self, x):
        self.merge(RunningMoments(1, float(x), 0.0))

    def merge(self, other):
        n = self.count + other.count
        if n == 0:
            return self
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @property
    def var(self):
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def se(self):
        return math.sqrt(self.var / self.count) if self.count > 1 else math.nan

    def to_dict(self):
        return {"count": self.count, "mean": self.mean, "var": self.var, "se": self.se}


def merge_all(parts):
    total = RunningMoments()
    for p in parts:
        total.merge(p)
    return total


def replica_map(fn, tasks, threads=1):
    """Apply ``fn`` to each task, optionally in worker processes. Output
    order always matches task order."""
    tasks = list(tasks)
    if threads is None or threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def within_se(estimate, target, se, k=4.0):
    return abs(estimate - target) <= k * se
