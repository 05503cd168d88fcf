"""Estimates, error bars, and replica seeding."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

WORKERS_ENV = "PERCOLAB_WORKERS"
Z95 = 1.959963984540054


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error.

    ``stderr`` is 0 for exact values and ``inf`` when a single replica gives
    no spread information.
    """

    mean: float
    stderr: float
    replicas: int
    seed: int | None = None

    @classmethod
    def from_samples(cls, values, seed: int | None = None) -> "Estimate":
        values = np.asarray(values, dtype=np.float64)
        n = len(values)
        if n == 0:
            raise ValueError("no samples")
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(mean, stderr, n, seed)

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 0, None)

    @property
    def variance(self) -> float:
        """Per-replica sample variance implied by the standard error."""
        return self.stderr**2 * self.replicas

    def merge(self, other: "Estimate") -> "Estimate":
        """Pool two independent estimates (associative mean/variance pooling)."""
        n1, n2 = self.replicas, other.replicas
        n = n1 + n2
        delta = other.mean - self.mean
        mean = self.mean + delta * n2 / n
        m2 = self.variance * (n1 - 1) + other.variance * (n2 - 1) + delta**2 * n1 * n2 / n
        stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else math.inf
        return Estimate(mean, stderr, n, self.seed)

    def ci(self, level_z: float = Z95) -> tuple[float, float]:
        return self.mean - level_z * self.stderr, self.mean + level_z * self.stderr

    def within(self, value: float, k: float = 4.0) -> bool:
        """True when ``value`` lies within ``k`` standard errors of the mean."""
        return abs(self.mean - value) <= k * self.stderr + 1e-12


def batch_means(series, n_batches: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error along axis 0 of a correlated series."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    n_batches = min(n_batches, n)
    if n_batches < 2:
        return x.mean(axis=0), np.full(x.shape[1:], math.inf)
    usable = (n // n_batches) * n_batches
    b = x[:usable].reshape((n_batches, -1) + x.shape[1:]).mean(axis=1)
    return x.mean(axis=0), b.std(axis=0, ddof=1) / math.sqrt(n_batches)


def series_estimate(series, seed: int | None = None, n_batches: int = 32) -> Estimate:
    mean, err = batch_means(series, n_batches)
    return Estimate(float(mean), float(err), len(series), seed)


def jackknife(statistic: Callable[[np.ndarray], np.ndarray], data: np.ndarray, groups: int = 32):
    """Grouped jackknife over axis 0: returns (estimate on all data, stderr)."""
    data = np.asarray(data)
    n = data.shape[0]
    groups = min(groups, n)
    full = np.asarray(statistic(data), dtype=np.float64)
    bounds = np.linspace(0, n, groups + 1).astype(int)
    leave_out = np.array(
        [statistic(np.concatenate([data[: bounds[g]], data[bounds[g + 1] :]])) for g in range(groups)],
        dtype=np.float64,
    )
    mean_lo = leave_out.mean(axis=0)
    var = (groups - 1) / groups * ((leave_out - mean_lo) ** 2).sum(axis=0)
    return full, np.sqrt(var)


def replica_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for replica ``index``: derived from (seed, index) only.

    Growing the replica count never perturbs earlier replicas, and the stream of
    a replica does not depend on which worker runs it.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def map_replicas(fn: Callable, replicas: int, seed: int, *args, workers: int | None = None, chunk: int = 1024):
    """Evaluate ``fn(seed, start, stop, *args)`` over contiguous replica chunks.

    Results are concatenated in replica order, so the output is identical for
    any worker count.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    spans = [(s, min(s + chunk, replicas)) for s in range(0, replicas, chunk)]
    workers = worker_count(workers)
    if workers == 1 or len(spans) == 1:
        parts = [fn(seed, a, b, *args) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, seed, a, b, *args) for a, b in spans]
            parts = [f.result() for f in futures]
    return np.concatenate(parts)
