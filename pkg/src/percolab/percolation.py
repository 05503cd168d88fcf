"""Bernoulli bond/site percolation: sampling, clusters, crossing and one-arm estimators.

Also hosts the exhaustive enumeration oracle that every exact check in the
package relies on.
"""
from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels as K
from .lattice import LatticeGraph, box_radius, build_box, build_rectangle
from .stats import Z95, Estimate, as_generator, map_replicas, replica_rng

DEFAULT_ENUMERATION_CAP = 24
_cap = contextvars.ContextVar("enumeration_cap", default=DEFAULT_ENUMERATION_CAP)


class EnumerationCapError(ValueError):
    """Raised when exhaustive enumeration would exceed the configured cap."""


@contextlib.contextmanager
def enumeration_cap(cap: int):
    """Temporarily change the enumeration cap (number of binary variables)."""
    token = _cap.set(cap)
    try:
        yield
    finally:
        _cap.reset(token)


def current_cap() -> int:
    return _cap.get()


def check_cap(size: int, what: str = "edges", cap: int | None = None) -> None:
    cap = current_cap() if cap is None else cap
    if size > cap:
        raise EnumerationCapError(f"enumeration over {size} {what} exceeds the cap of {cap}")


@dataclass(frozen=True, eq=False)
class BondConfig:
    """Open/closed state of every edge of ``graph`` (1 = open)."""

    graph: LatticeGraph
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.shape != (self.graph.edge_count,):
            raise ValueError(
                f"bond configuration has length {bits.size}, graph has {self.graph.edge_count} edges"
            )
        if bits.size and bits.max() > 1:
            raise ValueError("configuration entries must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def open_count(self) -> int:
        return int(self.bits.sum())

    def with_edge(self, e: int, state: int) -> "BondConfig":
        bits = self.bits.copy()
        bits[e] = state
        return BondConfig(self.graph, bits)


@dataclass(frozen=True, eq=False)
class SiteConfig:
    """Open/closed state of every vertex of ``graph`` (1 = open)."""

    graph: LatticeGraph
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.shape != (self.graph.vertex_count,):
            raise ValueError(
                f"site configuration has length {bits.size}, graph has {self.graph.vertex_count} vertices"
            )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)


@dataclass(frozen=True, eq=False)
class ClusterStats:
    """Components of the graph induced by a configuration.

    Labels are numbered in order of each component's smallest vertex. For site
    configurations closed vertices carry label -1 and belong to no component.
    """

    labels: np.ndarray
    count: int
    sizes: np.ndarray

    @property
    def largest(self) -> int:
        return int(self.sizes.max()) if self.count else 0

    def connected(self, u: int, v: int) -> bool:
        return self.labels[u] >= 0 and self.labels[u] == self.labels[v]


def sample_bernoulli(graph: LatticeGraph, p: float, seed) -> BondConfig:
    """Each edge open independently with probability ``p``.

    One uniform variate per edge is thresholded at ``p``, so the same seed
    gives configurations that increase with ``p``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    u = as_generator(seed).random(graph.edge_count)
    return BondConfig(graph, (u < p).astype(np.uint8))


def sample_site_bernoulli(graph: LatticeGraph, p: float, seed) -> SiteConfig:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    u = as_generator(seed).random(graph.vertex_count)
    return SiteConfig(graph, (u < p).astype(np.uint8))


def clusters(graph: LatticeGraph, config: BondConfig | SiteConfig) -> ClusterStats:
    """Connected components of the open subgraph."""
    if config.graph is not graph:
        raise ValueError("configuration belongs to a different graph")
    if isinstance(config, BondConfig):
        open_edges = config.bits
        open_sites = np.ones(graph.vertex_count, dtype=np.uint8)
    else:
        open_edges = np.ones(graph.edge_count, dtype=np.uint8)
        open_sites = config.bits
    labels, count = K.label_components(graph.vertex_count, graph.edges, open_edges, open_sites)
    sizes = np.bincount(labels[labels >= 0], minlength=count)
    return ClusterStats(labels, int(count), sizes)


def crossing_indicator(graph: LatticeGraph, config: BondConfig | SiteConfig) -> int:
    """1 if an open path joins the left and right sides of a rectangle."""
    left = graph.boundary_mask("left")
    right = graph.boundary_mask("right")
    if config.graph is not graph:
        raise ValueError("configuration belongs to a different graph")
    if isinstance(config, SiteConfig):
        stats = clusters(graph, config)
        lab = stats.labels
        return int(bool(np.intersect1d(lab[left & (lab >= 0)], lab[right & (lab >= 0)]).size))
    row = config.bits[None, :]
    return int(K.batch_sets_connected(graph.vertex_count, graph.edges, row, left, right)[0])


def connects(graph: LatticeGraph, set_a: np.ndarray, set_b: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized indicator ``configs -> 1[A <-> B]`` for use with the enumeration oracle."""
    in_a = np.zeros(graph.vertex_count, dtype=np.bool_)
    in_b = np.zeros(graph.vertex_count, dtype=np.bool_)
    in_a[np.asarray(set_a)] = True
    in_b[np.asarray(set_b)] = True

    def f(configs: np.ndarray) -> np.ndarray:
        return K.batch_sets_connected(graph.vertex_count, graph.edges, configs, in_a, in_b).astype(np.float64)

    return f


def crossing_function(graph: LatticeGraph) -> Callable[[np.ndarray], np.ndarray]:
    return connects(graph, graph.boundary("left"), graph.boundary("right"))


def one_arm_function(graph: LatticeGraph) -> Callable[[np.ndarray], np.ndarray]:
    return connects(graph, [graph.origin], graph.boundary("boundary"))


def bernoulli_weight(p: float) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized product weight ``p^|w| (1-p)^(|E|-|w|)``."""

    def w(configs: np.ndarray) -> np.ndarray:
        k = configs.sum(axis=1, dtype=np.int64)
        return np.power(p, k) * np.power(1.0 - p, configs.shape[1] - k)

    return w


def iter_configs(n_bits: int, chunk: int = 1 << 16):
    """All ``2**n_bits`` binary configurations in index order, as uint8 row blocks.

    Bit ``e`` of configuration index ``i`` is ``(i >> e) & 1``.
    """
    shifts = np.arange(n_bits, dtype=np.int64)
    total = 1 << n_bits
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield ((idx[:, None] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True)
class Expectation:
    value: float | np.ndarray
    Z: float


def enumerate_expectation(
    graph: LatticeGraph,
    weight: Callable[[np.ndarray], np.ndarray],
    f: Callable[[np.ndarray], np.ndarray],
    cap: int | None = None,
) -> Expectation:
    """Exact ``sum_w f(w) weight(w) / sum_w weight(w)`` over all edge configurations.

    ``weight`` and ``f`` are vectorized: each receives a uint8 array of shape
    ``(batch, edge_count)``. ``f`` may return shape ``(batch,)`` or
    ``(batch, k)`` for several observables at once.
    """
    check_cap(graph.edge_count, cap=cap)
    Z = 0.0
    acc = None
    for block in iter_configs(graph.edge_count):
        w = np.asarray(weight(block), dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        vals = np.asarray(f(block), dtype=np.float64)
        part = np.tensordot(w, vals, axes=(0, 0))
        acc = part if acc is None else acc + part
        Z += float(w.sum())
    if Z <= 0.0:
        raise ValueError("all configuration weights are zero")
    value = acc / Z
    return Expectation(float(value) if np.ndim(value) == 0 else value, Z)


def _replica_uniforms(seed: int, start: int, stop: int, n_edges: int) -> np.ndarray:
    return np.stack([replica_rng(seed, i).random(n_edges) for i in range(start, stop)])


def _crossing_chunk(seed, start, stop, graph, p):
    u = _replica_uniforms(seed, start, stop, graph.edge_count)
    cfg = (u < p).astype(np.uint8)
    return K.batch_sets_connected(
        graph.vertex_count, graph.edges, cfg, graph.boundary_mask("left"), graph.boundary_mask("right")
    )


def crossing_prob(n: int, m: int, p: float, replicas: int, seed: int, workers: int | None = None) -> Estimate:
    """Monte Carlo estimate of the left-right crossing probability of ``[0,n] x [0,m]``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    graph = build_rectangle(n, m)
    hits = map_replicas(_crossing_chunk, replicas, seed, graph, p, workers=workers)
    return Estimate.from_samples(hits, seed)


def crossing_prob_exact(n: int, m: int, p: float) -> float:
    graph = build_rectangle(n, m)
    return float(enumerate_expectation(graph, bernoulli_weight(p), crossing_function(graph)).value)


def _threshold_chunk(seed, start, stop, graph, set_a, set_b):
    u = _replica_uniforms(seed, start, stop, graph.edge_count)
    return K.connection_thresholds(graph.vertex_count, graph.edges, u, set_a, set_b)


def crossing_thresholds(n: int, m: int, replicas: int, seed: int, workers: int | None = None) -> np.ndarray:
    """Per-replica critical value of p for crossing ``[0,n] x [0,m]``.

    Uses the same per-replica variates as :func:`crossing_prob`, so replica
    ``i`` crosses at ``p`` exactly when ``p > thresholds[i]``.
    """
    graph = build_rectangle(n, m)
    return map_replicas(
        _threshold_chunk,
        replicas,
        seed,
        graph,
        graph.boundary_mask("left"),
        graph.boundary_mask("right"),
        workers=workers,
    )


def stream_base(seed: int) -> np.uint64:
    """64-bit base key from which per-replica SplitMix64 keys are hashed."""
    return np.random.SeedSequence(int(seed)).generate_state(1, np.uint64)[0]


def replica_edge_uniforms(seed: int, index: int, n_edges: int) -> np.ndarray:
    """The variates :func:`one_arm_profile` assigns to the edges of replica ``index``."""
    return K.stream_block(K.replica_key(stream_base(seed), index), n_edges)


def _reach_chunk(seed, start, stop, graph, p, level, n_max):
    indptr, nbrs, eids = graph.csr
    return K.reach_batch(indptr, nbrs, eids, stream_base(seed), start, stop, p, graph.origin, level, n_max)


def one_arm_profile(d: int, n_max: int, p: float, replicas: int, seed: int, workers: int | None = None) -> list[Estimate]:
    """Estimates of theta_k(p) for k = 1..n_max from one set of samples in the box of radius n_max.

    A path from the origin to distance k first meets the sphere of radius k
    inside the box of radius k, so the larger box measures every theta_k.
    Edge variates come from a counter-based stream per replica (see
    :func:`replica_edge_uniforms`), evaluated only where the origin's cluster
    reaches; the variate of an edge does not depend on p, so estimates are
    monotone in p along a shared seed.
    """
    if n_max < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    graph = build_box(d, n_max)
    level = box_radius(graph)
    reach = map_replicas(_reach_chunk, replicas, seed, graph, p, level, n_max, workers=workers, chunk=1 << 16)
    return [Estimate.from_samples(reach >= k, seed) for k in range(1, n_max + 1)]


def one_arm_prob(d: int, n: int, p: float, replicas: int, seed: int, workers: int | None = None) -> Estimate:
    """Monte Carlo estimate of P[origin connected to the boundary of the box of radius n]."""
    return one_arm_profile(d, n, p, replicas, seed, workers)[-1]


def one_arm_prob_exact(d: int, n: int, p: float) -> float:
    graph = build_box(d, n)
    return float(enumerate_expectation(graph, bernoulli_weight(p), one_arm_function(graph)).value)


@dataclass(frozen=True)
class DecayFit:
    """Exponential-decay fit ``theta_n ~ A exp(-rate n)``.

    ``polynomial_preferred`` is raised when a power law in n fits the data
    better than the exponential (as expected at criticality).
    """

    rate: float
    stderr: float
    defined: bool
    exp_residual: float = math.nan
    power_residual: float = math.nan
    polynomial_preferred: bool = False

    @property
    def ci95(self) -> tuple[float, float]:
        return self.rate - Z95 * self.stderr, self.rate + Z95 * self.stderr

    @property
    def positive(self) -> bool:
        """Rate is positive with 95% (one-sided) confidence."""
        return self.defined and self.rate - 1.6448536269514722 * self.stderr > 0


def _wls(x, y, w):
    X = np.column_stack([np.ones_like(x), x])
    W = np.diag(w)
    cov = np.linalg.inv(X.T @ W @ X)
    beta = cov @ X.T @ W @ y
    resid = y - X @ beta
    return beta, cov, float(resid @ W @ resid)


def decay_fit(ns, thetas, stderrs=None) -> DecayFit:
    """Least-squares slope of ``log theta_n`` against n, negated.

    With ``stderrs`` the fit is weighted by the delta-method variance of
    ``log theta`` and the slope error comes from those weights; otherwise it
    comes from the residual scatter.
    """
    ns = np.asarray(ns, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if len(np.unique(ns)) < 3:
        raise ValueError("decay_fit needs at least 3 distinct n values")
    if np.any(thetas <= 0):
        return DecayFit(math.nan, math.nan, False)
    y = np.log(thetas)
    if stderrs is not None:
        s = np.asarray(stderrs, dtype=np.float64) / thetas
        s = np.where(s > 0, s, np.min(s[s > 0]) if np.any(s > 0) else 1.0)
        w = 1.0 / s**2
    else:
        w = np.ones_like(ns)
    beta, cov, chi2 = _wls(ns, y, w)
    _, _, chi2_pow = _wls(np.log(ns), y, w)
    dof = len(ns) - 2
    if stderrs is None:
        scale = chi2 / dof if dof > 0 else 0.0
        err = math.sqrt(cov[1, 1] * scale)
    else:
        err = math.sqrt(cov[1, 1])
    return DecayFit(
        rate=float(-beta[1]),
        stderr=err,
        defined=True,
        exp_residual=chi2,
        power_residual=chi2_pow,
        polynomial_preferred=chi2_pow < chi2,
    )
