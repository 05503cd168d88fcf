"""FK (random-cluster) percolation: weights, exact oracle, heat-bath dynamics and duality."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from . import _kernels as K
from .lattice import LatticeGraph, csr_from_edges
from .percolation import BondConfig, check_cap, iter_configs
from .stats import Estimate, as_generator, batch_means

FREE = "free"
WIRED = "wired"


@dataclass(frozen=True)
class FKParams:
    """Edge-weight ``p`` in [0, 1] and cluster-weight ``q`` > 0."""

    p: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not self.q > 0.0:
            raise ValueError(f"q must be positive, got {self.q}")


@dataclass(frozen=True)
class FKWeightResult:
    log_weight: float
    open_edges: int
    clusters: int

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


@dataclass(frozen=True, eq=False)
class _Topology:
    """Edge table the dynamics runs on; wired boundaries add a ghost vertex.

    The first ``n_dynamic`` edges are the graph's own; any further edges join the
    ghost vertex to the boundary and stay open.
    """

    n_vertices: int
    edges: np.ndarray
    n_dynamic: int
    indptr: np.ndarray
    nbrs: np.ndarray
    eids: np.ndarray

    @property
    def frozen_edges(self) -> np.ndarray:
        return self.edges[self.n_dynamic :]


def _topology(graph: LatticeGraph, boundary: str, boundary_set: str = "boundary") -> _Topology:
    if boundary == FREE:
        V, edges = graph.vertex_count, graph.edges
    elif boundary == WIRED:
        ghost = graph.vertex_count
        b = graph.boundary(boundary_set)
        extra = np.column_stack([b, np.full(len(b), ghost)])
        V, edges = ghost + 1, np.vstack([graph.edges, extra])
    else:
        raise ValueError(f"unknown boundary condition {boundary!r}")
    indptr, nbrs, eids = csr_from_edges(V, edges)
    return _Topology(V, np.ascontiguousarray(edges, dtype=np.int64), graph.edge_count, indptr, nbrs, eids)


def _log_term(count, prob):
    """``count * log(prob)`` with the convention 0 * log 0 = 0."""
    count = np.asarray(count, dtype=np.float64)
    if prob > 0.0:
        return count * math.log(prob)
    return np.where(count > 0, -np.inf, 0.0)


def fk_log_weights(graph: LatticeGraph, params: FKParams, boundary: str = FREE) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized unnormalized log-weight ``configs -> log(p^|w| (1-p)^(|E|-|w|) q^k(w))``."""
    topo = _topology(graph, boundary)
    E = graph.edge_count
    log_q = math.log(params.q)

    def logw(configs: np.ndarray) -> np.ndarray:
        n_open = configs.sum(axis=1, dtype=np.int64)
        k = K.batch_component_counts(topo.n_vertices, graph.edges, configs, topo.frozen_edges)
        return _log_term(n_open, params.p) + _log_term(E - n_open, 1.0 - params.p) + k * log_q

    return logw


def fk_weight(graph: LatticeGraph, config: BondConfig, params: FKParams, boundary: str = FREE) -> FKWeightResult:
    """Unnormalized FK weight of one configuration, in log space.

    With a wired boundary all vertices of the ``boundary`` set count as one
    cluster.
    """
    if config.graph is not graph:
        raise ValueError("configuration belongs to a different graph")
    topo = _topology(graph, boundary)
    row = config.bits[None, :]
    k = int(K.batch_component_counts(topo.n_vertices, graph.edges, row, topo.frozen_edges)[0])
    n_open = config.open_count
    logw = (
        float(_log_term(n_open, params.p))
        + float(_log_term(graph.edge_count - n_open, 1.0 - params.p))
        + k * math.log(params.q)
    )
    return FKWeightResult(logw, n_open, k)


@dataclass(frozen=True, eq=False)
class FKExact:
    """Exact FK quantities from full enumeration.

    ``values`` holds the expectations of any extra observables requested.
    """

    params: FKParams
    Z: float
    edge_marginals: np.ndarray
    values: dict


def fk_exact(
    graph: LatticeGraph,
    params: FKParams,
    observables: dict[str, Callable[[np.ndarray], np.ndarray]] | None = None,
    boundary: str = FREE,
) -> FKExact:
    """Enumerate every configuration under the FK measure.

    Returns the partition function, edge marginals and the expectations of
    the given vectorized ``observables``.
    """
    check_cap(graph.edge_count)
    observables = dict(observables or {})
    logw = fk_log_weights(graph, params, boundary)
    Z = 0.0
    marg = np.zeros(graph.edge_count)
    acc = {name: 0.0 for name in observables}
    for block in iter_configs(graph.edge_count):
        w = np.exp(logw(block))
        Z += w.sum()
        marg += w @ block
        for name, f in observables.items():
            acc[name] += float(w @ np.asarray(f(block), dtype=np.float64))
    if Z <= 0.0:
        raise ValueError("all configuration weights are zero")
    return FKExact(params, float(Z), marg / Z, {k: v / Z for k, v in acc.items()})


def fk_distribution(graph: LatticeGraph, params: FKParams, boundary: str = FREE) -> np.ndarray:
    """Probability of every configuration, indexed as in :func:`percolab.percolation.iter_configs`."""
    check_cap(graph.edge_count)
    logw = np.concatenate([fk_log_weights(graph, params, boundary)(b) for b in iter_configs(graph.edge_count)])
    w = np.exp(logw - logw.max())
    return w / w.sum()


def open_probabilities(params: FKParams) -> tuple[float, float]:
    """Conditional probability that an edge is open, given its endpoints are
    connected (first) or not connected (second) by the other open edges."""
    p, q = params.p, params.q
    denom = p + q * (1.0 - p)
    return p, (p / denom if denom > 0 else 0.0)


@njit(cache=True)
def _heatbath_sweeps(indptr, nbrs, eids, edges, state, n_dynamic, p_conn, p_disc, uniforms, record):
    """Systematic-scan heat-bath over ``uniforms.shape[0]`` sweeps, updating ``state`` in place.

    Row ``s`` of ``record`` (if it has rows) receives the state after sweep ``s``.
    """
    V = indptr.shape[0] - 1
    mark = np.zeros(V, dtype=np.int64)
    queue = np.empty(V, dtype=np.int64)
    stamp = 0
    for s in range(uniforms.shape[0]):
        for e in range(n_dynamic):
            stamp += 1
            linked = K.connected_avoiding(indptr, nbrs, eids, state, edges[e, 0], edges[e, 1], e, mark, stamp, queue)
            prob = p_conn if linked else p_disc
            state[e] = 1 if uniforms[s, e] < prob else 0
        if record.shape[0] > 0:
            for e in range(n_dynamic):
                record[s, e] = state[e]


def fk_heatbath_step(
    graph: LatticeGraph,
    config: BondConfig,
    params: FKParams,
    edge: int,
    rng,
    boundary: str = FREE,
) -> BondConfig:
    """Resample one edge from its exact conditional law under the FK measure.

    The endpoints' connectivity is decided with the edge forced closed; the
    edge then opens with probability p if they are connected and
    ``p / (p + q (1 - p))`` otherwise.
    """
    if not 0 <= edge < graph.edge_count:
        raise IndexError(f"edge {edge} out of range")
    topo = _topology(graph, boundary)
    state = np.ones(len(topo.edges), dtype=np.uint8)
    state[: graph.edge_count] = config.bits
    mark = np.zeros(topo.n_vertices, dtype=np.int64)
    queue = np.empty(topo.n_vertices, dtype=np.int64)
    a, b = topo.edges[edge]
    linked = K.connected_avoiding(topo.indptr, topo.nbrs, topo.eids, state, a, b, edge, mark, 1, queue)
    p_conn, p_disc = open_probabilities(params)
    u = as_generator(rng).random()
    return config.with_edge(edge, 1 if u < (p_conn if linked else p_disc) else 0)


@dataclass(frozen=True, eq=False)
class FKSample:
    """Configurations recorded by a heat-bath run (one row per recorded sweep).

    Error bars use batch means, since successive sweeps are correlated.
    """

    graph: LatticeGraph
    params: FKParams
    configs: np.ndarray
    seed: int | None

    def __len__(self) -> int:
        return len(self.configs)

    def estimate(self, f: Callable[[np.ndarray], np.ndarray]) -> Estimate:
        series = np.asarray(f(self.configs), dtype=np.float64)
        mean, err = batch_means(series)
        return Estimate(float(mean), float(err), len(series), self.seed)

    def edge_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return batch_means(self.configs.astype(np.float64))

    def open_fraction(self) -> Estimate:
        return self.estimate(lambda c: c.mean(axis=1))

    def crossing(self) -> Estimate:
        g = self.graph
        left, right = g.boundary_mask("left"), g.boundary_mask("right")
        return self.estimate(lambda c: K.batch_sets_connected(g.vertex_count, g.edges, c, left, right))

    def one_arm(self) -> Estimate:
        g = self.graph
        src = np.zeros(g.vertex_count, dtype=np.bool_)
        src[g.origin] = True
        return self.estimate(lambda c: K.batch_sets_connected(g.vertex_count, g.edges, c, src, g.boundary_mask("boundary")))


def fk_chain(
    graph: LatticeGraph,
    params: FKParams,
    sweeps: int,
    seed,
    initial: np.ndarray | None = None,
    boundary: str = FREE,
    chunk: int = 256,
):
    """Yield blocks of consecutive heat-bath states, shape ``(block, edge_count)``.

    Each sweep visits edges in id order and consumes one uniform per edge from
    the seeded generator.
    """
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    rng = as_generator(seed)
    topo = _topology(graph, boundary)
    state = np.ones(len(topo.edges), dtype=np.uint8)
    state[: graph.edge_count] = 0 if initial is None else np.asarray(initial, dtype=np.uint8)
    p_conn, p_disc = open_probabilities(params)
    done = 0
    while done < sweeps:
        n = min(chunk, sweeps - done)
        u = rng.random((n, graph.edge_count))
        rec = np.empty((n, graph.edge_count), dtype=np.uint8)
        _heatbath_sweeps(topo.indptr, topo.nbrs, topo.eids, topo.edges, state, graph.edge_count, p_conn, p_disc, u, rec)
        done += n
        yield rec


def fk_sample(
    graph: LatticeGraph,
    params: FKParams,
    sweeps: int,
    burn_in: int = 1000,
    seed: int = 0,
    thin: int = 1,
    boundary: str = FREE,
) -> FKSample:
    """Heat-bath run: ``burn_in`` discarded sweeps, then ``sweeps`` sweeps recorded every ``thin``."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if burn_in < 0 or thin < 1:
        raise ValueError("burn_in must be >= 0 and thin >= 1")
    blocks = list(fk_chain(graph, params, burn_in + sweeps, seed, boundary=boundary))
    states = np.concatenate(blocks)[burn_in:][thin - 1 :: thin] if blocks else np.empty((0, graph.edge_count))
    return FKSample(graph, params, np.ascontiguousarray(states, dtype=np.uint8), seed if isinstance(seed, int) else None)


def fk_dual_params(params: FKParams) -> FKParams:
    """Dual parameters: ``p p* / ((1-p)(1-p*)) = q`` and ``q* = q``.

    At the endpoints ``p* (0) = 1`` and ``p* (1) = 0``.
    """
    p, q = params.p, params.q
    if p == 0.0:
        return FKParams(1.0, q)
    if p == 1.0:
        return FKParams(0.0, q)
    a = q * (1.0 - p)
    return FKParams(a / (a + p), q)


def self_dual_point(q: float) -> float:
    """Fixed point of :func:`fk_dual_params`: ``sqrt(q) / (1 + sqrt(q))``."""
    if not q > 0:
        raise ValueError("q must be positive")
    s = math.sqrt(q)
    return s / (1.0 + s)
