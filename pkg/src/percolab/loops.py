"""Loop O(n) model on hexagonal domains.

Loop configurations are even subgraphs of the domain. They are in bijection
with face (site) configurations on the triangular dual whose exterior face is
fixed to 1: the loops are the domain walls between faces of different state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels as K
from .lattice import HEXAGONAL, LatticeGraph
from .percolation import check_cap, iter_configs
from .stats import Estimate, as_generator, batch_means

FACE_CAP = 20


@dataclass(frozen=True)
class LoopParams:
    """Edge-weight ``x > 0`` and loop-weight ``n >= 0``."""

    x: float
    n: float

    def __post_init__(self):
        if not self.x > 0.0:
            raise ValueError(f"x must be positive, got {self.x}")
        if not self.n >= 0.0:
            raise ValueError(f"n must be >= 0, got {self.n}")


def _require_hex(graph: LatticeGraph) -> None:
    if graph.kind != HEXAGONAL or graph.faces is None:
        raise ValueError("loop configurations live on hexagonal domains")


@dataclass(frozen=True, eq=False)
class LoopConfig:
    """Edge subset ``eta`` of a hexagonal domain (1 = edge belongs to a loop)."""

    graph: LatticeGraph
    bits: np.ndarray

    def __post_init__(self):
        _require_hex(self.graph)
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.shape != (self.graph.edge_count,):
            raise ValueError("loop configuration length differs from the edge count")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)


@dataclass(frozen=True, eq=False)
class FaceConfig:
    """State of every bounded face; the exterior face is implicitly 1."""

    graph: LatticeGraph
    bits: np.ndarray

    def __post_init__(self):
        _require_hex(self.graph)
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.shape != (self.graph.faces.count,):
            raise ValueError("face configuration length differs from the face count")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)


def _eta_degrees(graph: LatticeGraph, bits: np.ndarray) -> np.ndarray:
    e = graph.edges[bits.astype(bool)]
    return np.bincount(e.ravel(), minlength=graph.vertex_count)


def is_even(graph: LatticeGraph, eta: LoopConfig) -> bool:
    """Every vertex meets an even number of edges of ``eta``."""
    return bool(np.all(_eta_degrees(graph, eta.bits) % 2 == 0))


def loop_count(graph: LatticeGraph, eta: LoopConfig) -> int:
    """Number of connected components of the subgraph formed by ``eta``'s edges.

    For an even subgraph of a degree-3 graph these are exactly the loops.
    """
    bits = eta.bits[None, :]
    k = int(K.batch_component_counts(graph.vertex_count, graph.edges, bits, np.empty((0, 2), np.int64))[0])
    touched = int(np.count_nonzero(_eta_degrees(graph, eta.bits)))
    return k - (graph.vertex_count - touched)


def _log_weight(size, loops, params: LoopParams):
    size = np.asarray(size, dtype=np.float64)
    loops = np.asarray(loops, dtype=np.float64)
    out = size * math.log(params.x)
    if params.n > 0:
        return out + loops * math.log(params.n)
    return np.where(loops > 0, -np.inf, out)


def loop_weight(graph: LatticeGraph, eta: LoopConfig, params: LoopParams) -> float:
    """``log(x^|eta| n^loops)``, or ``-inf`` for a subgraph that is not even."""
    if not is_even(graph, eta):
        return -math.inf
    return float(_log_weight(int(eta.bits.sum()), loop_count(graph, eta), params))


def _face_table(graph: LatticeGraph) -> np.ndarray:
    """``edge_faces`` with the exterior face moved to the last column index."""
    ef = graph.faces.edge_faces.copy()
    ef[ef < 0] = graph.faces.count
    return ef


def expand_batch(graph: LatticeGraph, faces: np.ndarray) -> np.ndarray:
    """Domain walls of many face configurations at once, shape ``(B, edge_count)``."""
    faces = np.atleast_2d(np.asarray(faces, dtype=np.uint8))
    full = np.concatenate([faces, np.ones((faces.shape[0], 1), dtype=np.uint8)], axis=1)
    ef = _face_table(graph)
    return (full[:, ef[:, 0]] != full[:, ef[:, 1]]).astype(np.uint8)


def low_temp_expand(face_config: FaceConfig) -> LoopConfig:
    """Edges separating faces in different states (exterior counted as 1)."""
    g = face_config.graph
    return LoopConfig(g, expand_batch(g, face_config.bits)[0])


def low_temp_collapse(eta: LoopConfig) -> FaceConfig:
    """Face states from the parity of walls crossed on the way in from the exterior.

    Raises ``ValueError`` when ``eta`` is not even, since the parity is then
    path dependent.
    """
    g = eta.graph
    F = g.faces.count
    ef = _face_table(g)
    state = np.full(F + 1, -1, dtype=np.int64)
    state[F] = 1
    adj: list[list[tuple[int, int]]] = [[] for _ in range(F + 1)]
    for e, (a, b) in enumerate(ef):
        adj[a].append((b, e))
        adj[b].append((a, e))
    stack = [F]
    while stack:
        f = stack.pop()
        for h, e in adj[f]:
            s = state[f] ^ int(eta.bits[e])
            if state[h] < 0:
                state[h] = s
                stack.append(h)
            elif state[h] != s:
                raise ValueError("loop configuration is not even: face parity is inconsistent")
    return FaceConfig(g, state[:F].astype(np.uint8))


def _loop_stats(graph: LatticeGraph, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    size = etas.sum(axis=1, dtype=np.int64)
    k = K.batch_component_counts(graph.vertex_count, graph.edges, etas, np.empty((0, 2), np.int64))
    # each loop of an even subgraph has as many vertices as edges
    return size, k - (graph.vertex_count - size)


@dataclass(frozen=True, eq=False)
class LoopExact:
    """Exact loop O(n) law, indexed by face configuration (see :func:`iter_configs`).

    ``etas[i]`` is the loop configuration of face configuration ``i``.
    """

    params: LoopParams
    etas: np.ndarray
    probabilities: np.ndarray
    Z: float
    sizes: np.ndarray
    loops: np.ndarray

    @property
    def edge_marginals(self) -> np.ndarray:
        return self.probabilities @ self.etas

    @property
    def mean_size(self) -> float:
        return float(self.probabilities @ self.sizes)

    @property
    def mean_loops(self) -> float:
        return float(self.probabilities @ self.loops)


def loop_exact(domain: LatticeGraph, params: LoopParams) -> LoopExact:
    """Enumerate the face configurations, expand them and weight by ``x^|eta| n^loops``."""
    _require_hex(domain)
    check_cap(domain.faces.count, "faces", cap=FACE_CAP)
    faces = np.concatenate(list(iter_configs(domain.faces.count)))
    etas = expand_batch(domain, faces)
    size, loops = _loop_stats(domain, etas)
    logw = _log_weight(size, loops, params)
    w = np.exp(logw)
    Z = float(w.sum())
    return LoopExact(params, etas, w / Z, Z, size, loops)


def loop_mcmc_step(graph: LatticeGraph, eta: LoopConfig, params: LoopParams, face: int, rng) -> LoopConfig:
    """Metropolis plaquette move: propose ``eta`` xor the boundary of ``face``."""
    _require_hex(graph)
    if not 0 <= face < graph.faces.count:
        raise IndexError(f"face {face} out of range")
    proposal = eta.bits.copy()
    proposal[graph.faces.face_edges[face]] ^= 1
    new = LoopConfig(graph, proposal)
    delta = loop_weight(graph, new, params) - loop_weight(graph, eta, params)
    if delta >= 0 or as_generator(rng).random() < math.exp(delta):
        return new
    return eta


@njit(cache=True)
def _loop_components(n_vertices, edges, bits, parent, size):
    for v in range(n_vertices):
        parent[v] = v
        size[v] = 1
    k = n_vertices
    n_open = 0
    for e in range(edges.shape[0]):
        if bits[e]:
            n_open += 1
            a = K.find(parent, edges[e, 0])
            b = K.find(parent, edges[e, 1])
            if a != b:
                K.union(parent, size, a, b)
                k -= 1
    return n_open, k - (n_vertices - n_open)


@njit(cache=True)
def _plaquette_sweeps(n_vertices, edges, face_edges, bits, log_x, log_n, n_zero, uniforms, rec_bits, rec_size, rec_loops):
    parent = np.empty(n_vertices, dtype=np.int64)
    size = np.empty(n_vertices, dtype=np.int64)
    n_open, loops = _loop_components(n_vertices, edges, bits, parent, size)
    F = face_edges.shape[0]
    for s in range(uniforms.shape[0]):
        for f in range(F):
            for j in range(face_edges.shape[1]):
                bits[face_edges[f, j]] ^= 1
            new_open, new_loops = _loop_components(n_vertices, edges, bits, parent, size)
            if n_zero and new_loops > 0:
                accept = False
            else:
                delta = (new_open - n_open) * log_x + (new_loops - loops) * log_n
                accept = delta >= 0.0 or uniforms[s, f] < np.exp(delta)
            if accept:
                n_open = new_open
                loops = new_loops
            else:
                for j in range(face_edges.shape[1]):
                    bits[face_edges[f, j]] ^= 1
        rec_bits[s, :] = bits
        rec_size[s] = n_open
        rec_loops[s] = loops


@dataclass(frozen=True, eq=False)
class LoopSample:
    """Per-sweep loop configurations and statistics of a plaquette chain."""

    graph: LatticeGraph
    params: LoopParams
    etas: np.ndarray
    sizes: np.ndarray
    loops: np.ndarray
    seed: int | None

    def edge_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return batch_means(self.etas.astype(np.float64))

    def mean_size(self) -> Estimate:
        m, s = batch_means(self.sizes.astype(np.float64))
        return Estimate(float(m), float(s), len(self.sizes), self.seed)

    def mean_loops(self) -> Estimate:
        m, s = batch_means(self.loops.astype(np.float64))
        return Estimate(float(m), float(s), len(self.loops), self.seed)

    def loop_density(self) -> Estimate:
        """Fraction of domain edges covered by loops."""
        m, s = batch_means(self.sizes / self.graph.edge_count)
        return Estimate(float(m), float(s), len(self.sizes), self.seed)


def loop_sample(domain: LatticeGraph, params: LoopParams, sweeps: int, burn_in: int = 1000, seed: int = 0) -> LoopSample:
    """Systematic-scan plaquette chain from the empty configuration.

    Every bounded face is proposed once per sweep, in face order; these moves
    generate all even subgraphs of a simply connected domain.
    """
    _require_hex(domain)
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = as_generator(seed)
    F = domain.faces.count
    face_edges = np.stack(domain.faces.face_edges).astype(np.int64)
    bits = np.zeros(domain.edge_count, dtype=np.uint8)
    log_n = math.log(params.n) if params.n > 0 else 0.0
    args = (domain.vertex_count, domain.edges, face_edges, bits, math.log(params.x), log_n, params.n == 0)
    if burn_in:
        _plaquette_sweeps(*args, rng.random((burn_in, F)), np.empty((burn_in, domain.edge_count), np.uint8),
                          np.empty(burn_in, np.int64), np.empty(burn_in, np.int64))
    etas = np.empty((sweeps, domain.edge_count), dtype=np.uint8)
    sizes = np.empty(sweeps, dtype=np.int64)
    loops = np.empty(sweeps, dtype=np.int64)
    _plaquette_sweeps(*args, rng.random((sweeps, F)), etas, sizes, loops)
    return LoopSample(domain, params, etas, sizes, loops, seed if isinstance(seed, int) else None)


def x_c(n: float) -> float:
    """Critical edge-weight ``1 / sqrt(2 + sqrt(2 - n))`` for ``0 <= n <= 2``."""
    if not 0.0 <= n <= 2.0:
        raise ValueError(f"x_c(n) is defined for 0 <= n <= 2, got {n}")
    return 1.0 / math.sqrt(2.0 + math.sqrt(2.0 - n))
