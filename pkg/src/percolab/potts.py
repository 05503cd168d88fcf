"""Edwards-Sokal coupling between FK percolation and the q-state Potts model.

Potts convention: a coloring has weight ``exp(2 beta * #monochromatic edges)``,
and the coupled FK parameter is ``p = 1 - exp(-2 beta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .fk import FKParams, fk_distribution
from .lattice import LatticeGraph
from .percolation import BondConfig, check_cap, clusters, iter_configs
from .stats import as_generator


@dataclass(frozen=True)
class PottsParams:
    """Inverse temperature ``beta >= 0`` and integer number of colors ``q >= 2``."""

    beta: float
    q: int

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"q must be an integer >= 2, got {self.q}")

    @property
    def p(self) -> float:
        return p_of_beta(self.beta)


@dataclass(frozen=True, eq=False)
class PottsConfig:
    """Color in ``1..q`` for every vertex of ``graph``."""

    graph: LatticeGraph
    colors: np.ndarray
    q: int

    def __post_init__(self):
        colors = np.array(self.colors, dtype=np.int64)
        if colors.shape != (self.graph.vertex_count,):
            raise ValueError("coloring length differs from the vertex count")
        if colors.size and (colors.min() < 1 or colors.max() > self.q):
            raise ValueError(f"colors must lie in 1..{self.q}")
        colors.setflags(write=False)
        object.__setattr__(self, "colors", colors)

    @property
    def spins(self) -> np.ndarray:
        """Ising view for q = 2: color 1 -> -1, color 2 -> +1."""
        if self.q != 2:
            raise ValueError("the +-1 view needs q = 2")
        return 2 * self.colors - 3

    def monochromatic(self) -> np.ndarray:
        e = self.graph.edges
        return self.colors[e[:, 0]] == self.colors[e[:, 1]]


def beta_of_p(p: float) -> float:
    """``beta = -log(1 - p) / 2``; infinite at p = 1."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 1.0:
        return math.inf
    return -0.5 * math.log1p(-p)


def p_of_beta(beta: float) -> float:
    """``p = 1 - exp(-2 beta)``."""
    if not beta >= 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return -math.expm1(-2.0 * beta)


def es_color(graph: LatticeGraph, fk_config: BondConfig, q: int, rng) -> PottsConfig:
    """Give every open cluster an independent uniform color."""
    stats = clusters(graph, fk_config)
    palette = as_generator(rng).integers(1, q + 1, size=stats.count)
    return PottsConfig(graph, palette[stats.labels], q)


def es_bond(graph: LatticeGraph, coloring: PottsConfig, p: float, rng) -> BondConfig:
    """Open each monochromatic edge independently with probability ``p``; close the rest."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    u = as_generator(rng).random(graph.edge_count)
    return BondConfig(graph, ((u < p) & coloring.monochromatic()).astype(np.uint8))


def potts_weight(graph: LatticeGraph, coloring: PottsConfig, params: PottsParams) -> float:
    """Log-weight ``2 beta * #monochromatic edges``."""
    mono = int(coloring.monochromatic().sum())
    if mono == 0:
        return 0.0
    return 2.0 * params.beta * mono


def all_colorings(n_vertices: int, q: int) -> np.ndarray:
    """Every coloring as rows of colors in ``1..q``; vertex v is base-q digit v of the row index."""
    total = q**n_vertices
    check_cap(int(math.ceil(math.log2(total))), "bits of colorings")
    idx = np.arange(total, dtype=np.int64)
    return (idx[:, None] // q ** np.arange(n_vertices, dtype=np.int64)) % q + 1


def _mono_masks(graph: LatticeGraph, colorings: np.ndarray) -> np.ndarray:
    e = graph.edges
    mono = colorings[:, e[:, 0]] == colorings[:, e[:, 1]]
    return mono.astype(np.int64) @ (1 << np.arange(graph.edge_count, dtype=np.int64))


def potts_distribution(graph: LatticeGraph, params: PottsParams) -> np.ndarray:
    """Exact Potts law over :func:`all_colorings`."""
    cols = all_colorings(graph.vertex_count, params.q)
    e = graph.edges
    mono = (cols[:, e[:, 0]] == cols[:, e[:, 1]]).sum(axis=1)
    logw = 2.0 * params.beta * mono if params.beta > 0 else np.zeros(len(cols))
    w = np.exp(logw - logw.max())
    return w / w.sum()


def _subset_sums(g: np.ndarray, n_bits: int) -> np.ndarray:
    """``G[m] = sum over w subset of m of g[w]`` for bitmask-indexed ``g``."""
    g = g.copy()
    for i in range(n_bits):
        view = g.reshape(-1, 2, 1 << i)
        view[:, 1, :] += view[:, 0, :]
    return g


def _fk_cluster_counts(graph: LatticeGraph) -> np.ndarray:
    empty = np.empty((0, 2), dtype=np.int64)
    return np.concatenate(
        [K.batch_component_counts(graph.vertex_count, graph.edges, b, empty) for b in iter_configs(graph.edge_count)]
    )


def es_pushforward(graph: LatticeGraph, p: float, q: int) -> np.ndarray:
    """Exact law of the coloring produced by :func:`es_color` from an exact FK(p, q) sample.

    A coloring is compatible with an FK configuration when every open edge is
    monochromatic, and then has conditional probability ``q^-k``.
    """
    pi = fk_distribution(graph, FKParams(p, q))
    g = pi * float(q) ** (-_fk_cluster_counts(graph).astype(np.float64))
    G = _subset_sums(g, graph.edge_count)
    return G[_mono_masks(graph, all_colorings(graph.vertex_count, q))]


def total_variation(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def es_kernel_exact(graph: LatticeGraph, p: float, q: int) -> np.ndarray:
    """Transition matrix of one color-then-bond round on FK configurations.

    Entry ``[w, w2]`` is the probability that :func:`es_color` followed by
    :func:`es_bond` maps ``w`` to ``w2``.
    """
    E = graph.edge_count
    check_cap(2 * E, "bits of the joint chain")
    masks = _mono_masks(graph, all_colorings(graph.vertex_count, q))
    idx = np.arange(1 << E, dtype=np.int64)
    k = _fk_cluster_counts(graph).astype(np.float64)
    size = np.array([bin(i).count("1") for i in range(1 << E)], dtype=np.int64)
    # colour given w: uniform over colorings whose monochromatic set contains w
    color_given = ((idx[:, None] & ~masks[None, :]) == 0) * float(q) ** (-k[:, None])
    # bonds given colour: Bernoulli(p) on the monochromatic set only
    inside = (idx[None, :] & ~masks[:, None]) == 0
    bond_given = inside * (p ** size[None, :]) * ((1.0 - p) ** (size[masks][:, None] - size[None, :]))
    return color_given @ bond_given


@dataclass(frozen=True, eq=False)
class ESChain:
    """Alternating color/bond chain: FK configurations and colorings per sweep."""

    graph: LatticeGraph
    p: float
    q: int
    bonds: np.ndarray
    colors: np.ndarray

    def color_fractions(self) -> np.ndarray:
        """Fraction of vertices of each color, per sweep, shape ``(sweeps, q)``."""
        return np.stack([(self.colors == c).mean(axis=1) for c in range(1, self.q + 1)], axis=1)

    def magnetization(self) -> np.ndarray:
        """``(q max_c fraction_c - 1) / (q - 1)`` per sweep."""
        f = self.color_fractions().max(axis=1)
        return (self.q * f - 1.0) / (self.q - 1.0)


def es_chain(graph: LatticeGraph, p: float, q: int, sweeps: int, burn_in: int = 100, seed: int = 0) -> ESChain:
    """Swendsen-Wang chain for integer q: its bond marginal is FK(p, q) with free boundary."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = as_generator(seed)
    E, V = graph.edge_count, graph.vertex_count
    e0, e1 = graph.edges[:, 0], graph.edges[:, 1]
    bits = np.zeros(E, dtype=np.uint8)
    all_sites = np.ones(V, dtype=np.uint8)
    bonds = np.empty((sweeps, E), dtype=np.uint8)
    colors = np.empty((sweeps, V), dtype=np.int8 if q < 127 else np.int64)
    for s in range(burn_in + sweeps):
        labels, count = K.label_components(V, graph.edges, bits, all_sites)
        col = rng.integers(1, q + 1, size=count)[labels]
        bits = ((rng.random(E) < p) & (col[e0] == col[e1])).astype(np.uint8)
        if s >= burn_in:
            bonds[s - burn_in] = bits
            colors[s - burn_in] = col
    return ESChain(graph, p, q, bonds, colors)
