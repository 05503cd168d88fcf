"""Sharp-threshold diagnostics: derivative formula, OSSS exploration, S-curves,
mixing ratios and dynamical percolation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from . import _kernels as K
from .fk import FKParams, fk_sample
from .lattice import LatticeGraph, box_radius, build_box
from .percolation import BondConfig, check_cap, crossing_thresholds, iter_configs, one_arm_profile
from .potts import es_chain
from .stats import Estimate, as_generator, jackknife, map_replicas, replica_rng


@dataclass(frozen=True, eq=False)
class InfluenceReport:
    """Exact covariances ``Cov_p[f, w(e)]`` and two evaluations of ``d/dp E_p[f]``."""

    p: float
    mean: float
    variance: float
    covariances: np.ndarray
    derivative: float
    derivative_fd: float

    @property
    def bkkkl_sum(self) -> float:
        """``sum_e Cov / log(1 / Cov)`` over edges with positive covariance (reported, not bounded)."""
        c = self.covariances[(self.covariances > 0) & (self.covariances < 1)]
        return float(np.sum(c / np.log(1.0 / c)))


def influence_exact(graph: LatticeGraph, p: float, f: Callable[[np.ndarray], np.ndarray], h: float = 1e-5) -> InfluenceReport:
    """Covariances of ``f`` with each edge under Bernoulli(p), by enumeration.

    The derivative is computed as ``sum_e Cov / (p (1 - p))`` and, independently,
    by a central finite difference of ``E_p[f]`` with step ``h``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    check_cap(graph.edge_count)
    ps = np.array([p, p - h, p + h])
    E = graph.edge_count
    Z = np.zeros(3)
    m1 = np.zeros(3)
    m2 = 0.0
    mixed = np.zeros(E)
    for block in iter_configs(E):
        k = block.sum(axis=1, dtype=np.int64)
        w = np.power(ps[:, None], k) * np.power(1.0 - ps[:, None], E - k)
        vals = np.asarray(f(block), dtype=np.float64)
        Z += w.sum(axis=1)
        m1 += w @ vals
        m2 += float(w[0] @ vals**2)
        mixed += (w[0] * vals) @ block
    mean = m1[0] / Z[0]
    cov = mixed / Z[0] - mean * p
    return InfluenceReport(
        p=p,
        mean=float(mean),
        variance=float(m2 / Z[0] - mean**2),
        covariances=cov,
        derivative=float(cov.sum() / (p * (1.0 - p))),
        derivative_fd=float((m1[2] / Z[2] - m1[1] / Z[1]) / (2.0 * h)),
    )


class LazyBondAccess:
    """Edge states revealed one query at a time, with a record of what was asked.

    ``states`` is any indexable of edge bits; nothing but :meth:`query` reads it.
    """

    def __init__(self, states):
        self._states = states
        self.counts: dict[int, int] = {}

    def query(self, e: int) -> int:
        self.counts[e] = self.counts.get(e, 0) + 1
        return int(self._states[e])

    @property
    def revealed(self) -> set[int]:
        return set(self.counts)

    @classmethod
    def from_config(cls, config: BondConfig) -> "LazyBondAccess":
        return cls(config.bits)


@dataclass(frozen=True, eq=False)
class RevealmentReport:
    """One run of the exploration: the radius used, the answer and the revealed edges."""

    k: int
    decision: int
    revealed: np.ndarray
    queries: int


def _box_levels(graph: LatticeGraph) -> tuple[np.ndarray, int]:
    if graph.origin is None or "boundary" not in graph.boundaries:
        raise ValueError("exploration needs a box with an origin and a boundary")
    level = box_radius(graph)
    return level, int(level.max())


def osss_explore(graph: LatticeGraph, access: LazyBondAccess, rng=None, k: int | None = None) -> RevealmentReport:
    """Decide whether the origin is connected to the boundary of the box, from the inside out.

    A radius ``k`` is drawn uniformly from ``1..n`` (unless given) and every
    open cluster meeting the sphere of radius ``k`` is explored breadth-first.
    Each edge at an explored vertex is queried once. The origin reaches the
    boundary exactly when one of these clusters contains both.
    """
    level, n = _box_levels(graph)
    if k is None:
        k = int(as_generator(rng).integers(1, n + 1))
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    indptr, nbrs, eids = graph.csr
    seen = np.zeros(graph.vertex_count, dtype=bool)
    asked = np.zeros(graph.edge_count, dtype=bool)
    decision = 0
    for root in np.flatnonzero(level == k):
        if seen[root]:
            continue
        seen[root] = True
        queue = [int(root)]
        has_origin = has_boundary = False
        while queue:
            v = queue.pop(0)
            has_origin |= v == graph.origin
            has_boundary |= level[v] == n
            for j in range(indptr[v], indptr[v + 1]):
                e = int(eids[j])
                if asked[e]:
                    continue
                asked[e] = True
                if access.query(e):
                    w = int(nbrs[j])
                    if not seen[w]:
                        seen[w] = True
                        queue.append(w)
        if has_origin and has_boundary:
            decision = 1
    return RevealmentReport(k, decision, asked, int(asked.sum()))


@njit(cache=True)
def _explore(indptr, nbrs, eids, level, n, origin, state, k, seen, asked, queue):
    """Compiled twin of :func:`osss_explore` for one radius; fills ``asked``."""
    V = indptr.shape[0] - 1
    for v in range(V):
        seen[v] = False
    for e in range(asked.shape[0]):
        asked[e] = False
    decision = 0
    for root in range(V):
        if level[root] != k or seen[root]:
            continue
        seen[root] = True
        head = 0
        tail = 1
        queue[0] = root
        has_o = False
        has_b = False
        while head < tail:
            v = queue[head]
            head += 1
            if v == origin:
                has_o = True
            if level[v] == n:
                has_b = True
            for j in range(indptr[v], indptr[v + 1]):
                e = eids[j]
                if asked[e]:
                    continue
                asked[e] = True
                if state[e]:
                    w = nbrs[j]
                    if not seen[w]:
                        seen[w] = True
                        queue[tail] = w
                        tail += 1
        if has_o and has_b:
            decision = 1
    return decision


@njit(cache=True)
def _revealment_batch(indptr, nbrs, eids, level, n, origin, states):
    """Decision and revealment averaged over every radius k = 1..n, per configuration."""
    R, E = states.shape
    V = indptr.shape[0] - 1
    f = np.empty(R, dtype=np.uint8)
    rev = np.zeros((R, E))
    seen = np.zeros(V, dtype=np.bool_)
    asked = np.zeros(E, dtype=np.bool_)
    queue = np.empty(V, dtype=np.int64)
    for i in range(R):
        d = 0
        for k in range(1, n + 1):
            d = _explore(indptr, nbrs, eids, level, n, origin, states[i], k, seen, asked, queue)
            for e in range(E):
                if asked[e]:
                    rev[i, e] += 1.0
        f[i] = d
        for e in range(E):
            rev[i, e] /= n
    return f, rev


def _osss_chunk(seed, start, stop, graph, p, level, n):
    states = np.stack([(replica_rng(seed, i).random(graph.edge_count) < p) for i in range(start, stop)]).astype(np.uint8)
    indptr, nbrs, eids = graph.csr
    f, rev = _revealment_batch(indptr, nbrs, eids, level, n, graph.origin, states)
    return np.concatenate([f[:, None].astype(np.float64), states.astype(np.float64), rev], axis=1)


@dataclass(frozen=True, eq=False)
class OSSSReport:
    """Both sides of ``Var_p(f) <= 2 sum_e delta_e Cov_p[f, w(e)]`` for the one-arm event.

    ``slack`` is right-hand side minus left-hand side; all three carry
    grouped-jackknife errors from the same replicas.
    """

    n: int
    p: float
    variance: Estimate
    rhs: Estimate
    slack: Estimate
    revealments: np.ndarray
    covariances: np.ndarray

    @property
    def max_revealment(self) -> float:
        return float(self.revealments.max())


def osss_check(graph: LatticeGraph, p: float, replicas: int, seed: int, workers: int | None = None) -> OSSSReport:
    """Monte Carlo instance of the OSSS inequality on a box, for ``f = 1[origin <-> boundary]``.

    Revealments are averaged exactly over the uniform choice of radius k for
    each sampled configuration, which leaves them unbiased.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    level, n = _box_levels(graph)
    E = graph.edge_count
    data = map_replicas(_osss_chunk, replicas, seed, graph, p, level, n, workers=workers, chunk=512)

    def sides(d):
        f = d[:, 0]
        w = d[:, 1 : 1 + E]
        rev = d[:, 1 + E :]
        mf = f.mean()
        cov = (f @ w) / len(f) - mf * w.mean(axis=0)
        var = mf * (1.0 - mf)
        rhs = 2.0 * float(rev.mean(axis=0) @ cov)
        return np.array([var, rhs, rhs - var])

    est, err = jackknife(sides, data)
    f = data[:, 0]
    w = data[:, 1 : 1 + E]
    cov = (f @ w) / len(f) - f.mean() * w.mean(axis=0)
    mk = lambda i: Estimate(float(est[i]), float(err[i]), replicas, seed)  # noqa: E731
    return OSSSReport(n, p, mk(0), mk(1), mk(2), data[:, 1 + E :].mean(axis=0), cov)


@dataclass(frozen=True)
class RevealmentScaling:
    n: int
    max_revealment: float
    s_over_n: float

    @property
    def ratio(self) -> float:
        return self.max_revealment / self.s_over_n


def revealment_scaling(ns, p: float, replicas: int, seed: int, workers: int | None = None) -> list[RevealmentScaling]:
    """Largest revealment against ``S_n / n`` with ``S_n = sum_{k<n} theta_k`` (``theta_0 = 1``)."""
    out = []
    for n in ns:
        rep = osss_check(build_box(2, n), p, replicas, seed, workers)
        thetas = [1.0] + [e.mean for e in one_arm_profile(2, n - 1, p, max(replicas, 10**4), seed, workers)] if n > 1 else [1.0]
        out.append(RevealmentScaling(n, rep.max_revealment, float(sum(thetas[:n])) / n))
    return out


def _level_crossing(ps: np.ndarray, H: np.ndarray, level: float) -> float:
    """First p where the piecewise-linear interpolation of nondecreasing H reaches ``level``."""
    idx = np.flatnonzero(H >= level)
    if len(idx) == 0 or idx[0] == 0:
        return math.nan
    i = idx[0]
    h0, h1 = H[i - 1], H[i]
    return float(ps[i - 1] + (level - h0) * (ps[i] - ps[i - 1]) / (h1 - h0))


@dataclass(frozen=True, eq=False)
class SCurve:
    """Crossing probabilities of the n x n square over a grid of p.

    ``width`` is ``p(H = 1 - eps) - p(H = eps)`` and ``p_half`` the p at which
    the curve reaches 1/2, both by linear interpolation between grid points.
    """

    n: int
    p_grid: np.ndarray
    H: np.ndarray
    stderr: np.ndarray
    eps: float
    width: float
    width_stderr: float
    p_half: float
    p_half_stderr: float
    replicas: int
    seed: int


def s_curve(n: int, p_grid, replicas: int, seed: int, eps: float = 0.1, workers: int | None = None) -> SCurve:
    """Estimate ``H_{n,n}(p)`` on ``p_grid`` from one set of crossing thresholds.

    Replica ``i`` crosses at p exactly when its threshold lies below p, so all
    grid points share the same configurations and the curve is nondecreasing.
    """
    ps = np.asarray(p_grid, dtype=np.float64)
    if np.any(np.diff(ps) <= 0) or ps.min() <= 0 or ps.max() >= 1:
        raise ValueError("p_grid must be strictly increasing inside (0, 1)")
    thr = crossing_thresholds(n, n, replicas, seed, workers)
    hits = (thr[:, None] < ps[None, :]).astype(np.float64)
    H = hits.mean(axis=0)
    se = hits.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.full(len(ps), math.inf)

    def stat(h):
        curve = h.mean(axis=0)
        lo, hi, half = (_level_crossing(ps, curve, x) for x in (eps, 1.0 - eps, 0.5))
        return np.array([hi - lo, half])

    (width, half), (w_err, h_err) = jackknife(stat, hits)
    return SCurve(n, ps, H, se, eps, float(width), float(w_err), float(half), float(h_err), replicas, seed)


def p_grid(p_from: float, p_to: float, step: float = 0.01) -> np.ndarray:
    count = int(round((p_to - p_from) / step)) + 1
    return np.round(p_from + step * np.arange(count), 12)


# mixing events
A_EVENTS = ("cross", "arm")
B_EVENTS = ("cross", "arm")


def _event(graph: LatticeGraph, kind: str, inner: bool, n: int, N: int):
    """(edge mask, set A, set B) describing an inner event in Lambda_n or an outer one beyond Lambda_N."""
    level = box_radius(graph)
    x = graph.positions[:, 0]
    e0, e1 = graph.edges[:, 0], graph.edges[:, 1]
    R = int(level.max())
    if inner:
        mask = (level[e0] <= n) & (level[e1] <= n)
        if kind == "cross":
            a, b = (x == -n) & (level <= n), (x == n) & (level <= n)
        else:
            a = np.zeros(graph.vertex_count, bool)
            a[graph.origin] = True
            b = level == n
    else:
        mask = ~((level[e0] <= N) & (level[e1] <= N))
        if kind == "cross":
            a, b = x == -R, x == R
        else:
            a, b = level == N, level == R
    return mask.astype(np.uint8), a, b


@dataclass(frozen=True)
class MixingReport:
    """``|P[A and B] - P[A] P[B]| / (P[A] P[B])`` with a grouped-jackknife error.

    ``degenerate`` is raised when P[A] or P[B] is below 1%.
    """

    ratio: float
    stderr: float
    pA: float
    pB: float
    pAB: float
    samples: int
    degenerate: bool


def _event_indicators(graph, configs, events):
    out = []
    for mask, a, b in events:
        out.append(K.batch_sets_connected(graph.vertex_count, graph.edges, configs & mask[None, :], a, b))
    return out


def _bernoulli_chunk(seed, start, stop, graph, p, events):
    cfg = np.stack([(replica_rng(seed, i).random(graph.edge_count) < p) for i in range(start, stop)]).astype(np.uint8)
    ia, ib = _event_indicators(graph, cfg, events)
    return np.column_stack([ia, ib]).astype(np.float64)


def mixing_ratio(
    A_spec: str,
    B_spec: str,
    n: int,
    N: int,
    p: float,
    replicas: int,
    seed: int,
    q: float = 1.0,
    burn_in: int = 200,
    workers: int | None = None,
) -> MixingReport:
    """Estimate the mixing ratio between an event inside Lambda_n and one outside Lambda_N.

    The measure lives on Lambda_{2N} with free boundary. Events: ``cross`` is a
    left-right crossing (of Lambda_n, or of Lambda_{2N} around Lambda_N) and
    ``arm`` joins the origin to the boundary of Lambda_n (inner) or the
    boundary of Lambda_N to that of Lambda_{2N} (outer). With ``q = 1``
    samples are independent; otherwise they are successive sweeps of a
    Swendsen-Wang chain (integer q) or heat-bath chain, one per replica.
    """
    if A_spec not in A_EVENTS or B_spec not in B_EVENTS:
        raise ValueError(f"events must be among {A_EVENTS}")
    if n < 1 or N < 2 * n:
        raise ValueError("mixing needs n >= 1 and N >= 2n")
    graph = build_box(2, 2 * N)
    events = (_event(graph, A_spec, True, n, N), _event(graph, B_spec, False, n, N))
    if q == 1.0:
        ind = map_replicas(_bernoulli_chunk, replicas, seed, graph, p, events, workers=workers)
    else:
        if float(q).is_integer() and q >= 2:
            cfg = es_chain(graph, p, int(q), replicas, burn_in, seed).bonds
        else:
            cfg = fk_sample(graph, FKParams(p, q), replicas, burn_in, seed).configs
        ia, ib = _event_indicators(graph, cfg, events)
        ind = np.column_stack([ia, ib]).astype(np.float64)

    def stat(d):
        pa, pb = d[:, 0].mean(), d[:, 1].mean()
        pab = (d[:, 0] * d[:, 1]).mean()
        return abs(pab - pa * pb) / (pa * pb) if pa * pb > 0 else math.nan

    ratio, err = jackknife(stat, ind)
    pa, pb = float(ind[:, 0].mean()), float(ind[:, 1].mean())
    return MixingReport(
        ratio=float(ratio),
        stderr=float(err),
        pA=pa,
        pB=pb,
        pAB=float((ind[:, 0] * ind[:, 1]).mean()),
        samples=replicas,
        degenerate=min(pa, pb) < 0.01,
    )


@dataclass(frozen=True, eq=False)
class DynTrajectory:
    """Dynamical percolation run: clock rings, redrawn states and snapshots.

    ``event_edges``, ``event_times`` and ``event_states`` are sorted by edge and
    then time. ``snapshots[j]`` is the configuration at ``query_times[j]``.
    """

    graph: LatticeGraph
    p: float
    horizon: float
    initial: np.ndarray
    event_edges: np.ndarray
    event_times: np.ndarray
    event_states: np.ndarray
    query_times: np.ndarray
    snapshots: np.ndarray
    seed: int | None

    def events_of(self, e: int) -> np.ndarray:
        return self.event_times[self.event_edges == e]


def dynamical_run(graph: LatticeGraph, p: float, horizon: float, query_times, seed) -> DynTrajectory:
    """Resample every edge at the rings of its own rate-1 Poisson clock.

    The t = 0 state is Bernoulli(p); each ring redraws the edge as a fresh
    Bernoulli(p) variable.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    qt = np.asarray(query_times, dtype=np.float64)
    if np.any(qt < 0) or np.any(qt > horizon):
        raise ValueError("query times must lie in [0, horizon]")
    rng = as_generator(seed)
    E = graph.edge_count
    initial = (rng.random(E) < p).astype(np.uint8)
    rings = rng.poisson(horizon, E)
    edges = np.repeat(np.arange(E), rings)
    times = rng.uniform(0.0, horizon, rings.sum())
    states = (rng.random(rings.sum()) < p).astype(np.uint8)
    order = np.lexsort((times, edges))
    edges, times, states = edges[order], times[order], states[order]
    starts = np.concatenate([[0], np.cumsum(rings)])
    # one sorted key per ring so a single search finds every edge's last ring
    span = horizon + 1.0
    keys = edges * span + times
    snaps = np.empty((len(qt), E), dtype=np.uint8)
    for j, t in enumerate(qt):
        last = np.searchsorted(keys, np.arange(E) * span + t, side="right") - 1
        done = last >= starts[:-1]
        snaps[j] = np.where(done, states[np.maximum(last, 0)], initial)
    return DynTrajectory(graph, p, float(horizon), initial, edges, times, states, qt, snaps, seed if isinstance(seed, int) else None)


def _dyn_chunk(seed, start, stop, graph, p, horizon, qt):
    return np.stack([dynamical_run(graph, p, horizon, qt, replica_rng(seed, i)).snapshots for i in range(start, stop)])


def dynamical_snapshots(graph: LatticeGraph, p: float, query_times, replicas: int, seed: int, workers: int | None = None) -> np.ndarray:
    """Snapshots of independent runs, shape ``(replicas, len(query_times), edge_count)``."""
    qt = np.asarray(query_times, dtype=np.float64)
    horizon = float(max(qt.max(), 1e-12))
    return map_replicas(_dyn_chunk, replicas, seed, graph, p, horizon, qt, workers=workers, chunk=256)


def edge_marginals_over_time(snapshots: np.ndarray, seed: int | None = None) -> list[Estimate]:
    """Open frequency at each query time, pooling independent replicas and edges."""
    return [Estimate.from_samples(snapshots[:, j, :].ravel(), seed) for j in range(snapshots.shape[1])]


def lag_autocovariance(snapshots: np.ndarray, i: int, j: int, seed: int | None = None) -> Estimate:
    """Covariance of an edge's state at query times ``i`` and ``j``, pooled over edges and replicas."""
    a = snapshots[:, i, :].ravel().astype(np.float64)
    b = snapshots[:, j, :].ravel().astype(np.float64)
    d = np.column_stack([a, b])
    val, err = jackknife(lambda x: (x[:, 0] * x[:, 1]).mean() - x[:, 0].mean() * x[:, 1].mean(), d)
    return Estimate(float(val), float(err), len(a), seed)
