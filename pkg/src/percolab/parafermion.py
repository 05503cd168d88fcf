"""Parafermionic observable of the loop O(n) model and self-avoiding walk counts.

Conventions
-----------
Mid-edges of a hexagonal domain are numbered as in
:attr:`LatticeGraph.mid_edges`: the domain's edges first, then its stubs
(the half-edges crossing the boundary polygon). A walk starts at a boundary
mid-edge ``a``, visits distinct vertices and ends at a mid-edge ``z``; its
length ``|gamma|`` is the number of vertices visited. Loop configurations
paired with a walk must avoid all of the walk's vertices. The winding is
counted in units of pi/3, counterclockwise positive.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .lattice import HEXAGONAL, LatticeGraph
from .loops import FACE_CAP, expand_batch, _loop_stats
from .percolation import EnumerationCapError, check_cap, iter_configs

MU_HEX = math.sqrt(2.0 + math.sqrt(2.0))
WALK_EDGE_CAP = 36
_KEY_SCALE = 1e6


def sigma(n: float) -> float:
    """Spin ``1 - 3 arccos(-n/2) / (4 pi)`` for ``0 <= n <= 2``."""
    if not 0.0 <= n <= 2.0:
        raise ValueError(f"sigma(n) is defined for 0 <= n <= 2, got {n}")
    return 1.0 - 3.0 / (4.0 * math.pi) * math.acos(-n / 2.0)


def turn_count(points) -> int:
    """Net number of pi/3 turns along a polyline of complex points (ccw positive).

    Every turn must be a multiple of pi/3.
    """
    pts = np.asarray(points, dtype=np.complex128)
    if len(pts) < 3:
        return 0
    d = np.diff(pts)
    ang = np.angle(d[1:] / d[:-1]) / (math.pi / 3.0)
    turns = np.rint(ang)
    if np.any(np.abs(ang - turns) > 1e-9):
        raise ValueError("path turns by an angle that is not a multiple of pi/3")
    return int(turns.sum())


def winding(points) -> float:
    """Total rotation of an oriented polyline, in radians."""
    return turn_count(points) * math.pi / 3.0


@dataclass(frozen=True, eq=False)
class WalkPath:
    """Self-avoiding walk from mid-edge ``start`` through ``vertices`` to mid-edge ``end``."""

    domain: LatticeGraph
    start: int
    vertices: tuple[int, ...]
    end: int

    def __post_init__(self):
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("walk repeats a vertex")

    @property
    def length(self) -> int:
        return len(self.vertices)

    def points(self) -> np.ndarray:
        z = self.domain.complex_positions
        mids = self.domain.mid_edges
        return np.concatenate([[mids[self.start]], z[list(self.vertices)], [mids[self.end]]])

    @property
    def turns(self) -> int:
        return turn_count(self.points()) if self.vertices else 0


def _require_hex(domain: LatticeGraph) -> None:
    if domain.kind != HEXAGONAL or domain.stubs is None:
        raise ValueError("the parafermionic observable needs a hexagonal domain")


def _incidence(domain: LatticeGraph) -> list[list[tuple[int, int]]]:
    """Per vertex: ``(mid_edge_id, other_vertex or -1)`` for each edge and stub."""
    E = domain.edge_count
    inc: list[list[tuple[int, int]]] = [[] for _ in range(domain.vertex_count)]
    for e, (u, v) in enumerate(domain.edges):
        inc[u].append((e, int(v)))
        inc[v].append((e, int(u)))
    for s, v in enumerate(domain.stubs.vertices):
        inc[v].append((E + s, -1))
    return inc


def boundary_mid_edges(domain: LatticeGraph) -> np.ndarray:
    _require_hex(domain)
    return np.arange(domain.edge_count, domain.edge_count + len(domain.stubs.vertices))


def _check_start(domain: LatticeGraph, a: int) -> None:
    if a not in set(boundary_mid_edges(domain).tolist()):
        raise ValueError(f"mid-edge {a} is not on the domain boundary")


def iter_walks(domain: LatticeGraph, a: int | None = None):
    """Every self-avoiding walk from boundary mid-edge ``a`` (default: the first stub).

    Includes the empty walk that starts and ends at ``a``.
    """
    _require_hex(domain)
    a = domain.edge_count if a is None else int(a)
    _check_start(domain, a)
    inc = _incidence(domain)
    v0 = int(domain.stubs.vertices[a - domain.edge_count])
    yield WalkPath(domain, a, (), a)
    path = [v0]
    on_path = {v0}

    def rec(v, came):
        for mid, other in inc[v]:
            if mid == came:
                continue
            yield WalkPath(domain, a, tuple(path), mid)
            if other >= 0 and other not in on_path:
                path.append(other)
                on_path.add(other)
                yield from rec(other, mid)
                path.pop()
                on_path.discard(other)

    yield from rec(v0, a)


@lru_cache(maxsize=16)
def _walk_table(domain: LatticeGraph, a: int):
    """Arrays (end mid-edge, turns, vertex count, vertex bitmask) over all walks."""
    rows = []
    z = domain.complex_positions
    mids = domain.mid_edges
    inc = _incidence(domain)
    v0 = int(domain.stubs.vertices[a - domain.edge_count])
    rows.append((a, 0, 0, 0))

    def turn(d_in, d_out):
        return int(round(cmath.phase(d_out / d_in) / (math.pi / 3.0)))

    def rec(v, d_in, turns, nv, mask, came):
        for mid, other in inc[v]:
            if mid == came:
                continue
            t = turns + turn(d_in, mids[mid] - z[v])
            rows.append((mid, t, nv, mask))
            if other >= 0 and not (mask >> other) & 1:
                rec(other, z[other] - z[v], t, nv + 1, mask | (1 << other), mid)

    rec(v0, z[v0] - mids[a], 0, 1, 1 << v0, a)
    arr = np.array(rows, dtype=object)
    return (
        arr[:, 0].astype(np.int64),
        arr[:, 1].astype(np.int64),
        arr[:, 2].astype(np.int64),
        arr[:, 3],
    )


@lru_cache(maxsize=16)
def _loop_table(domain: LatticeGraph):
    """Every even subgraph: (vertex bitmask, edge count, loop count)."""
    check_cap(domain.faces.count, "faces", cap=FACE_CAP)
    faces = np.concatenate(list(iter_configs(domain.faces.count)))
    etas = expand_batch(domain, faces)
    size, loops = _loop_stats(domain, etas)
    masks = []
    for row in etas:
        m = 0
        for u, v in domain.edges[row.astype(bool)]:
            m |= (1 << int(u)) | (1 << int(v))
        masks.append(m)
    return np.array(masks, dtype=object), size, loops


@dataclass(frozen=True, eq=False)
class ObservableField:
    """Values of F at every mid-edge of ``domain`` for the given parameters."""

    domain: LatticeGraph
    values: np.ndarray
    n: float
    x: float
    sigma: float
    a: int

    def __getitem__(self, z: int) -> complex:
        return complex(self.values[z])


def observable_field(domain: LatticeGraph, n: float, x: float, sigma_value: float | None = None, a: int | None = None) -> ObservableField:
    """Exact F(z) = sum over (walk a -> z, disjoint loops) of ``exp(-i sigma W) x^(|gamma|+|omega|) n^loops``.

    ``sigma_value`` defaults to :func:`sigma` of ``n``.
    """
    _require_hex(domain)
    if domain.edge_count > WALK_EDGE_CAP:
        raise EnumerationCapError(
            f"walk enumeration over {domain.edge_count} edges exceeds the cap of {WALK_EDGE_CAP}"
        )
    if not x >= 0.0:
        raise ValueError("x must be >= 0")
    if not n >= 0.0:
        raise ValueError("n must be >= 0")
    a = domain.edge_count if a is None else int(a)
    _check_start(domain, a)
    s = sigma(n) if sigma_value is None else float(sigma_value)
    ends, turns, nverts, wmasks = _walk_table(domain, a)
    lmasks, lsize, lloops = _loop_table(domain)
    lw = np.power(float(x), lsize.astype(np.float64))
    lw = lw * np.where(lloops > 0, np.power(float(n), lloops.astype(np.float64)), 1.0)
    uniq, inv = np.unique(wmasks.astype(object), return_inverse=True)
    disjoint = np.array([[(int(w) & int(m)) == 0 for m in lmasks] for w in uniq], dtype=bool)
    loop_sum = disjoint @ lw
    terms = np.exp(-1j * s * turns * (math.pi / 3.0)) * np.power(float(x), nverts.astype(np.float64)) * loop_sum[inv]
    values = np.zeros(len(domain.mid_edges), dtype=np.complex128)
    np.add.at(values, ends, terms)
    return ObservableField(domain, values, float(n), float(x), s, a)


def parafermionic_F(domain: LatticeGraph, a: int, z: int, n: float, x: float, sigma_value: float | None = None) -> complex:
    """Single value of the observable (see :func:`observable_field`)."""
    return observable_field(domain, n, x, sigma_value, a)[z]


def _key(c: complex) -> tuple[int, int]:
    return int(round(c.real * _KEY_SCALE)), int(round(c.imag * _KEY_SCALE))


@lru_cache(maxsize=16)
def _mid_lookup(domain: LatticeGraph) -> dict:
    return {_key(complex(m)): i for i, m in enumerate(domain.mid_edges)}


def contour_integral(field: ObservableField, contour) -> complex:
    """``sum_i (c_i - c_{i-1}) F((c_{i-1} + c_i) / 2)`` over a closed polygon ``c_0..c_k = c_0``."""
    c = np.asarray(contour, dtype=np.complex128)
    if len(c) < 2 or abs(c[0] - c[-1]) > 1e-9:
        raise ValueError("contour must be closed (last point equal to the first)")
    lookup = _mid_lookup(field.domain)
    total = 0j
    for c0, c1 in zip(c[:-1], c[1:]):
        m = lookup.get(_key(0.5 * (c0 + c1)))
        if m is None:
            raise ValueError(f"contour segment midpoint {0.5 * (c0 + c1)} is not a mid-edge of the domain")
        total += (c1 - c0) * field.values[m]
    return complex(total)


def elementary_contours(domain: LatticeGraph) -> list[tuple[int, np.ndarray]]:
    """Counterclockwise triangle of face centres around each vertex, as ``(vertex, contour)``.

    Around a vertex with unit edge directions ``d1, d2, d3`` the surrounding
    face centres are ``v + d_i + d_j``; the triangle's sides cross the three
    mid-edges at the vertex.
    """
    _require_hex(domain)
    z = domain.complex_positions
    mids = domain.mid_edges
    out = []
    for v, items in enumerate(_incidence(domain)):
        d = [2.0 * (mids[m] - z[v]) for m, _ in items]
        if len(d) != 3:
            raise ValueError("every domain vertex needs three mid-edges")
        centres = [z[v] + d[i] + d[(i + 1) % 3] for i in range(3)]
        centres.sort(key=lambda c: math.atan2((c - z[v]).imag, (c - z[v]).real))
        out.append((v, np.array(centres + [centres[0]])))
    return out


def combine_contours(contours) -> np.ndarray:
    """Boundary of a union of counterclockwise contours, with shared sides cancelled.

    Raises ``ValueError`` unless the remaining sides form one closed polygon.
    """
    segs: dict[tuple, tuple[complex, complex]] = {}
    for c in contours:
        c = np.asarray(c, dtype=np.complex128)
        for c0, c1 in zip(c[:-1], c[1:]):
            rev = (_key(c1), _key(c0))
            if rev in segs:
                del segs[rev]
            else:
                segs[(_key(c0), _key(c1))] = (complex(c0), complex(c1))
    if not segs:
        raise ValueError("contours cancel completely")
    nxt = {}
    for (k0, _), (c0, c1) in segs.items():
        if k0 in nxt:
            raise ValueError("combined boundary is not a simple polygon")
        nxt[k0] = (c0, c1)
    start = next(iter(nxt))
    pts = [nxt[start][0]]
    k = start
    for _ in range(len(nxt)):
        c0, c1 = nxt[k]
        pts.append(c1)
        k = _key(c1)
        if k == start:
            break
    if k != start or len(pts) - 1 != len(nxt):
        raise ValueError("combined boundary is not a single closed polygon")
    return np.array(pts)


def elementary_integrals(field: ObservableField) -> np.ndarray:
    """Integral around every elementary contour, in vertex order."""
    return np.array([contour_integral(field, c) for _, c in elementary_contours(field.domain)])


@njit(cache=True)
def _saw_counts(max_length):
    # brick-wall embedding of the hexagonal lattice: horizontal neighbours
    # always, the vertical one above or below depending on (x + y) parity
    size = 2 * max_length + 3
    visited = np.zeros((size, size), dtype=np.bool_)
    counts = np.zeros(max_length + 1, dtype=np.int64)
    px = np.empty(max_length + 1, dtype=np.int64)
    py = np.empty(max_length + 1, dtype=np.int64)
    nxt = np.zeros(max_length + 1, dtype=np.int64)
    px[0] = max_length + 1
    py[0] = max_length + 1
    visited[px[0], py[0]] = True
    counts[0] = 1
    depth = 0
    while depth >= 0:
        if depth == max_length or nxt[depth] == 3:
            visited[px[depth], py[depth]] = False
            depth -= 1
            continue
        x = px[depth]
        y = py[depth]
        d = nxt[depth]
        nxt[depth] += 1
        if d == 0:
            nx, ny = x - 1, y
        elif d == 1:
            nx, ny = x + 1, y
        elif (x + y) % 2 == 0:
            nx, ny = x, y + 1
        else:
            nx, ny = x, y - 1
        if visited[nx, ny]:
            continue
        depth += 1
        px[depth] = nx
        py[depth] = ny
        nxt[depth] = 0
        visited[nx, ny] = True
        counts[depth] += 1
    return counts


def count_saw(length: int) -> int:
    """Number of self-avoiding walks with ``length`` steps from a fixed hexagonal-lattice vertex."""
    return int(saw_counts(length)[length])


def saw_counts(max_length: int) -> np.ndarray:
    """``c_0 .. c_max_length`` by depth-first backtracking (``c_0 = 1``)."""
    if max_length < 0:
        raise ValueError("length must be >= 0")
    return _saw_counts(int(max_length))


@dataclass(frozen=True)
class ConnectiveEstimate:
    """Estimates of the connective constant from walk counts up to ``length``.

    ``degenerate`` flags lengths below 4, where both estimates are dominated by
    lattice-scale effects.
    """

    length: int
    count: int
    ratio: float
    root: float
    degenerate: bool


def connective_estimate(length: int, counts: np.ndarray | None = None) -> ConnectiveEstimate:
    """Ratio ``c_L / c_(L-1)`` and root ``c_L^(1/L)`` estimates of the connective constant."""
    if length < 1:
        raise ValueError("length must be >= 1")
    c = saw_counts(length) if counts is None else np.asarray(counts)
    return ConnectiveEstimate(
        length=length,
        count=int(c[length]),
        ratio=float(c[length] / c[length - 1]),
        root=float(c[length] ** (1.0 / length)),
        degenerate=length < 4,
    )
