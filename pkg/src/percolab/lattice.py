"""Finite lattice domains with a geometric embedding, boundary sets and planar duals.

Every other module consumes :class:`LatticeGraph`. Graphs are immutable once
built; ids are dense integers assigned deterministically from coordinates, so
the same constructor arguments always give the same edge order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

SQUARE = "square"
HYPERCUBIC = "hypercubic"
TRIANGULAR = "triangular"
HEXAGONAL = "hexagonal"
CYCLE = "cycle"
KINDS = (SQUARE, HYPERCUBIC, TRIANGULAR, HEXAGONAL, CYCLE)

# ids are handed to int32-indexed consumers (CSV, JSON, kernels)
INDEX_LIMIT = 2**31 - 1

_SQRT3 = math.sqrt(3.0)
# hexagon corners in integer key units (x in sqrt(3)/2, y in 1/2), ccw from 30 degrees
_HEX_CORNERS = ((1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def csr_from_edges(n_vertices: int, edges: np.ndarray):
    """Compressed adjacency ``(indptr, neighbors, edge_ids)`` of an edge table."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    u, v = edges[:, 0], edges[:, 1]
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    eid = np.concatenate([np.arange(len(u)), np.arange(len(u))])
    order = np.lexsort((dst, src))
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64), eid[order].astype(np.int64)


def _check_size(vertex_count: int, edge_count: int) -> None:
    if vertex_count > INDEX_LIMIT or edge_count > INDEX_LIMIT:
        raise OverflowError(
            f"lattice too large for the index type: {vertex_count} vertices, "
            f"{edge_count} edges (limit {INDEX_LIMIT})"
        )


@dataclass(frozen=True, eq=False)
class FaceStructure:
    """Bounded faces of a planar graph.

    ``face_edges[f]`` lists the edge ids around face ``f`` in counterclockwise
    order. ``edge_faces[e]`` holds the two faces bordering edge ``e``, with -1
    standing for the exterior face.
    """

    centers: np.ndarray
    face_edges: tuple[np.ndarray, ...]
    edge_faces: np.ndarray

    @property
    def count(self) -> int:
        return len(self.face_edges)


@dataclass(frozen=True, eq=False)
class HalfEdges:
    """Edges leaving a domain: an inner vertex and the outer endpoint's position."""

    vertices: np.ndarray
    outer_positions: np.ndarray


@dataclass(frozen=True, eq=False)
class LatticeGraph:
    """Immutable finite graph with an embedding and named boundary sets.

    Attributes
    ----------
    kind : str
        One of ``square``, ``hypercubic``, ``triangular``, ``hexagonal``, ``cycle``.
    dims : tuple of int
        Constructor arguments, e.g. ``(n, m)`` for a rectangle.
    positions : ndarray, shape (V, dim)
        Vertex coordinates.
    edges : ndarray, shape (E, 2)
        Endpoints with ``edges[e, 0] < edges[e, 1]``.
    boundaries : mapping of str to ndarray
        Sorted vertex ids of each named boundary set.
    origin : int or None
        Marked origin vertex.
    faces : FaceStructure or None
        Bounded faces, for planar domains.
    stubs : HalfEdges or None
        Half-edges crossing the domain boundary (hexagonal domains).
    """

    kind: str
    dims: tuple[int, ...]
    positions: np.ndarray
    edges: np.ndarray
    boundaries: Mapping[str, np.ndarray] = field(default_factory=dict)
    origin: int | None = None
    faces: FaceStructure | None = None
    stubs: HalfEdges | None = None

    def __repr__(self) -> str:
        return (
            f"LatticeGraph(kind={self.kind!r}, dims={self.dims}, "
            f"vertices={self.vertex_count}, edges={self.edge_count})"
        )

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Adjacency as ``(indptr, neighbors, edge_ids)``, sorted by neighbor."""
        return tuple(_frozen(a) for a in csr_from_edges(self.vertex_count, self.edges))

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.diff(self.csr[0]))

    def boundary(self, name: str) -> np.ndarray:
        try:
            return self.boundaries[name]
        except KeyError:
            raise KeyError(f"{self!r} has no boundary set {name!r}") from None

    def boundary_mask(self, name: str) -> np.ndarray:
        mask = np.zeros(self.vertex_count, dtype=np.bool_)
        mask[self.boundary(name)] = True
        return mask

    @cached_property
    def complex_positions(self) -> np.ndarray:
        if self.positions.shape[1] != 2:
            raise ValueError("complex embedding needs a planar graph")
        return _frozen(self.positions[:, 0] + 1j * self.positions[:, 1])

    @cached_property
    def mid_edges(self) -> np.ndarray:
        """Complex midpoints of all edges followed by those of the stubs."""
        z = self.complex_positions
        mids = 0.5 * (z[self.edges[:, 0]] + z[self.edges[:, 1]])
        if self.stubs is not None:
            outer = self.stubs.outer_positions[:, 0] + 1j * self.stubs.outer_positions[:, 1]
            mids = np.concatenate([mids, 0.5 * (z[self.stubs.vertices] + outer)])
        return _frozen(mids)

    def describe(self) -> dict:
        """JSON-ready description used in experiment manifests."""
        return {
            "kind": self.kind,
            "dims": list(self.dims),
            "vertex_count": self.vertex_count,
            "edge_count": self.edge_count,
            "boundaries": {k: int(len(v)) for k, v in sorted(self.boundaries.items())},
        }


def from_description(desc: Mapping) -> LatticeGraph:
    """Rebuild a graph from :meth:`LatticeGraph.describe` output."""
    kind, dims = desc["kind"], tuple(desc["dims"])
    if kind == SQUARE:
        graph = build_rectangle(*dims)
    elif kind == HYPERCUBIC:
        graph = build_box(*dims)
    elif kind == HEXAGONAL:
        graph = build_hex_domain(*dims)
    elif kind == CYCLE:
        graph = build_cycle(*dims)
    else:
        raise ValueError(f"cannot rebuild a {kind!r} graph from its description")
    for key in ("vertex_count", "edge_count"):
        if key in desc and desc[key] != graph.describe()[key]:
            raise ValueError(f"description mismatch on {key}")
    return graph


def _grid_edges(coords: np.ndarray, index: dict) -> np.ndarray:
    """Unit-step edges in lexicographic order of (lower endpoint, direction)."""
    d = coords.shape[1]
    out = []
    for vid, c in enumerate(map(tuple, coords)):
        for axis in range(d):
            nb = c[:axis] + (c[axis] + 1,) + c[axis + 1 :]
            j = index.get(nb)
            if j is not None:
                out.append((vid, j))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def build_rectangle(n: int, m: int) -> LatticeGraph:
    """Square-lattice rectangle ``[0,n] x [0,m]`` with left/right/top/bottom sides.

    Vertex ``(x, y)`` gets id ``x * (m + 1) + y``.
    """
    if n < 1 or m < 1:
        raise ValueError("rectangle sides must be >= 1")
    V = (n + 1) * (m + 1)
    E = n * (m + 1) + m * (n + 1)
    _check_size(V, E)
    coords = np.array(list(itertools.product(range(n + 1), range(m + 1))), dtype=np.int64)
    index = {tuple(c): i for i, c in enumerate(coords)}
    edges = _grid_edges(coords, index)
    x, y = coords[:, 0], coords[:, 1]
    boundaries = {
        "left": np.flatnonzero(x == 0),
        "right": np.flatnonzero(x == n),
        "bottom": np.flatnonzero(y == 0),
        "top": np.flatnonzero(y == m),
    }
    faces = _square_faces(n, m, index, edges)
    return LatticeGraph(
        kind=SQUARE,
        dims=(n, m),
        positions=_frozen(coords.astype(np.float64)),
        edges=_frozen(edges),
        boundaries={k: _frozen(v) for k, v in boundaries.items()},
        origin=0,
        faces=faces,
    )


def _square_faces(n: int, m: int, index: dict, edges: np.ndarray) -> FaceStructure:
    edge_index = {(int(a), int(b)): e for e, (a, b) in enumerate(edges)}

    def eid(p, q):
        a, b = index[p], index[q]
        return edge_index[(min(a, b), max(a, b))]

    centers, face_edges = [], []
    edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
    for i in range(n):
        for j in range(m):
            f = len(face_edges)
            ring = np.array(
                [
                    eid((i, j), (i + 1, j)),
                    eid((i + 1, j), (i + 1, j + 1)),
                    eid((i, j + 1), (i + 1, j + 1)),
                    eid((i, j), (i, j + 1)),
                ],
                dtype=np.int64,
            )
            for e in ring:
                slot = 0 if edge_faces[e, 0] < 0 else 1
                edge_faces[e, slot] = f
            centers.append((i + 0.5, j + 0.5))
            face_edges.append(_frozen(ring))
    return FaceStructure(
        centers=_frozen(np.array(centers, dtype=np.float64)),
        face_edges=tuple(face_edges),
        edge_faces=_frozen(edge_faces),
    )


def build_box(d: int, n: int) -> LatticeGraph:
    """Hypercubic box ``[-n, n]^d`` with its inner vertex boundary and origin."""
    if d < 1 or n < 1:
        raise ValueError("box needs d >= 1 and n >= 1")
    side = 2 * n + 1
    V = side**d
    E = d * (side - 1) * side ** (d - 1)
    _check_size(V, E)
    coords = np.array(list(itertools.product(range(-n, n + 1), repeat=d)), dtype=np.int64)
    index = {tuple(c): i for i, c in enumerate(coords)}
    edges = _grid_edges(coords, index)
    radius = np.abs(coords).max(axis=1)
    return LatticeGraph(
        kind=HYPERCUBIC,
        dims=(d, n),
        positions=_frozen(coords.astype(np.float64)),
        edges=_frozen(edges),
        boundaries={"boundary": _frozen(np.flatnonzero(radius == n))},
        origin=index[(0,) * d],
    )


def build_cycle(k: int) -> LatticeGraph:
    """Cycle graph on ``k`` vertices placed on the unit circle."""
    if k < 3:
        raise ValueError("a simple cycle needs k >= 3")
    _check_size(k, k)
    t = 2.0 * math.pi * np.arange(k) / k
    edges = np.array(sorted((min(i, (i + 1) % k), max(i, (i + 1) % k)) for i in range(k)), dtype=np.int64)
    return LatticeGraph(
        kind=CYCLE,
        dims=(k,),
        positions=_frozen(np.column_stack([np.cos(t), np.sin(t)])),
        edges=_frozen(edges),
        origin=0,
    )


def box_radius(graph: LatticeGraph) -> np.ndarray:
    """Sup-norm distance of every vertex of a box to the origin."""
    return np.abs(graph.positions - graph.positions[graph.origin]).max(axis=1).astype(np.int64)


def _hex_key_to_xy(keys: np.ndarray) -> np.ndarray:
    return np.column_stack([keys[:, 0] * (_SQRT3 / 2.0), keys[:, 1] * 0.5])


def build_hex_domain(radius: int) -> LatticeGraph:
    """Hexagonal-lattice domain made of the faces within ``radius - 1`` steps of a central face.

    Edges have unit length and the central hexagon is centred at the origin.
    Vertices of degree 2 carry a stub (the edge leaving the domain); the
    boundary polygon through the next ring of face centres crosses exactly
    these stubs.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    r = radius - 1
    F = 1 + 3 * r * (r + 1)
    _check_size(6 * F, 6 * F)
    axial = [
        (a, b)
        for a in range(-r, r + 1)
        for b in range(-r, r + 1)
        if (abs(a) + abs(b) + abs(a + b)) // 2 <= r
    ]
    centers = sorted((2 * a + b, 3 * b) for a, b in axial)
    corner_keys = sorted({(cx + dx, cy + dy) for cx, cy in centers for dx, dy in _HEX_CORNERS})
    vindex = {k: i for i, k in enumerate(corner_keys)}

    rings = []
    pairs = set()
    for cx, cy in centers:
        ring = [vindex[(cx + dx, cy + dy)] for dx, dy in _HEX_CORNERS]
        rings.append(ring)
        for k in range(6):
            a, b = ring[k], ring[(k + 1) % 6]
            pairs.add((min(a, b), max(a, b)))
    edges = np.array(sorted(pairs), dtype=np.int64)
    eindex = {(int(a), int(b)): e for e, (a, b) in enumerate(edges)}

    face_edges = []
    edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
    for f, ring in enumerate(rings):
        ids = []
        for k in range(6):
            a, b = ring[k], ring[(k + 1) % 6]
            e = eindex[(min(a, b), max(a, b))]
            ids.append(e)
            slot = 0 if edge_faces[e, 0] < 0 else 1
            edge_faces[e, slot] = f
        face_edges.append(_frozen(np.array(ids, dtype=np.int64)))

    keys = np.array(corner_keys, dtype=np.int64)
    nbrs: dict[int, list[int]] = {i: [] for i in range(len(keys))}
    for a, b in edges:
        nbrs[int(a)].append(int(b))
        nbrs[int(b)].append(int(a))
    stub_vertices, stub_outer = [], []
    for v in range(len(keys)):
        if len(nbrs[v]) == 2:
            d1 = keys[nbrs[v][0]] - keys[v]
            d2 = keys[nbrs[v][1]] - keys[v]
            stub_vertices.append(v)
            stub_outer.append(keys[v] - (d1 + d2))
    stub_outer_keys = np.array(stub_outer, dtype=np.int64).reshape(-1, 2)

    return LatticeGraph(
        kind=HEXAGONAL,
        dims=(radius,),
        positions=_frozen(_hex_key_to_xy(keys)),
        edges=_frozen(edges),
        boundaries={"boundary": _frozen(np.array(stub_vertices, dtype=np.int64))},
        origin=None,
        faces=FaceStructure(
            centers=_frozen(_hex_key_to_xy(np.array(centers, dtype=np.int64))),
            face_edges=tuple(face_edges),
            edge_faces=_frozen(edge_faces),
        ),
        stubs=HalfEdges(
            vertices=_frozen(np.array(stub_vertices, dtype=np.int64)),
            outer_positions=_frozen(_hex_key_to_xy(stub_outer_keys)),
        ),
    )


def boundary_polygon(domain: LatticeGraph) -> np.ndarray:
    """Closed dual polygon (complex face centres, counterclockwise) enclosing a hex domain.

    The last point repeats the first.
    """
    if domain.kind != HEXAGONAL:
        raise ValueError("boundary polygon is defined for hexagonal domains")
    (radius,) = domain.dims
    r = radius
    pts = []
    for a in range(-r, r + 1):
        for b in range(-r, r + 1):
            if (abs(a) + abs(b) + abs(a + b)) // 2 == r:
                pts.append(_SQRT3 * (a + b / 2.0) + 1j * 1.5 * b)
    pts.sort(key=lambda z: math.atan2(z.imag, z.real))
    pts.append(pts[0])
    return np.array(pts)


@dataclass(frozen=True, eq=False)
class DualMap:
    """Bijection between bulk primal edges and the edges of the dual graph.

    Bulk edges are those bordered by two bounded faces. Boundary primal edges
    border the exterior face, which is the single dual vertex ``exterior``;
    ``primal_to_dual`` holds -1 for them and ``boundary_face`` records the
    bounded face on their inner side.
    """

    primal: LatticeGraph
    dual: LatticeGraph
    primal_to_dual: np.ndarray
    dual_to_primal: np.ndarray
    exterior: int
    boundary_face: Mapping[int, int]

    def dual_edge(self, e: int) -> int:
        d = int(self.primal_to_dual[e])
        if d < 0:
            raise KeyError(f"edge {e} borders the exterior face and has no bulk dual")
        return d

    def primal_edge(self, d: int) -> int:
        return int(self.dual_to_primal[d])


def dual_of(graph: LatticeGraph) -> tuple[LatticeGraph, DualMap]:
    """Planar dual: one vertex per bounded face plus one exterior vertex (the last id).

    Rectangles dualize to a shifted square grid, hexagonal domains to a patch of
    the triangular lattice. The exterior vertex sits at NaN coordinates and has
    no edges; see :class:`DualMap`.
    """
    if graph.kind not in (SQUARE, HEXAGONAL) or graph.faces is None:
        raise ValueError(f"dual_of does not support {graph.kind!r} graphs")
    faces = graph.faces
    F = faces.count
    ef = faces.edge_faces
    bulk = np.flatnonzero((ef[:, 0] >= 0) & (ef[:, 1] >= 0))
    pairs = np.sort(ef[bulk], axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    dual_edges = pairs[order]
    dual_to_primal = bulk[order]
    primal_to_dual = np.full(graph.edge_count, -1, dtype=np.int64)
    primal_to_dual[dual_to_primal] = np.arange(len(dual_to_primal))
    positions = np.vstack([faces.centers, np.full((1, 2), np.nan)])
    if graph.kind == SQUARE:
        n, m = graph.dims
        kind, dims = SQUARE, (n - 1, m - 1)
    else:
        kind, dims = TRIANGULAR, graph.dims
    dual = LatticeGraph(
        kind=kind,
        dims=dims,
        positions=_frozen(positions),
        edges=_frozen(dual_edges.astype(np.int64)),
        boundaries={"exterior": _frozen(np.array([F], dtype=np.int64))},
        origin=None,
    )
    boundary_face = {
        int(e): int(max(ef[e])) for e in np.flatnonzero((ef[:, 0] < 0) | (ef[:, 1] < 0))
    }
    return dual, DualMap(
        primal=graph,
        dual=dual,
        primal_to_dual=_frozen(primal_to_dual),
        dual_to_primal=_frozen(dual_to_primal.astype(np.int64)),
        exterior=F,
        boundary_face=boundary_face,
    )
