import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.checks import check_parafermion
from percolab.lattice import build_hex_domain
from percolab.loops import x_c
from percolab.parafermion import (
    MU_HEX,
    ObservableField,
    combine_contours,
    connective_estimate,
    contour_integral,
    count_saw,
    elementary_contours,
    elementary_integrals,
    iter_walks,
    observable_field,
    parafermionic_F,
    saw_counts,
    sigma,
    turn_count,
    winding,
)
from percolab.percolation import EnumerationCapError

R1 = build_hex_domain(1)
R2 = build_hex_domain(2)


def brute_field(dom, n, x, s):
    """Independent enumeration: walks by DFS over the edge list, loops over all edge subsets."""
    z = dom.complex_positions
    E = dom.edge_count
    stub_outer = dom.stubs.outer_positions[:, 0] + 1j * dom.stubs.outer_positions[:, 1]
    mids = list(0.5 * (z[dom.edges[:, 0]] + z[dom.edges[:, 1]])) + list(0.5 * (z[dom.stubs.vertices] + stub_outer))
    # loops: every even edge subset with its vertex set and loop count
    loops = []
    for bits in itertools.product((0, 1), repeat=E):
        used = [e for e in range(E) if bits[e]]
        deg = np.zeros(dom.vertex_count, int)
        for e in used:
            deg[dom.edges[e]] += 1
        if np.any(deg % 2):
            continue
        verts = set(np.flatnonzero(deg).tolist())
        # each loop on a degree-3 graph is a cycle: loops = |E'| - |V'| + components... count by walking
        parent = list(range(dom.vertex_count))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        for e in used:
            a, b = find(dom.edges[e][0]), find(dom.edges[e][1])
            if a != b:
                parent[a] = b
        k = len({find(v) for v in verts})
        loops.append((verts, len(used), k))
    a = E
    v0 = int(dom.stubs.vertices[0])
    values = np.zeros(len(mids), complex)

    def weight_loops(visited):
        return sum(x**size * (n**k if k else 1.0) for verts, size, k in loops if not verts & visited)

    values[a] += weight_loops(set())
    adj = {v: [] for v in range(dom.vertex_count)}
    for e, (u, v) in enumerate(dom.edges):
        adj[u].append((e, v))
        adj[v].append((e, u))
    for sidx, v in enumerate(dom.stubs.vertices):
        adj[v].append((E + sidx, None))

    def rec(path, came, pts):
        v = path[-1]
        for mid, other in adj[v]:
            if mid == came:
                continue
            full = pts + [mids[mid]]
            wind = sum(cmath.phase((full[i + 2] - full[i + 1]) / (full[i + 1] - full[i])) for i in range(len(full) - 2))
            values[mid] += cmath.exp(-1j * s * wind) * x ** len(path) * weight_loops(set(path))
            if other is not None and other not in path:
                rec(path + [other], mid, pts + [z[other]])

    rec([v0], a, [mids[a], z[v0]])
    return values


@pytest.mark.parametrize("n,x,s", [(1.0, x_c(1.0), 0.5), (1.5, 0.7, 0.3), (0.0, 0.9, 0.625), (2.0, 0.4, 1.1)])
def test_field_matches_brute_force_radius1(n, x, s):
    f = observable_field(R1, n, x, s)
    assert np.allclose(f.values, brute_field(R1, n, x, s), atol=1e-14)


def test_trivial_walk_value_radius1():
    n, x = 1.3, 0.8
    a = R1.edge_count
    assert parafermionic_F(R1, a, a, n, x) == pytest.approx(1 + n * x**6, abs=1e-14)


def test_x_zero_only_trivial_walk():
    f = observable_field(R2, 1.0, 0.0)
    assert f[f.a] == 1.0
    assert np.all(np.delete(f.values, f.a) == 0)


def test_n_zero_is_saw_sum():
    f = observable_field(R2, 0.0, 0.6)
    direct = np.zeros(len(R2.mid_edges), complex)
    s = sigma(0.0)
    for w in iter_walks(R2):
        direct[w.end] += cmath.exp(-1j * s * w.turns * math.pi / 3) * 0.6**w.length
    assert np.allclose(f.values, direct, atol=1e-14)


def test_sigma_values():
    assert sigma(1.0) == pytest.approx(0.5, abs=1e-15)
    assert sigma(0.0) == pytest.approx(5 / 8, abs=1e-15)
    assert sigma(2.0) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValueError):
        sigma(3.0)


def test_turn_examples():
    left = [0, 1, 1 + cmath.exp(1j * math.pi / 3)]
    assert winding(left) == pytest.approx(math.pi / 3)
    hexagon = [cmath.exp(1j * math.pi / 3 * k) for k in range(8)]
    assert abs(winding(hexagon)) == pytest.approx(2 * math.pi)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=1, max_size=12))
def test_turns_antisymmetric_under_reversal(steps):
    d, pts = 1 + 0j, [0j, 1 + 0j]
    for t in steps:
        d *= cmath.exp(1j * math.pi / 3 * t)
        pts.append(pts[-1] + d)
    assert turn_count(pts) == sum(steps)
    assert turn_count(pts[::-1]) == -sum(steps)


def test_walks_are_self_avoiding_and_counted():
    walks = list(iter_walks(R2))
    assert len(walks) == 3075
    assert all(len(set(w.vertices)) == len(w.vertices) for w in walks)


@pytest.mark.parametrize("n", [0.0, 0.5, 1.0, 1.5, 2.0])
def test_vanishing_at_criticality(n):
    vals = elementary_integrals(observable_field(R2, n, x_c(n)))
    assert np.abs(vals).max() < 1e-10


@pytest.mark.parametrize("factor", [0.85, 1.15])
def test_nonvanishing_off_criticality(factor):
    vals = elementary_integrals(observable_field(R2, 1.0, x_c(1.0) * factor))
    assert np.abs(vals).max() > 1e-4


def test_corrupted_sigma_fails_check():
    ok, metrics = check_parafermion(0, sigma_fn=lambda n: 0.6 if n == 1.0 else sigma(n))
    assert not ok
    row = next(r for r in metrics["rows"] if r["n"] == 1.0)
    assert row["max_at_critical"] > 1e-4


def test_constant_field_integrates_to_zero():
    const = ObservableField(R2, np.full(len(R2.mid_edges), 2.5 - 1j), 1.0, 0.5, 0.5, R2.edge_count)
    for _, c in elementary_contours(R2):
        assert abs(contour_integral(const, c)) < 1e-14


def test_linearity_over_elementary_contours():
    field = observable_field(R2, 1.2, 0.65)
    contours = dict(elementary_contours(R2))
    # two vertices joined by an edge: their triangles share one side
    u, v = map(int, R2.edges[0])
    combined = combine_contours([contours[u], contours[v]])
    lhs = contour_integral(field, combined)
    rhs = contour_integral(field, contours[u]) + contour_integral(field, contours[v])
    assert abs(lhs - rhs) < 1e-12


def test_contour_errors():
    field = observable_field(R1, 1.0, 0.5)
    with pytest.raises(ValueError):
        contour_integral(field, [0, 1, 2])
    with pytest.raises(ValueError):
        contour_integral(field, [10, 11, 10j, 10])


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        observable_field(build_hex_domain(3), 1.0, 0.5)


def test_saw_counts():
    assert (count_saw(1), count_saw(2), count_saw(6)) == (3, 6, 90)
    c = saw_counts(24)
    assert abs(c[24] / c[23] - MU_HEX) / MU_HEX < 0.02


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12))
def test_saw_submultiplicative(L, M):
    c = saw_counts(24)
    assert c[L + M] <= c[L] * c[M]


def test_connective_estimate_flags():
    assert connective_estimate(3).degenerate
    e = connective_estimate(12)
    assert not e.degenerate
    assert e.ratio == pytest.approx(count_saw(12) / count_saw(11))
    with pytest.raises(ValueError):
        connective_estimate(0)
