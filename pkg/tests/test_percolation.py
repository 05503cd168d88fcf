import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.lattice import build_box, build_cycle, build_rectangle
from percolab.percolation import (
    BondConfig,
    EnumerationCapError,
    SiteConfig,
    bernoulli_weight,
    clusters,
    crossing_function,
    crossing_indicator,
    crossing_prob,
    crossing_prob_exact,
    crossing_thresholds,
    decay_fit,
    enumerate_expectation,
    enumeration_cap,
    one_arm_prob,
    one_arm_prob_exact,
    one_arm_profile,
    sample_bernoulli,
    sample_site_bernoulli,
)


def bfs_labels(V, edges, open_edges):
    adj = [[] for _ in range(V)]
    for (u, v), o in zip(edges, open_edges):
        if o:
            adj[u].append(v)
            adj[v].append(u)
    lab = [-1] * V
    k = 0
    for s in range(V):
        if lab[s] >= 0:
            continue
        lab[s] = k
        q = deque([s])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if lab[y] < 0:
                    lab[y] = k
                    q.append(y)
        k += 1
    return np.array(lab), k


def test_sample_extremes():
    g = build_rectangle(3, 3)
    assert sample_bernoulli(g, 0.0, 1).open_count == 0
    assert sample_bernoulli(g, 1.0, 1).open_count == g.edge_count


def test_sample_edge_frequency():
    g = build_cycle(4)
    bits = np.stack([sample_bernoulli(g, 0.5, np.random.default_rng(i)).bits for i in range(10**4)])
    freq = bits.mean(axis=0)
    se = math.sqrt(0.25 / 10**4)
    assert np.all(np.abs(freq - 0.5) < 4 * se)


def test_cluster_examples():
    g = build_rectangle(2, 2)
    closed = BondConfig(g, np.zeros(g.edge_count))
    assert clusters(g, closed).count == 9
    assert clusters(g, BondConfig(g, np.ones(g.edge_count))).count == 1
    assert clusters(g, closed.with_edge(0, 1)).count == 8


def test_crossing_indicator_examples():
    g = build_rectangle(1, 1)
    # edges of the unit square: bottom (0,0)-(1,0), left (0,0)-(0,1)
    bottom = next(e for e, (u, v) in enumerate(g.edges) if {u, v} == {0, 2})
    left = next(e for e, (u, v) in enumerate(g.edges) if {u, v} == {0, 1})
    zero = BondConfig(g, np.zeros(4))
    assert crossing_indicator(g, zero.with_edge(bottom, 1)) == 1
    assert crossing_indicator(g, zero.with_edge(left, 1)) == 0


def test_site_crossing():
    g = build_rectangle(2, 1)
    full = SiteConfig(g, np.ones(g.vertex_count))
    assert crossing_indicator(g, full) == 1
    bits = np.ones(g.vertex_count)
    bits[[2, 3]] = 0  # the middle column
    assert crossing_indicator(g, SiteConfig(g, bits)) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.floats(0, 1), st.integers(0, 2**32))
def test_union_find_matches_bfs(n, m, p, seed):
    g = build_rectangle(n, m)
    cfg = sample_bernoulli(g, p, seed)
    stats = clusters(g, cfg)
    lab, k = bfs_labels(g.vertex_count, g.edges, cfg.bits)
    assert stats.count == k
    assert stats.sizes.sum() == g.vertex_count
    # same partition
    pairs = {(a, b) for a, b in zip(stats.labels, lab)}
    assert len(pairs) == k


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 23))
def test_opening_never_increases_cluster_count(seed, e):
    g = build_rectangle(3, 3)
    cfg = sample_bernoulli(g, 0.4, seed)
    assert clusters(g, cfg.with_edge(e, 1)).count <= clusters(g, cfg).count


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 1), st.floats(0, 1))
def test_monotone_coupling(seed, p1, p2):
    lo, hi = sorted((p1, p2))
    g = build_rectangle(4, 4)
    a = sample_bernoulli(g, lo, seed).bits
    b = sample_bernoulli(g, hi, seed).bits
    assert np.all(a <= b)


def test_crossing_monotone_in_p_on_shared_seed():
    vals = [crossing_prob(6, 6, p, 2000, 3).mean for p in (0.3, 0.4, 0.5, 0.6)]
    assert vals == sorted(vals)


def test_enumeration_examples():
    g = build_rectangle(1, 1)
    frac = enumerate_expectation(g, lambda c: np.ones(len(c)), lambda c: c.mean(axis=1))
    assert frac.value == pytest.approx(0.5, abs=1e-15)
    assert frac.Z == 16
    for p in (0.2, 0.5, 0.9):
        # crossing the unit square: top or bottom edge open
        r = enumerate_expectation(g, bernoulli_weight(p), crossing_function(g))
        assert r.value == pytest.approx(1 - (1 - p) ** 2, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2])
def test_self_dual_crossing_exact(n):
    assert abs(crossing_prob_exact(n + 1, n, 0.5) - 0.5) < 1e-12


def test_crossing_mc_matches_oracle():
    exact = crossing_prob_exact(2, 2, 0.45)
    est = crossing_prob(2, 2, 0.45, 20000, 9)
    assert est.within(exact)


def test_one_arm_mc_matches_oracle():
    exact = one_arm_prob_exact(2, 1, 0.4)
    assert exact == pytest.approx(1 - 0.6**4)
    assert one_arm_prob(2, 1, 0.4, 20000, 5).within(exact)
    # on the path [-3, 3] the origin reaches distance 3 through either side
    exact1d = one_arm_prob_exact(1, 3, 0.7)
    assert exact1d == pytest.approx(1 - (1 - 0.7**3) ** 2)
    assert one_arm_prob(1, 3, 0.7, 20000, 6).within(exact1d)


def test_one_arm_profile_nonincreasing():
    prof = one_arm_profile(2, 6, 0.5, 5000, 2)
    means = [e.mean for e in prof]
    assert means == sorted(means, reverse=True)


def test_crossing_thresholds_reproduce_indicator():
    thr = crossing_thresholds(4, 4, 200, 11)
    direct = crossing_prob(4, 4, 0.5, 200, 11)
    assert np.mean(thr < 0.5) == pytest.approx(direct.mean)


def test_cap_error():
    with enumeration_cap(4):
        with pytest.raises(EnumerationCapError):
            crossing_prob_exact(2, 1, 0.5)
    with pytest.raises(EnumerationCapError):
        crossing_prob_exact(4, 4, 0.5)


def test_decay_fit_exact_exponential():
    ns = np.arange(1, 9)
    fit = decay_fit(ns, np.exp(-0.7 * ns))
    assert fit.defined
    assert abs(fit.rate - 0.7) < 1e-6


def test_decay_fit_nonpositive_is_undefined():
    fit = decay_fit([1, 2, 3], [0.5, 0.0, 0.1])
    assert not fit.defined


def test_decay_fit_polynomial_flag():
    ns = np.array([8, 16, 24, 32])
    fit = decay_fit(ns, ns ** -0.25, np.full(4, 1e-3))
    assert fit.polynomial_preferred
    ns = np.arange(2, 10)
    assert not decay_fit(ns, np.exp(-0.5 * ns), np.full(8, 1e-4)).polynomial_preferred


def test_subcritical_decay_rate_positive():
    ns = [2, 4, 6, 8]
    prof = one_arm_profile(2, 8, 0.35, 40000, 4)
    th = [prof[n - 1] for n in ns]
    fit = decay_fit(ns, [e.mean for e in th], [e.stderr for e in th])
    assert fit.positive


def test_invalid_probability():
    g = build_box(2, 1)
    with pytest.raises(ValueError):
        sample_bernoulli(g, 1.5, 0)
    with pytest.raises(ValueError):
        sample_site_bernoulli(g, -0.1, 0)
    with pytest.raises(ValueError):
        BondConfig(g, np.zeros(3))


def test_critical_decay_prefers_power_law():
    ns = [8, 16, 24, 32]
    prof = one_arm_profile(2, 32, 0.5, 20000, 1)
    fit = decay_fit(ns, [prof[n - 1].mean for n in ns], [prof[n - 1].stderr for n in ns])
    assert fit.polynomial_preferred
