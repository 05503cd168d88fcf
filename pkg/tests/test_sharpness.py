import math

import numpy as np
import pytest

from percolab.lattice import box_radius, build_box, build_rectangle
from percolab.percolation import BondConfig, crossing_function, one_arm_function
from percolab.sharpness import (
    LazyBondAccess,
    dynamical_run,
    dynamical_snapshots,
    edge_marginals_over_time,
    influence_exact,
    lag_autocovariance,
    mixing_ratio,
    osss_check,
    osss_explore,
    p_grid,
    revealment_scaling,
    s_curve,
)


def test_influence_single_edge():
    g = build_rectangle(1, 1)
    r = influence_exact(g, 0.3, lambda c: c[:, 2].astype(float))
    expect = np.zeros(4)
    expect[2] = 0.3 * 0.7
    assert np.allclose(r.covariances, expect, atol=1e-15)
    assert r.derivative == pytest.approx(1.0, abs=1e-12)


def test_influence_unit_square_crossing():
    g = build_rectangle(1, 1)
    r = influence_exact(g, 0.5, crossing_function(g))
    assert r.mean == pytest.approx(0.75)
    assert r.derivative == pytest.approx(1.0, abs=1e-12)
    assert abs(r.derivative - r.derivative_fd) < 1e-8


def test_influence_constant():
    g = build_rectangle(2, 1)
    r = influence_exact(g, 0.4, lambda c: np.ones(len(c)))
    assert np.allclose(r.covariances, 0, atol=1e-15)
    assert abs(r.derivative) < 1e-12
    assert r.variance == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_derivative_identity(p):
    g = build_rectangle(2, 2)
    r = influence_exact(g, p, crossing_function(g))
    assert abs(r.derivative - r.derivative_fd) < 1e-8
    assert r.bkkkl_sum > 0


def test_explore_all_open_decides_one():
    g = build_box(2, 3)
    for k in (1, 2, 3):
        rep = osss_explore(g, LazyBondAccess(np.ones(g.edge_count, np.uint8)), k=k)
        assert rep.decision == 1


def test_explore_all_closed_reveals_sphere_edges_only():
    g = build_box(2, 3)
    level = box_radius(g)
    for k in (1, 2, 3):
        access = LazyBondAccess(np.zeros(g.edge_count, np.uint8))
        rep = osss_explore(g, access, k=k)
        assert rep.decision == 0
        touching = {e for e, (a, b) in enumerate(g.edges) if level[a] == k or level[b] == k}
        assert access.revealed == touching
        assert all(c == 1 for c in access.counts.values())


def test_explore_is_lazy_and_correct():
    g = build_box(2, 3)
    rng = np.random.default_rng(3)
    f = one_arm_function(g)
    for _ in range(200):
        bits = (rng.random(g.edge_count) < 0.5).astype(np.uint8)
        access = LazyBondAccess(bits)
        rep = osss_explore(g, access, rng)
        assert rep.decision == int(f(bits[None])[0])
        assert set(np.flatnonzero(rep.revealed).tolist()) == access.revealed
        assert rep.queries == len(access.revealed)


def test_from_config():
    g = build_box(2, 1)
    cfg = BondConfig(g, np.ones(g.edge_count))
    assert osss_explore(g, LazyBondAccess.from_config(cfg), k=1).decision == 1


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_osss_deterministic(p):
    rep = osss_check(build_box(2, 2), p, 500, 1)
    assert rep.variance.mean == 0 and rep.rhs.mean == pytest.approx(0, abs=1e-15)


def test_osss_slack_lambda2():
    rep = osss_check(build_box(2, 2), 0.5, 5000, 2)
    assert rep.slack.mean >= -4 * rep.slack.stderr
    assert np.all((rep.revealments >= 0) & (rep.revealments <= 1))


def test_revealment_decreases_with_box_size():
    rows = revealment_scaling([2, 4, 8], 0.35, 1000, 5)
    rev = [r.max_revealment for r in rows]
    assert rev[0] > rev[1] > rev[2]
    # the largest revealment stays comparable to S_n / n
    assert all(r.ratio < 3 for r in rows)


def test_s_curve_monotone_and_centred():
    sc = s_curve(16, p_grid(0.3, 0.7), 4000, 9)
    assert np.all(np.diff(sc.H) >= 0)
    assert 0.46 < sc.p_half < 0.54
    assert sc.width > 0


def test_p_grid():
    g = p_grid(0.3, 0.7, 0.01)
    assert len(g) == 41 and g[0] == 0.3 and g[-1] == 0.7


def test_mixing_bernoulli_independent_regions():
    r = mixing_ratio("cross", "cross", 1, 2, 0.5, 20000, 3)
    assert r.ratio <= 4 * r.stderr
    assert not r.degenerate


def test_mixing_precondition():
    with pytest.raises(ValueError):
        mixing_ratio("cross", "cross", 2, 3, 0.5, 100, 1)
    with pytest.raises(ValueError):
        mixing_ratio("ring", "cross", 1, 2, 0.5, 100, 1)


def test_mixing_decreases_with_separation_fk():
    from percolab.fk import self_dual_point

    p = self_dual_point(2.0)
    near = mixing_ratio("cross", "cross", 2, 4, p, 200000, 11, q=2.0)
    far = mixing_ratio("cross", "cross", 2, 8, p, 200000, 11, q=2.0)
    assert far.ratio < near.ratio


def test_dynamical_run_consistent():
    g = build_box(2, 2)
    tr = dynamical_run(g, 0.4, 3.0, [0.0, 1.0, 3.0], 7)
    assert np.array_equal(tr.snapshots[0], tr.initial)
    for e in range(g.edge_count):
        times = tr.events_of(e)
        assert np.all(np.diff(times) >= 0)
        sel = tr.event_edges == e
        for j, t in enumerate(tr.query_times):
            before = tr.event_states[sel][times <= t]
            expected = before[-1] if len(before) else tr.initial[e]
            assert tr.snapshots[j, e] == expected


def test_dynamical_stationary_and_decorrelating():
    p = 0.3
    times = [0.0, 0.5, 1.0, 2.0]
    snaps = dynamical_snapshots(build_box(2, 3), p, times, 1500, 4)
    for m in edge_marginals_over_time(snaps):
        assert m.within(p)
    for j, t in enumerate(times[1:], start=1):
        assert lag_autocovariance(snaps, 0, j).within(p * (1 - p) * math.exp(-t))


def test_dynamical_invalid():
    g = build_box(2, 1)
    with pytest.raises(ValueError):
        dynamical_run(g, 0.5, 1.0, [2.0], 0)
    with pytest.raises(ValueError):
        dynamical_run(g, 0.5, 0.0, [0.0], 0)
