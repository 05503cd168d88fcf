import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.fk import (
    FKParams,
    fk_distribution,
    fk_dual_params,
    fk_exact,
    fk_heatbath_step,
    fk_sample,
    fk_weight,
    open_probabilities,
    self_dual_point,
)
from percolab.lattice import build_box, build_cycle, build_rectangle
from percolab.percolation import BondConfig, bernoulli_weight, clusters, crossing_function, enumerate_expectation, iter_configs


def test_q1_weight_is_bernoulli():
    g = build_rectangle(2, 1)
    params = FKParams(0.3, 1.0)
    w = bernoulli_weight(0.3)
    for bits in iter_configs(g.edge_count):
        for row in bits:
            assert fk_weight(g, BondConfig(g, row), params).weight == pytest.approx(w(row[None])[0], rel=1e-12)


def test_single_edge_open_probability():
    g = build_box(1, 1)  # path with two edges; look at one of them
    ex = fk_exact(g, FKParams(0.5, 2.0))
    # open edge merges two clusters: weight ratio 1/2 against closed
    assert ex.edge_marginals[0] == pytest.approx(1 / 3, abs=1e-15)


def test_all_open_weight():
    g = build_rectangle(2, 2)
    r = fk_weight(g, BondConfig(g, np.ones(g.edge_count)), FKParams(0.4, 3.0))
    assert r.clusters == 1
    assert r.weight == pytest.approx(0.4**12 * 3.0)


def test_wired_boundary_counts_boundary_as_one_cluster():
    g = build_box(2, 1)
    closed = BondConfig(g, np.zeros(g.edge_count))
    assert fk_weight(g, closed, FKParams(0.5, 2.0), boundary="wired").clusters == 2
    assert fk_weight(g, closed, FKParams(0.5, 2.0)).clusters == 9


def test_exact_matches_enumerate_expectation():
    g = build_cycle(4)
    params = FKParams(0.6, 2.5)
    ex = fk_exact(g, params, {"cross": crossing_function(build_rectangle(1, 1))})

    def w(c):
        k = np.array([clusters(g, BondConfig(g, r)).count for r in c])
        return bernoulli_weight(0.6)(c) * 2.5**k

    ref = enumerate_expectation(g, w, lambda c: c.astype(float))
    assert np.allclose(ex.edge_marginals, ref.value, atol=1e-14)
    assert ex.Z == pytest.approx(ref.Z, rel=1e-12)


def test_distribution_normalized():
    d = fk_distribution(build_rectangle(2, 1), FKParams(0.5, 3.0))
    assert d.sum() == pytest.approx(1.0) and np.all(d > 0)


@pytest.mark.parametrize("q", [1.0, 2.0, 4.0])
def test_marginals_monotone_in_p(q):
    g = build_rectangle(2, 1)
    m = [fk_exact(g, FKParams(p, q)).edge_marginals for p in np.linspace(0.05, 0.95, 10)]
    assert np.all(np.diff(np.array(m), axis=0) >= -1e-15)


def test_heatbath_q1_ignores_connectivity():
    p_conn, p_disc = open_probabilities(FKParams(0.37, 1.0))
    assert p_conn == p_disc == 0.37


def test_heatbath_disconnected_rule():
    _, p_disc = open_probabilities(FKParams(0.5, 2.0))
    assert p_disc == pytest.approx(1 / 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**7 - 1), st.integers(0, 6), st.floats(0.05, 0.95), st.floats(0.2, 5))
def test_detailed_balance(mask, e, p, q):
    g = build_rectangle(2, 1)
    bits = [(mask >> i) & 1 for i in range(7)]
    params = FKParams(p, q)
    on = BondConfig(g, bits).with_edge(e, 1)
    off = on.with_edge(e, 0)
    w_on = fk_weight(g, on, params).weight
    w_off = fk_weight(g, off, params).weight
    # the heat-bath open probability is the conditional law of the edge
    p_conn, p_disc = open_probabilities(params)
    linked = clusters(g, off).count == clusters(g, on).count
    p_open = p_conn if linked else p_disc
    assert w_off * p_open == pytest.approx(w_on * (1 - p_open), rel=1e-12)


def test_heatbath_step_frequency():
    g = build_rectangle(1, 1)
    closed = BondConfig(g, np.zeros(4))
    rng = np.random.default_rng(0)
    hits = [fk_heatbath_step(g, closed, FKParams(0.5, 2.0), 0, rng).bits[0] for _ in range(6000)]
    se = math.sqrt(2 / 9 / 6000)
    assert abs(np.mean(hits) - 1 / 3) < 4 * se


def test_heatbath_step_leaves_other_edges():
    g = build_rectangle(2, 2)
    cfg = BondConfig(g, np.random.default_rng(1).integers(0, 2, g.edge_count))
    new = fk_heatbath_step(g, cfg, FKParams(0.5, 2.0), 5, 3)
    assert np.array_equal(np.delete(new.bits, 5), np.delete(cfg.bits, 5))


@pytest.mark.parametrize("boundary", ["free", "wired"])
def test_chain_matches_oracle(boundary):
    g = build_box(2, 1)
    params = FKParams(0.45, 2.0)
    ex = fk_exact(g, params, boundary=boundary)
    s = fk_sample(g, params, 40000, 500, seed=3, boundary=boundary)
    mean, err = s.edge_marginals()
    assert np.all(np.abs(mean - ex.edge_marginals) <= 4 * err)


def test_sample_seed_reproducible():
    g = build_rectangle(3, 3)
    a = fk_sample(g, FKParams(0.5, 2.0), 200, 10, seed=5)
    b = fk_sample(g, FKParams(0.5, 2.0), 200, 10, seed=5)
    assert a.configs.tobytes() == b.configs.tobytes()


def test_dual_examples():
    assert fk_dual_params(FKParams(0.3, 1.0)).p == pytest.approx(0.7, abs=1e-15)
    assert fk_dual_params(FKParams(0.5, 2.0)).p == pytest.approx(2 / 3, abs=1e-15)
    assert fk_dual_params(FKParams(0.0, 2.0)).p == 1.0
    assert fk_dual_params(FKParams(1.0, 2.0)).p == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.sampled_from([1.0, 2.0, 3.0, 4.0]))
def test_dual_involution(p, q):
    back = fk_dual_params(fk_dual_params(FKParams(p, q)))
    assert abs(back.p - p) <= 1e-15
    d = fk_dual_params(FKParams(p, q))
    assert d.q == q
    assert p * d.p / ((1 - p) * (1 - d.p)) == pytest.approx(q, rel=1e-12)


@pytest.mark.parametrize("q", [0.5, 1.0, 2.0, 3.0, 4.0, 10.0])
def test_self_dual_fixed_point(q):
    ps = self_dual_point(q)
    assert abs(fk_dual_params(FKParams(ps, q)).p - ps) <= 1e-15


def test_self_dual_values():
    assert self_dual_point(1.0) == 0.5
    assert abs(self_dual_point(2.0) - 0.5857864376) < 1e-10


def test_invalid_params():
    with pytest.raises(ValueError):
        FKParams(1.2, 2.0)
    with pytest.raises(ValueError):
        FKParams(0.5, 0.0)
    with pytest.raises(ValueError):
        self_dual_point(-1)
