import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.lattice import build_hex_domain, build_rectangle
from percolab.loops import (
    FaceConfig,
    LoopConfig,
    LoopParams,
    is_even,
    loop_count,
    loop_exact,
    loop_mcmc_step,
    loop_sample,
    loop_weight,
    low_temp_collapse,
    low_temp_expand,
    x_c,
)
from percolab.percolation import iter_configs

R1 = build_hex_domain(1)
R2 = build_hex_domain(2)
R3 = build_hex_domain(3)


def hexagon(g, f):
    bits = np.zeros(g.edge_count, dtype=np.uint8)
    bits[g.faces.face_edges[f]] = 1
    return LoopConfig(g, bits)


def test_even_and_loop_count_examples():
    empty = LoopConfig(R2, np.zeros(R2.edge_count))
    assert is_even(R2, empty) and loop_count(R2, empty) == 0
    one = hexagon(R2, 0)
    assert is_even(R2, one) and loop_count(R2, one) == 1
    single = np.zeros(R2.edge_count)
    single[0] = 1
    assert not is_even(R2, LoopConfig(R2, single))


def test_loop_weight_examples():
    p = LoopParams(0.6, 1.3)
    assert loop_weight(R1, LoopConfig(R1, np.zeros(6)), p) == 0.0
    assert math.exp(loop_weight(R1, hexagon(R1, 0), p)) == pytest.approx(0.6**6 * 1.3)
    bad = np.zeros(6)
    bad[2] = 1
    assert loop_weight(R1, LoopConfig(R1, bad), p) == -math.inf


def test_two_adjacent_hexagons_are_one_loop():
    # the symmetric difference of two neighbouring hexagons is a single 10-edge loop
    a, b = hexagon(R2, 0).bits, hexagon(R2, 1).bits
    eta = LoopConfig(R2, a ^ b)
    assert eta.bits.sum() == 10
    assert loop_count(R2, eta) == 1


def test_expand_examples():
    F = R2.faces.count
    assert low_temp_expand(FaceConfig(R2, np.ones(F))).bits.sum() == 0
    for f in range(F):
        s = np.ones(F)
        s[f] = 0
        assert np.array_equal(low_temp_expand(FaceConfig(R2, s)).bits, hexagon(R2, f).bits)


@pytest.mark.parametrize("g", [R1, R2])
def test_bijection_exhaustive(g):
    F = g.faces.count
    faces = np.concatenate(list(iter_configs(F)))
    seen = set()
    for row in faces:
        eta = low_temp_expand(FaceConfig(g, row))
        assert is_even(g, eta)
        assert np.array_equal(low_temp_collapse(eta).bits, row)
        seen.add(eta.bits.tobytes())
    assert len(seen) == 2**F


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=19, max_size=19))
def test_bijection_random_radius3(bits):
    fc = FaceConfig(R3, bits)
    assert np.array_equal(low_temp_collapse(low_temp_expand(fc)).bits, fc.bits)


def test_collapse_rejects_odd():
    bits = np.zeros(R2.edge_count)
    bits[3] = 1
    with pytest.raises(ValueError):
        low_temp_collapse(LoopConfig(R2, bits))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=7, max_size=7), st.integers(0, 6), st.floats(0.1, 3), st.floats(0, 2))
def test_plaquette_preserves_evenness(faces, f, x, n):
    eta = low_temp_expand(FaceConfig(R2, faces))
    new = loop_mcmc_step(R2, eta, LoopParams(x, n), f, np.random.default_rng(f))
    assert is_even(R2, new)


def test_first_move_acceptance():
    params = LoopParams(0.7, 1.5)
    acc = params.x**6 * params.n
    rng = np.random.default_rng(4)
    empty = LoopConfig(R1, np.zeros(6))
    moves = [loop_mcmc_step(R1, empty, params, 0, rng).bits.sum() > 0 for _ in range(6000)]
    se = math.sqrt(acc * (1 - acc) / 6000)
    assert abs(np.mean(moves) - acc) < 4 * se


def test_radius1_exact_law():
    for x, n in [(x_c(1.0), 1.0), (0.8, 1.5)]:
        ex = loop_exact(R1, LoopParams(x, n))
        w = x**6 * n
        assert ex.mean_loops == pytest.approx(w / (1 + w), abs=1e-15)


def test_small_x_limit():
    ex = loop_exact(R2, LoopParams(1e-6, 1.0))
    empty = np.flatnonzero(ex.sizes == 0)
    assert ex.probabilities[empty].sum() == pytest.approx(1.0, abs=1e-30)


def test_n_zero_forbids_loops():
    ex = loop_exact(R2, LoopParams(0.9, 0.0))
    assert ex.mean_loops == 0.0 and ex.mean_size == 0.0


def test_ising_reduction():
    # n = 1: weight x^|eta| with x = exp(-2 beta) is the low-temperature Ising weight
    beta = 0.4
    x = math.exp(-2 * beta)
    ex = loop_exact(R2, LoopParams(x, 1.0))
    ef = R2.faces.edge_faces
    faces = np.concatenate(list(iter_configs(R2.faces.count)))
    w = []
    for row in faces:
        spin = np.append(2 * row.astype(int) - 1, 1)  # exterior face is +
        sa, sb = spin[ef[:, 0]], spin[np.where(ef[:, 1] < 0, -1, ef[:, 1])]
        w.append(math.exp(beta * float((sa * sb).sum())))
    w = np.array(w) / np.sum(w)
    assert np.allclose(ex.probabilities, w, atol=1e-15)


@pytest.mark.parametrize("x,n", [(x_c(1.0), 1.0), (0.8, 1.5), (0.6, 0.0)])
def test_chain_matches_oracle(x, n):
    params = LoopParams(x, n)
    ex = loop_exact(R2, params)
    s = loop_sample(R2, params, 30000, 500, seed=7)
    mean, err = s.edge_marginals()
    assert np.all(np.abs(mean - ex.edge_marginals) <= 4 * err + 1e-12)
    assert s.mean_loops().within(ex.mean_loops)
    # the kernel's running loop count agrees with a fresh recount
    assert list(s.loops[:50]) == [loop_count(R2, LoopConfig(R2, e)) for e in s.etas[:50]]


def test_x_c_values():
    assert x_c(1.0) == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert x_c(2.0) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert x_c(0.0) == pytest.approx(1 / math.sqrt(2 + math.sqrt(2)), abs=1e-15)
    with pytest.raises(ValueError):
        x_c(2.5)


def test_requires_hex_domain():
    with pytest.raises(ValueError):
        LoopConfig(build_rectangle(1, 1), np.zeros(4))
    with pytest.raises(ValueError):
        LoopParams(0.0, 1.0)
