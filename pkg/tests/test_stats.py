import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percolab.stats import Estimate, batch_means, jackknife, map_replicas, replica_rng, worker_count


def _draw(seed, start, stop):
    return np.array([replica_rng(seed, i).random() for i in range(start, stop)])


def test_replica_streams_independent_of_chunking():
    a = map_replicas(_draw, 100, 7, chunk=7)
    b = map_replicas(_draw, 100, 7, chunk=64)
    assert a.tobytes() == b.tobytes()
    # extending the run leaves earlier replicas unchanged
    assert map_replicas(_draw, 150, 7)[:100].tobytes() == a.tobytes()


def test_parallel_matches_serial():
    a = map_replicas(_draw, 300, 3, workers=1, chunk=50)
    b = map_replicas(_draw, 300, 3, workers=2, chunk=50)
    assert a.tobytes() == b.tobytes()


def test_worker_env(monkeypatch):
    monkeypatch.setenv("PERCOLAB_WORKERS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=40), st.lists(st.floats(-10, 10), min_size=2, max_size=40))
def test_merge_equals_pooled(x, y):
    m = Estimate.from_samples(x).merge(Estimate.from_samples(y))
    pooled = Estimate.from_samples(x + y)
    assert m.mean == pytest.approx(pooled.mean, abs=1e-9)
    assert m.stderr == pytest.approx(pooled.stderr, abs=1e-9)
    assert m.replicas == pooled.replicas


def test_estimate_basics():
    e = Estimate.from_samples([0, 1, 1, 0])
    assert e.mean == 0.5 and e.stderr >= 0
    assert Estimate.exact(0.3).stderr == 0
    assert math.isinf(Estimate.from_samples([1.0]).stderr)
    assert e.within(0.5 + 3.9 * e.stderr)
    assert not e.within(0.5 + 4.1 * e.stderr)


def test_batch_means_iid():
    x = np.random.default_rng(0).random(32000)
    mean, err = batch_means(x)
    assert err == pytest.approx(math.sqrt(1 / 12 / 32000), rel=0.35)


def test_jackknife_of_mean_is_standard_error():
    x = np.random.default_rng(1).normal(size=6400)
    est, err = jackknife(lambda d: d.mean(), x, groups=64)
    assert est == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / 80, rel=0.3)
