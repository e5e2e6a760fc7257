import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wan_obstacle.domain import Box
from wan_obstacle.sampler import StreamKey, boundary_grid, draw_batch, sample_boundary, sample_interior, stream


def test_interior_support_and_determinism():
    key = StreamKey("exp", 3, 10, "descent")
    a = sample_interior(Box.interval(0, 1), 5000, key.generator())
    b = sample_interior(Box.interval(0, 1), 5000, key.generator())
    assert np.all((a > 0) & (a < 1))
    np.testing.assert_array_equal(a, b)


def test_interior_mean_clt_bound():
    pts = sample_interior(Box.interval(0, 1), 10**6, stream("mean", 0, 0, "check"))
    # 3 sigma / sqrt(N) with sigma^2 = 1/12
    assert abs(pts.mean() - 0.5) <= 3 * np.sqrt(1 / 12) / 1e3
    assert abs(pts.mean() - 0.5) <= 0.002


def test_keys_do_not_alias():
    base = ("exp", 1, 4, "descent")
    ref = stream(*base).uniform(size=8)
    for other in [("exp", 1, 4, "ascent"), ("exp", 2, 4, "descent"), ("exp", 1, 5, "descent"), ("exq", 1, 4, "descent")]:
        assert not np.array_equal(ref, stream(*other).uniform(size=8))


def test_stream_key_string():
    assert str(StreamKey("example1", 7, 12, "ascent")) == "example1/seed=7/epoch=12/ascent"


def test_boundary_1d_endpoints():
    pts = sample_boundary(Box.interval(0, 1), 2, stream("b", 0, 0, "b"))
    np.testing.assert_array_equal(pts, [[0.0], [1.0]])
    pts = sample_boundary(Box.interval(-2, 2), 5, stream("b", 0, 0, "b"))
    assert set(pts.ravel()) == {-2.0, 2.0}


def test_boundary_2d_membership():
    pts = sample_boundary(Box.rectangle(-1, 1, -1, 1), 1000, stream("b", 0, 0, "b"))
    np.testing.assert_allclose(np.max(np.abs(pts), axis=1), 1.0, atol=1e-14)
    assert np.all(np.abs(pts) <= 1.0)


def test_boundary_edge_proportions():
    box = Box.rectangle(0, 3, 0, 1)  # edge lengths 3, 1, 3, 1
    n = 4096
    pts = sample_boundary(box, n, stream("edges", 0, 0, "boundary"))
    counts = np.array(
        [
            np.sum(np.isclose(pts[:, 1], 0) & (pts[:, 0] > 0)),
            np.sum(np.isclose(pts[:, 0], 3) & (pts[:, 1] > 0)),
            np.sum(np.isclose(pts[:, 1], 1) & (pts[:, 0] < 3)),
            np.sum(np.isclose(pts[:, 0], 0) & (pts[:, 1] < 1)),
        ]
    )
    p = np.array([3, 1, 3, 1]) / 8
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


@given(st.integers(0, 10**6), st.integers(1, 300))
def test_batch_invariants(seed, n):
    box = Box.rectangle(-1, 1, 0, 2)
    batch = draw_batch(box, n, 17, StreamKey("prop", seed, seed % 7, "descent"))
    assert np.all(box.contains(batch.interior, strict=True))
    lo, hi = np.array(box.lower), np.array(box.upper)
    dist = np.min(np.minimum(np.abs(batch.boundary - lo), np.abs(batch.boundary - hi)), axis=1)
    assert np.max(dist) <= 1e-14
    assert batch.epoch == seed % 7


def test_boundary_grid_is_deterministic_and_on_boundary():
    box = Box.rectangle(-1, 1, -1, 1)
    g = boundary_grid(box, 64)
    assert g.shape == (64, 2)
    np.testing.assert_allclose(np.max(np.abs(g), axis=1), 1.0)
    np.testing.assert_array_equal(g, boundary_grid(box, 64))


def test_invalid_counts():
    with pytest.raises(ValueError):
        sample_interior(Box.interval(0, 1), 0, stream("x", 0, 0, "x"))
    with pytest.raises(ValueError):
        sample_boundary(Box.interval(0, 1), 0, stream("x", 0, 0, "x"))
