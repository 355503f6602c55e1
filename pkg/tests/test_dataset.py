import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpbf_forecast.dataset import FeatureSeries, NormStats, Windows, batches, extract_features, normalize, window
from lpbf_forecast.features import SubdomainPartition
from lpbf_forecast.heatsim import GridSpec, MaterialParams, RunRecord, Snapshot


def fake_run(maps, grid):
    snaps = [Snapshot(k, np.asarray(u, float), float(k), float(k + 1)) for k, u in enumerate(maps)]
    return RunRecord(grid, MaterialParams(), None, 20.0, 1.0, 1, [], np.zeros((1, 2)), snaps)


class TestExtract:
    def test_constant_run_is_zero(self):
        grid = GridSpec(20, 20)
        s = extract_features(fake_run([np.full(grid.shape, 20.0)] * 5, grid), mu=2)
        assert s.table.shape == (5, 16)
        assert not s.table.any()

    def test_ramp_matches_counts(self):
        grid = GridSpec(34, 34)
        X, Y = grid.mesh()
        a, b = 1.5, -0.5
        u = a * X + b * Y
        part = SubdomainPartition(grid)
        s = extract_features(fake_run([u, u], grid), part, mu=1)
        want = part.counts.astype(float) ** 2 * (a * a + b * b)
        assert np.allclose(s.table[0], want, rtol=1e-12)
        root = extract_features(fake_run([u, u], grid), part, mu=1, scalar="norm")
        assert np.allclose(root.table[0], np.sqrt(want), rtol=1e-12)

    def test_raster_length(self, raster_run_64):
        s = extract_features(raster_run_64)
        assert s.X.size == 4096 and s.nu == 224
        assert np.all(np.isfinite(s.X)) and np.all(s.X >= 0)

    def test_too_few_maps(self):
        grid = GridSpec(16, 16)
        with pytest.raises(ValueError, match="mu\\+1=15"):
            extract_features(fake_run([np.zeros(grid.shape)] * 14, grid), mu=14)

    def test_unknown_scalar(self):
        grid = GridSpec(16, 16)
        with pytest.raises(ValueError):
            extract_features(fake_run([np.zeros(grid.shape)] * 3, grid), mu=1, scalar="max")


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 20), st.integers(0, 2**31))
def test_flatten_round_trip(maps, width, seed):
    table = np.random.default_rng(seed).normal(size=(maps, width))
    s = FeatureSeries.from_flat(FeatureSeries(table, 1).X, width, 1)
    assert np.array_equal(s.table, table)


def test_from_flat_rejects_ragged():
    with pytest.raises(ValueError):
        FeatureSeries.from_flat(np.arange(17.0))


class TestNormalize:
    def test_two_points(self):
        z, stats = normalize(FeatureSeries(np.array([[0.0], [2.0]]), 1), split=1.0)
        assert z.X.tolist() == [-1.0, 1.0]
        assert stats.shift == 1.0 and stats.scale == 1.0

    def test_round_trip(self, rng):
        s = FeatureSeries(rng.lognormal(3, 2, size=(30, 16)), 4)
        z, stats = normalize(s)
        back = stats.invert(z.table)
        assert np.allclose(back, s.table, rtol=1e-12, atol=0)

    def test_fit_uses_split_only(self, rng):
        t = rng.normal(size=(20, 16))
        t2 = t.copy()
        t2[14:] = 1e6  # post-split contamination must not move the statistics
        _, a = normalize(FeatureSeries(t, 3), split=0.7)
        _, b = normalize(FeatureSeries(t2, 3), split=0.7)
        assert a == b
        z, _ = normalize(FeatureSeries(t2, 3), split=0.7)
        assert z.table[14:].min() > 1.0

    def test_zero_variance_fallback(self, caplog):
        with caplog.at_level(logging.WARNING):
            z, stats = normalize(FeatureSeries(np.full((10, 16), 3.0), 2))
        assert stats.scheme == "shift" and stats.scale == 1.0
        assert not z.table.any()
        assert "zero variance" in caplog.text

    def test_none_and_unknown(self):
        s = FeatureSeries(np.arange(32.0).reshape(2, 16), 1)
        z, stats = normalize(s, "none")
        assert np.array_equal(z.table, s.table) and stats.scheme == "none"
        with pytest.raises(ValueError):
            normalize(s, "minmax")
        with pytest.raises(ValueError):
            NormStats(0.0, 0.0)


class TestWindow:
    def test_toy_width_one(self):
        s = FeatureSeries(np.arange(1.0, 11.0)[:, None], mu=2)
        w = window(s, split=1.0)
        assert w.inputs[:3].tolist() == [[1, 2], [2, 3], [3, 4]]
        assert w.targets[:3].tolist() == [[2, 3], [3, 4], [4, 5]]
        # the last target of each sample is the value after its input span
        assert w.targets[-1, -1] == 10.0
        assert w.eval_maps == list(range(3, 11))

    def test_shifted_targets_and_training_bound(self, rng):
        s = FeatureSeries(rng.normal(size=(40, 16)), mu=4)
        w = window(s, split=0.7, stride=2)
        X = s.X
        for inp, tgt in zip(w.inputs, w.targets):
            assert np.array_equal(inp[1:], tgt[:-1])
            start = int(np.flatnonzero(X == inp[0])[0])
            assert start % 16 == 0
            assert start + inp.size + 1 <= 28 * 16
        assert w.n_train_maps == 28

    def test_full_size_first_map(self):
        s = FeatureSeries(np.zeros((256, 16)), mu=14)
        w = window(s)
        assert w.eval_maps[0] == 15 and w.eval_maps[-1] == 256
        assert len(w.eval_maps) == 242
        assert window(s, scope="holdout").eval_maps[0] == 180

    def test_errors(self):
        s = FeatureSeries(np.zeros((5, 16)), mu=5)
        with pytest.raises(ValueError):
            window(s)
        with pytest.raises(ValueError):
            window(FeatureSeries(np.zeros((9, 16)), 2), split=0.0)
        with pytest.raises(ValueError):
            window(FeatureSeries(np.zeros((9, 16)), 2), scope="test")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(2, 60), st.floats(0.05, 1.0), st.integers(1, 3))
def test_eval_maps_never_below_mu_plus_one(mu, maps, split, stride):
    if mu >= maps:
        return
    w = window(FeatureSeries(np.zeros((maps, 4)), mu), split=split, stride=stride)
    assert w.eval_maps[0] == mu + 1 and w.eval_maps[-1] == maps


def test_batches_shapes_and_cover():
    inputs = np.arange(70.0).reshape(7, 10)
    win = Windows(inputs, inputs + 0.5, [], 7)
    seen = []
    for x, y in batches(win, 3, np.random.default_rng(0)):
        assert x.shape[0] == 10 and x.shape[2] == 1 and x.shape[1] <= 3
        assert np.array_equal(y, x + 0.5)
        seen.extend(x[0, :, 0].tolist())
    assert sorted(seen) == inputs[:, 0].tolist()
    plain = [x[0, :, 0].tolist() for x, _ in batches(win, 3)]
    assert plain == [[0, 10, 20], [30, 40, 50], [60]]
