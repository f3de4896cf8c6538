import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edgecache.core import (ConfigError, DemandHistory, DemandWindow, SimConfig, WindowMeans,
                            cap_norm, extract_features)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def history_from(series, F=1, N=1, T=10):
    h = DemandHistory(F, N, T)
    for slot, value in series:
        h.record(0, 0, slot, value)
    return h


class TestExtractFeatures:
    def test_empty_history_zero_fills(self):
        h = DemandHistory(3, 2, 10)
        for t in (1, 4, 11):
            assert extract_features(h, 1, 1, t, 5).tolist() == [0, 0, 0, 0, 0]

    def test_most_recent_first(self):
        h = history_from(enumerate([3, 1, 4, 1, 5], start=1))
        assert extract_features(h, 0, 0, 6, 5).tolist() == [5, 1, 4, 1, 3]

    def test_zero_fill_before_first_slot(self):
        h = history_from([(1, 7)])
        assert extract_features(h, 0, 0, 2, 5).tolist() == [7, 0, 0, 0, 0]

    def test_ignores_current_and_future_slots(self):
        h = history_from([(1, 2), (2, 9), (3, 4)])
        assert extract_features(h, 0, 0, 2, 3).tolist() == [2, 0, 0]

    def test_unobserved_gap_is_zero(self):
        h = history_from([(1, 2), (3, 4)])
        assert extract_features(h, 0, 0, 4, 3).tolist() == [4, 0, 2]

    def test_rejects_slot_zero(self):
        with pytest.raises(ValueError):
            extract_features(DemandHistory(1, 1, 3), 0, 0, 0, 5)

    @settings(max_examples=60, deadline=None)
    @given(data=st.data(), w=st.integers(1, 8))
    def test_vectorised_window_matches_scalar(self, data, w):
        F, N, T = 3, 2, 12
        h = DemandHistory(F, N, T)
        upto = data.draw(st.integers(0, T))
        for slot in range(1, upto + 1):
            for n in range(N):
                vals = data.draw(arrays(float, F, elements=st.floats(0, 100)))
                mask = data.draw(arrays(bool, F))
                h.record_slot(n, slot, vals, mask)
        t = data.draw(st.integers(1, T + 1))
        for n in range(N):
            win = DemandWindow(w)(h, n, t)
            assert win.shape == (F, w)
            for f in range(F):
                np.testing.assert_array_equal(win[f], extract_features(h, f, n, t, w))
                assert np.all(win[f] >= 0)


class TestDemandHistory:
    def test_append_only(self):
        h = history_from([(2, 1)])
        with pytest.raises(ValueError):
            h.record(0, 0, 2, 5)
        with pytest.raises(ValueError):
            h.record(0, 0, 1, 5)

    def test_rejects_out_of_range_slot(self):
        h = DemandHistory(1, 1, 3)
        with pytest.raises(ValueError):
            h.record(0, 0, 4, 1)
        with pytest.raises(ValueError):
            h.record_slot(0, 0, np.ones(1))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            DemandHistory(1, 1, 3).record(0, 0, 1, -1)
        with pytest.raises(ValueError):
            DemandHistory(2, 1, 3).record_slot(0, 1, np.array([1.0, -1.0]))

    def test_entries(self):
        h = history_from([(1, 2), (4, 3.5)])
        assert h.entries(0, 0) == [(1, 2.0), (4, 3.5)]

    def test_masked_slot_records_only_selected(self):
        h = DemandHistory(3, 1, 3)
        h.record_slot(0, 1, np.array([1.0, 2.0, 3.0]), np.array([True, False, True]))
        assert h.entries(1, 0) == []
        assert h.entries(2, 0) == [(1, 3.0)]


def test_window_means():
    h = history_from(enumerate([1, 2, 3, 4, 5, 6], start=1), T=10)
    x = WindowMeans((1, 2, 4))(h, 0, 7)
    np.testing.assert_allclose(x[0], [6, 5.5, 4.5])
    assert WindowMeans((1, 5, 30)).dim == 3


class TestCapNorm:
    def test_zero_vector_unchanged(self):
        assert cap_norm(np.zeros(5), 0.1).tolist() == [0] * 5

    def test_inside_ball_unchanged(self):
        x = np.array([3.0, 4, 0, 0, 0])
        np.testing.assert_array_equal(cap_norm(x, 10), x)

    def test_scaled_onto_ball(self):
        np.testing.assert_allclose(cap_norm(np.array([3.0, 4, 0, 0, 0]), 1), [0.6, 0.8, 0, 0, 0])

    def test_rowwise(self):
        out = cap_norm(np.array([[3.0, 4.0], [0.3, 0.4]]), 1)
        np.testing.assert_allclose(out, [[0.6, 0.8], [0.3, 0.4]])

    def test_rejects_nonpositive_eta(self):
        with pytest.raises(ValueError):
            cap_norm(np.ones(2), 0)

    @given(x=arrays(float, 5, elements=finite), eta=st.floats(1e-3, 1e3))
    def test_idempotent_and_non_expanding(self, x, eta):
        once = cap_norm(x, eta)
        np.testing.assert_allclose(cap_norm(once, eta), once, rtol=1e-12, atol=1e-12)
        n0, n1 = np.linalg.norm(x), np.linalg.norm(once)
        assert n1 <= n0 + 1e-9
        assert n1 <= eta * (1 + 1e-12) or n1 == n0
        if n0 > 0:
            # same direction: cosine is 1
            assert np.dot(x, once) == pytest.approx(n0 * n1, rel=1e-9)


class TestSimConfig:
    def test_defaults(self):
        cfg = SimConfig(F=10, N=2, c=3, T=5)
        assert cfg.window == cfg.d == 5

    @pytest.mark.parametrize("changes, field_name", [
        ({"c": 11}, "c"),
        ({"lam": 0.0}, "lam"),
        ({"zeta": -1.0}, "zeta"),
        ({"F": 0}, "F"),
        ({"eta": 0.0}, "eta"),
        ({"policy": "lru"}, "policy"),
    ])
    def test_rejects(self, changes, field_name):
        with pytest.raises(ConfigError) as err:
            SimConfig(**{"F": 10, "N": 2, "c": 3, "T": 5, **changes})
        assert err.value.field == field_name

    def test_replace_roundtrip(self):
        cfg = SimConfig(F=10, N=2, c=3, T=5)
        assert cfg.replace(T=7).T == 7
        assert SimConfig(**cfg.to_dict()) == cfg
