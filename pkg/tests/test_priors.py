import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nextplace.data import QuerySample, Session, SessionRecord
from nextplace.priors import (
    EARTH_RADIUS_KM,
    GeoTable,
    PriorsIOError,
    PriorSet,
    UnsupportedModeError,
    activity_weights,
    build_activity_matrix,
    build_priors,
    build_time_correlation,
    distance_weights,
    haversine,
    load_priors,
    save_priors,
    scale_activity_rows,
    time_weights,
)

T0 = datetime(2026, 1, 5, 8, 0)

lat_strategy = st.floats(min_value=-89.0, max_value=89.0, allow_nan=False)
lon_strategy = st.floats(min_value=-180.0, max_value=180.0, allow_nan=False)


def session(triples, user_index=0, idx=0, split="train"):
    records = [SessionRecord(location=l, category=c, slot=s,
                             time=T0 + timedelta(hours=i))
               for i, (l, c, s) in enumerate(triples)]
    return Session("u", user_index, idx, split, records)


def lat_for_km(km):
    """Latitude degrees north of the equator at a given meridian distance."""
    return math.degrees(km / EARTH_RADIUS_KM)


class TestHaversine:
    def test_identical_points(self):
        assert haversine((40.7, -74.0), (40.7, -74.0)) == 0.0

    def test_quarter_meridian(self):
        d = haversine((0.0, 0.0), (90.0, 0.0))
        assert abs(d - EARTH_RADIUS_KM * math.pi / 2) < 1e-9
        assert abs(d - 10007.5) < 0.1

    @given(lat_strategy, lon_strategy, lat_strategy, lon_strategy)
    @settings(max_examples=200, deadline=None)
    def test_agrees_with_independent_spherical_formula(self, lat1, lon1, lat2, lon2):
        # atan2 form of the great-circle distance, stable at all separations
        p1, p2 = math.radians(lat1), math.radians(lat2)
        dl = math.radians(lon2 - lon1)
        y = math.hypot(math.cos(p2) * math.sin(dl),
                       math.cos(p1) * math.sin(p2)
                       - math.sin(p1) * math.cos(p2) * math.cos(dl))
        x = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
        expected = EARTH_RADIUS_KM * math.atan2(y, x)
        assert abs(haversine((lat1, lon1), (lat2, lon2)) - expected) < 1e-6

    @given(lat_strategy, lon_strategy, lat_strategy, lon_strategy)
    @settings(max_examples=100, deadline=None)
    def test_agrees_with_law_of_cosines_away_from_zero(self, lat1, lon1, lat2, lon2):
        p1, p2 = math.radians(lat1), math.radians(lat2)
        dl = math.radians(lon2 - lon1)
        inner = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
        expected = EARTH_RADIUS_KM * math.acos(min(1.0, max(-1.0, inner)))
        if expected > 1.0:  # acos loses precision near zero separation
            assert abs(haversine((lat1, lon1), (lat2, lon2)) - expected) < 1e-6

    @given(lat_strategy, lon_strategy, lat_strategy, lon_strategy)
    @settings(max_examples=50, deadline=None)
    def test_symmetric_nonnegative(self, lat1, lon1, lat2, lon2):
        d1 = haversine((lat1, lon1), (lat2, lon2))
        d2 = haversine((lat2, lon2), (lat1, lon1))
        assert d1 == d2 >= 0


class TestGeoTable:
    def test_distance_cached_and_symmetric(self):
        geo = GeoTable([(0.0, 0.0), (lat_for_km(5.0), 0.0)])
        assert abs(geo.distance(0, 1) - 5.0) < 1e-9
        assert geo.distance(1, 0) == geo.distance(0, 1)
        assert (0, 1) in geo._cache and len(geo._cache) == 1

    def test_missing_coordinates_are_infinitely_far(self):
        geo = GeoTable([None, (0.0, 0.0)])
        assert geo.distance(0, 1) == float("inf")
        assert not geo.has_coords(0)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(61)
        coords = [(float(la), float(lo)) for la, lo in
                  zip(rng.uniform(-80, 80, 6), rng.uniform(-179, 179, 6))]
        geo = GeoTable(coords)
        idx = np.array([1, 3, 5, 0])
        vec = geo.distances_from(2, idx)
        for k, i in enumerate(idx):
            assert abs(vec[k] - geo.distance(2, int(i))) < 1e-9


class TestDistanceWeights:
    def test_singleton(self):
        geo = GeoTable([(0.0, 0.0), (1.0, 1.0)])
        np.testing.assert_array_equal(distance_weights(0, np.array([1]), geo), [1.0])

    def test_equidistant_pair_splits_evenly(self):
        geo = GeoTable([(0.0, 0.0), (lat_for_km(3.0), 0.0), (-lat_for_km(3.0), 0.0)])
        w = distance_weights(0, np.array([1, 2]), geo)
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)

    def test_one_and_two_km_closed_form(self):
        geo = GeoTable([(0.0, 0.0), (lat_for_km(1.0), 0.0), (lat_for_km(2.0), 0.0)])
        w = distance_weights(0, np.array([1, 2]), geo)
        e1, e_half = math.exp(1.0), math.exp(0.5)
        np.testing.assert_allclose(w, [e1 / (e1 + e_half), e_half / (e1 + e_half)],
                                   atol=1e-9)
        np.testing.assert_allclose(w, [0.6225, 0.3775], atol=5e-5)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            distance_weights(0, np.array([], dtype=np.intp), GeoTable([(0.0, 0.0)]))

    def test_zero_distance_clamped(self):
        # co-located and nearly co-located points clamp to the same score
        geo = GeoTable([(0.0, 0.0), (0.0, 0.0), (lat_for_km(0.005), 0.0),
                        (lat_for_km(50.0), 0.0)])
        w = distance_weights(0, np.array([1, 2, 3]), geo)
        np.testing.assert_allclose(w[0], w[1], rtol=1e-12)
        assert w[0] > w[2]

    def test_unknown_positions_get_minimal_weight(self):
        geo = GeoTable([(0.0, 0.0), (lat_for_km(1.0), 0.0), None])
        w = distance_weights(0, np.array([1, 2]), geo)
        assert w[0] > w[1] > 0
        np.testing.assert_allclose(w.sum(), 1.0, atol=1e-12)

    def test_unknown_reference_falls_back_to_uniform(self):
        geo = GeoTable([None, (0.0, 0.0), (45.0, 10.0)])
        w = distance_weights(0, np.array([1, 2]), geo)
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)

    @given(st.lists(st.floats(min_value=0.0, max_value=500.0, allow_nan=False),
                    min_size=1, max_size=10))
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one_and_monotone(self, kms):
        coords = [(0.0, 0.0)] + [(lat_for_km(km), 0.0) for km in kms]
        geo = GeoTable(coords)
        w = distance_weights(0, np.arange(1, len(coords)), geo)
        assert abs(w.sum() - 1.0) < 1e-9
        clamped = np.maximum(
            geo.distances_from(0, np.arange(1, len(coords))), 0.01)
        for i in range(len(kms)):
            for j in range(len(kms)):
                if clamped[i] < clamped[j]:
                    assert w[i] > w[j]


class TestTimeCorrelation:
    def test_identical_slot_sets_score_one(self):
        sessions = [session([(1, 0, 3), (2, 0, 3), (1, 0, 7), (2, 0, 7)])]
        gamma = build_time_correlation(sessions)
        assert gamma[3, 7] == 1.0
        assert gamma[3, 3] == 1.0

    def test_disjoint_sets_score_zero(self):
        sessions = [session([(1, 0, 3), (2, 0, 7)])]
        gamma = build_time_correlation(sessions)
        assert gamma[3, 7] == 0.0

    def test_partial_overlap_by_enumeration(self):
        # slot 5 sees {1,2,3}, slot 9 sees {2,3,4}: Jaccard 2/4
        sessions = [session([(1, 0, 5), (2, 0, 5), (3, 0, 5),
                             (2, 0, 9), (3, 0, 9), (4, 0, 9)])]
        gamma = build_time_correlation(sessions)
        assert gamma[5, 9] == 0.5

    def test_empty_slots_zero_everywhere(self):
        gamma = build_time_correlation([])
        np.testing.assert_array_equal(gamma, np.zeros((48, 48)))

    def test_symmetric_bounded_unit_diagonal(self):
        rng = np.random.default_rng(62)
        sessions = [session([(int(rng.integers(1, 12)), 0, int(rng.integers(48)))
                             for _ in range(8)], idx=i) for i in range(25)]
        gamma = build_time_correlation(sessions)
        np.testing.assert_array_equal(gamma, gamma.T)
        assert np.all((0.0 <= gamma) & (gamma <= 1.0))
        occupied = {r.slot for s in sessions for r in s.records}
        for slot in occupied:
            assert gamma[slot, slot] == 1.0

    def test_session_order_invariant(self):
        rng = np.random.default_rng(63)
        sessions = [session([(int(rng.integers(1, 5)), 0, int(rng.integers(48)))
                             for _ in range(6)], idx=i) for i in range(12)]
        a = build_time_correlation(sessions)
        b = build_time_correlation(sessions[::-1])
        np.testing.assert_array_equal(a, b)


class TestTimeWeights:
    def test_zero_row_gives_uniform(self):
        gamma = np.zeros((48, 48))
        w = time_weights(5, np.array([0, 13, 47]), gamma)
        np.testing.assert_allclose(w, [1 / 48] * 3, atol=1e-12)

    def test_slot_distribution_sums_to_one(self):
        rng = np.random.default_rng(64)
        gamma = rng.uniform(size=(48, 48))
        w = time_weights(11, np.arange(48), gamma)
        assert abs(w.sum() - 1.0) < 1e-9

    def test_single_affinity_peak(self):
        gamma = np.zeros((48, 48))
        gamma[10, 30] = 1.0
        w = time_weights(10, np.array([30, 2]), gamma)
        peak = math.e / (math.e + 47)
        np.testing.assert_allclose(w[0], peak, atol=1e-9)
        assert abs(w[0] - 0.0547) < 2e-4
        np.testing.assert_allclose(w[1], 1 / (math.e + 47), atol=1e-9)


class TestActivityMatrix:
    def test_counts_by_category_and_slot(self):
        sessions = [session([(1, 2, 15), (1, 2, 15), (2, 2, 15), (3, 1, 4)])]
        w = build_activity_matrix(sessions, n_categories=3)
        assert w[2, 15] == 3.0
        assert w[1, 4] == 1.0
        assert w[1].sum() == 1.0

    def test_unvisited_category_row_zero(self):
        w = build_activity_matrix([session([(1, 1, 3)])], n_categories=4)
        np.testing.assert_array_equal(w[2], 0.0)

    def test_matches_brute_force_histogram(self):
        rng = np.random.default_rng(65)
        sessions = [session([(1, int(rng.integers(5)), int(rng.integers(48)))
                             for _ in range(7)], idx=i) for i in range(30)]
        w = build_activity_matrix(sessions, n_categories=5)
        brute = np.zeros((5, 48))
        for s in sessions:
            for r in s.records:
                brute[r.category, r.slot] += 1
        np.testing.assert_array_equal(w, brute)

    def test_category_free_mode_rejected(self):
        with pytest.raises(UnsupportedModeError):
            build_activity_matrix([], n_categories=1, has_categories=False)

    def test_row_scaling(self):
        w = np.array([[0.0, 4.0, 2.0], [0.0, 0.0, 0.0]])
        scaled = scale_activity_rows(w)
        np.testing.assert_allclose(scaled[0], [0.0, 1.0, 0.5])
        np.testing.assert_array_equal(scaled[1], 0.0)


class TestActivityWeights:
    def test_zero_row_uniform(self):
        scaled = np.zeros((2, 48))
        w = activity_weights(7, np.array([0, 1, 0]), scaled)
        np.testing.assert_allclose(w, [1 / 48] * 3, atol=1e-12)

    def test_single_count_at_current_slot(self):
        raw = np.zeros((2, 48))
        raw[1, 7] = 1.0
        w = activity_weights(7, np.array([1]), scale_activity_rows(raw))
        np.testing.assert_allclose(w[0], math.e / (math.e + 47), atol=1e-9)

    def test_each_row_distribution_sums_to_one(self):
        rng = np.random.default_rng(66)
        scaled = scale_activity_rows(rng.integers(0, 9, size=(4, 48)).astype(float))
        totals = [activity_weights(t, np.arange(4), scaled).sum()
                  for t in range(48)]
        # summing one category's weight over all 48 current slots is 1
        per_cat = np.array([[activity_weights(t, np.array([c]), scaled)[0]
                             for t in range(48)] for c in range(4)])
        np.testing.assert_allclose(per_cat.sum(axis=1), 1.0, atol=1e-9)
        assert len(totals) == 48


def toy_query():
    return QuerySample(
        qid="u/3/4", user_index=0, split="test",
        history_locations=np.array([1, 2, 3]),
        history_categories=np.array([1, 1, 2]),
        history_slots=np.array([3, 9, 30]),
        recent_locations=np.array([2, 1]),
        recent_categories=np.array([2, 1]),
        recent_slots=np.array([9, 10]),
        target_location=3, target_slot=11)


def toy_priors(with_activity=True):
    coords = [None, (0.0, 0.0), (lat_for_km(2.0), 0.0), (lat_for_km(8.0), 0.0)]
    sessions = [session([(1, 1, 3), (2, 1, 9), (3, 2, 30), (1, 1, 10), (2, 2, 9)])]
    gamma = build_time_correlation(sessions)
    activity = build_activity_matrix(sessions, 3) if with_activity else None
    return PriorSet(GeoTable(coords), gamma, activity)


class TestPriorSet:
    def test_reference_is_last_recent_element(self):
        priors = toy_priors()
        qw = priors.weights_for(toy_query())
        # current location 1, current slot 10
        expected_spatial = distance_weights(1, np.array([1, 2, 3]), priors.geo)
        np.testing.assert_allclose(qw.spatial_history, expected_spatial)
        beta = time_weights(10, np.array([3, 9, 30]), priors.time_correlation)
        np.testing.assert_allclose(qw.temporal_history, beta)

    def test_vector_lengths_align_with_sequences(self):
        qw = toy_priors().weights_for(toy_query())
        assert qw.spatial_history.shape == (3,)
        assert qw.spatial_recent.shape == (2,)
        assert qw.activity_history.shape == (3,)
        assert len(qw.history_stack()) == 3
        assert len(qw.recent_stack()) == 3

    def test_category_free_bundle_skips_activity(self):
        qw = toy_priors(with_activity=False).weights_for(toy_query())
        assert qw.activity_history is None
        assert len(qw.history_stack()) == 2

    def test_all_weights_nonnegative_finite(self):
        qw = toy_priors().weights_for(toy_query())
        for arr in qw.history_stack() + qw.recent_stack():
            assert np.all(np.isfinite(arr)) and np.all(arr >= 0)


class TestPriorsIO:
    def test_roundtrip(self, tmp_path):
        priors = toy_priors()
        priors.config_digest = "deadbeef"
        path = tmp_path / "priors.bin"
        save_priors(priors, path)
        loaded = load_priors(path)
        np.testing.assert_array_equal(loaded.time_correlation, priors.time_correlation)
        np.testing.assert_array_equal(loaded.activity, priors.activity)
        np.testing.assert_array_equal(loaded.geo.lat, priors.geo.lat)
        assert loaded.config_digest == "deadbeef"
        assert loaded.geo.has_coords(1) and not loaded.geo.has_coords(0)

    def test_category_free_roundtrip(self, tmp_path):
        priors = toy_priors(with_activity=False)
        path = tmp_path / "priors.bin"
        save_priors(priors, path)
        assert load_priors(path).activity is None

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"JUNKxxxx")
        with pytest.raises(PriorsIOError, match="magic"):
            load_priors(p)

    def test_version_rejected(self, tmp_path):
        priors = toy_priors()
        path = tmp_path / "priors.bin"
        save_priors(priors, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 9
        path.write_bytes(bytes(blob))
        with pytest.raises(PriorsIOError, match="version"):
            load_priors(path)

    def test_truncation_detected(self, tmp_path):
        priors = toy_priors()
        path = tmp_path / "priors.bin"
        save_priors(priors, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(PriorsIOError, match="truncated"):
            load_priors(path)


def test_build_priors_convenience():
    sessions = [session([(1, 1, 3), (2, 2, 9)])]
    coords = [None, (0.0, 0.0), (1.0, 1.0)]
    priors = build_priors(sessions, coords, n_categories=3, has_categories=True)
    assert priors.has_activity
    assert priors.activity.shape == (3, 48)
    cdr = build_priors(sessions, coords, n_categories=1, has_categories=False)
    assert not cdr.has_activity
