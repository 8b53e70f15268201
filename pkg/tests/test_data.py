import logging
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nextplace.data import (
    UNKNOWN_INDEX,
    UNKNOWN_TOKEN,
    CheckinRecord,
    DataError,
    PreprocessConfig,
    build_corpus,
    build_queries,
    filter_users,
    load_corpus,
    merge_nearby_records,
    parse_records,
    save_corpus,
    sessionize_user,
    slot_of,
    split_counts,
)

MON = datetime(2026, 1, 5, 0, 0)  # a Monday


def rec(user, loc, when, cat="c0", lat=40.0, lon=-74.0):
    return CheckinRecord(user_id=user, location_id=loc, latitude=lat,
                         longitude=lon, timestamp=when,
                         category_id=cat, category_name=cat)


def spread_records(user, n_sessions, per_session=6, start=MON, loc="L", cat="c0"):
    """n_sessions clusters, one per 3-day window, hourly gaps inside."""
    out = []
    for s in range(n_sessions):
        base = start + timedelta(days=3 * s)
        for i in range(per_session):
            out.append(rec(user, f"{loc}{s}_{i}", base + timedelta(hours=i), cat=cat))
    return out


class TestSlotOf:
    def test_weekday_hour_maps_directly(self):
        assert slot_of(datetime(2026, 1, 5, 13, 0)) == 13  # Monday 13:00

    def test_first_weekend_hour(self):
        assert slot_of(datetime(2026, 1, 11, 0, 0)) == 24  # Sunday 00:00

    def test_last_weekend_hour(self):
        assert slot_of(datetime(2026, 1, 10, 23, 0)) == 47  # Saturday 23:00

    def test_full_week_covers_every_slot_once_per_daytype_hour(self):
        seen = {}
        for day in range(7):
            for hour in range(24):
                t = MON + timedelta(days=day, hours=hour)
                s = slot_of(t)
                assert 0 <= s <= 47
                key = (t.weekday() >= 5, hour)
                seen.setdefault(key, set()).add(s)
        # each (day-type, hour) pair lands on exactly one slot
        assert all(len(v) == 1 for v in seen.values())
        assert set.union(*seen.values()) == set(range(48))


class TestParse:
    def checkin_line(self, user="u1", loc="l1", cat="c1", lat="40.7", lon="-74.0",
                     tz="-300", stamp="2026-01-05T18:00:00Z", delim="\t"):
        return delim.join([user, loc, cat, "Coffee Shop", lat, lon, tz, stamp])

    def test_empty_file_warns_and_returns_nothing(self, tmp_path, caplog):
        p = tmp_path / "empty.tsv"
        p.write_text("")
        with caplog.at_level(logging.WARNING):
            result = parse_records(p)
        assert result.records == []
        assert "no data lines" in caplog.text

    def test_single_line_resolves_local_time(self, tmp_path):
        p = tmp_path / "one.tsv"
        p.write_text(self.checkin_line() + "\n")
        result = parse_records(p)
        assert len(result.records) == 1
        r = result.records[0]
        assert r.user_id == "u1" and r.location_id == "l1"
        assert r.category_id == "c1"
        # 18:00 UTC at offset -300 minutes is 13:00 local
        assert r.timestamp == datetime(2026, 1, 5, 13, 0)
        assert r.timestamp.tzinfo is None

    def test_comma_delimiter_detected(self, tmp_path):
        p = tmp_path / "one.csv"
        p.write_text(self.checkin_line(delim=",") + "\n")
        assert len(parse_records(p).records) == 1

    def test_header_skipped_when_flagged(self, tmp_path):
        p = tmp_path / "h.tsv"
        p.write_text("\t".join(
            ["user_id", "location_id", "category_id", "category_name",
             "latitude", "longitude", "tz_offset_minutes", "utc_timestamp"])
            + "\n" + self.checkin_line() + "\n")
        assert len(parse_records(p, has_header=True).records) == 1

    def test_malformed_lines_counted(self, tmp_path):
        lines = [self.checkin_line(loc=f"l{i}") for i in range(100)]
        lines.insert(3, "garbage line without fields")
        p = tmp_path / "mix.tsv"
        p.write_text("\n".join(lines) + "\n")
        result = parse_records(p)  # 1 of 101 lines is under the 1% gate
        assert len(result.records) == 100
        assert result.malformed == [(4, result.malformed[0][1])]

    def test_too_many_malformed_lines_fail_with_numbers(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text("\n".join([self.checkin_line(), "junk\tline", "more junk"]))
        with pytest.raises(DataError, match=r"lines 2, 3"):
            parse_records(p)

    def test_coordinate_bounds_enforced(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text(self.checkin_line(lat="91.0") + "\n")
        with pytest.raises(DataError, match="latitude"):
            parse_records(p)

    def test_cdr_schema(self, tmp_path):
        p = tmp_path / "cdr.tsv"
        p.write_text("u1\tcell9\t40.0\t-74.0\t2026-01-05T13:00:00\n")
        result = parse_records(p, mode="cdr")
        r = result.records[0]
        assert r.location_id == "cell9"
        assert r.category_id is None
        assert r.timestamp == datetime(2026, 1, 5, 13, 0)

    def test_unknown_mode_rejected(self, tmp_path):
        p = tmp_path / "x.tsv"
        p.write_text("a\tb\n")
        with pytest.raises(DataError, match="mode"):
            parse_records(p, mode="gps")

    def test_records_sorted_per_user_by_time(self, tmp_path):
        lines = [
            self.checkin_line(user="u2", stamp="2026-01-05T10:00:00Z"),
            self.checkin_line(user="u1", stamp="2026-01-05T12:00:00Z"),
            self.checkin_line(user="u1", stamp="2026-01-05T09:00:00Z"),
        ]
        p = tmp_path / "s.tsv"
        p.write_text("\n".join(lines) + "\n")
        records = parse_records(p).records
        keys = [(r.user_id, r.timestamp) for r in records]
        assert keys == sorted(keys)


class TestFilterUsers:
    def test_nine_records_removed_ten_kept(self):
        t = MON
        records = [rec("small", f"l{i}", t + timedelta(hours=i)) for i in range(9)]
        records += [rec("big", f"l{i}", t + timedelta(hours=i)) for i in range(10)]
        kept = filter_users(records, 10)
        assert {r.user_id for r in kept} == {"big"}
        assert len(kept) == 10

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 40)),
                    min_size=0, max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_matches_counting_oracle(self, pairs):
        records = [rec(f"u{u}", "l", MON + timedelta(minutes=m)) for u, m in pairs]
        kept = filter_users(records, 10)
        from collections import Counter
        counts = Counter(r.user_id for r in records)
        expected = {u for u, c in counts.items() if c >= 10}
        assert {r.user_id for r in kept} == expected
        assert all(counts[r.user_id] >= 10 for r in kept)


class TestMerge:
    def test_close_pair_keeps_earliest(self):
        a = rec("u", "A", MON)
        b = rec("u", "B", MON + timedelta(minutes=9))
        merged = merge_nearby_records([a, b])
        assert merged == [a]

    def test_chained_run_collapses_to_head(self):
        times = [0, 9, 17, 25, 40]  # gaps 9,8,8,15: first four chain together
        records = [rec("u", f"l{i}", MON + timedelta(minutes=m))
                   for i, m in enumerate(times)]
        merged = merge_nearby_records(records)
        assert [r.location_id for r in merged] == ["l0", "l4"]

    def test_wide_gaps_untouched(self):
        records = [rec("u", f"l{i}", MON + timedelta(minutes=10 * i))
                   for i in range(5)]
        assert merge_nearby_records(records) == records

    @given(st.lists(st.integers(0, 500), min_size=1, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_output_gaps_at_least_threshold_and_idempotent(self, minutes):
        records = [rec("u", f"l{i}", MON + timedelta(minutes=m))
                   for i, m in enumerate(sorted(minutes))]
        merged = merge_nearby_records(records)
        gaps = [(b.timestamp - a.timestamp).total_seconds() / 60
                for a, b in zip(merged, merged[1:])]
        assert all(g >= 10 for g in gaps)
        assert merge_nearby_records(merged) == merged


class TestSessionize:
    def test_twelve_records_one_window_gives_single_session_of_ten(self):
        records = [rec("u", f"l{i}", MON + timedelta(hours=i)) for i in range(12)]
        config = PreprocessConfig(min_sessions_per_user=1)
        sessions = sessionize_user(records, config)
        # greedy chunks [10, 2]; the 2-chunk falls under the 5 minimum
        assert [len(s) for s in sessions] == [10]
        assert [r.location_id for r in sessions[0]] == [f"l{i}" for i in range(10)]

    def test_windows_cut_every_three_days(self):
        records = [rec("u", "a", MON + timedelta(hours=i)) for i in range(5)]
        records += [rec("u", "b", MON + timedelta(days=3, hours=i)) for i in range(5)]
        sessions = sessionize_user(records, PreprocessConfig(min_sessions_per_user=1))
        assert [len(s) for s in sessions] == [5, 5]
        assert {r.location_id for r in sessions[0]} == {"a"}
        assert {r.location_id for r in sessions[1]} == {"b"}

    def test_window_boundary_is_anchored_at_first_record(self):
        start = MON + timedelta(hours=7)  # anchor away from midnight
        records = [rec("u", "a", start),
                   rec("u", "a", start + timedelta(days=3) - timedelta(minutes=10)),
                   rec("u", "b", start + timedelta(days=3))]
        sessions = sessionize_user(
            records, PreprocessConfig(min_sessions_per_user=1, session_min=1))
        assert [len(s) for s in sessions] == [2, 1]

    def test_small_chunks_dropped(self):
        records = [rec("u", "a", MON + timedelta(hours=i)) for i in range(4)]
        sessions = sessionize_user(records, PreprocessConfig(min_sessions_per_user=1))
        assert sessions == []

    def test_retention_keeps_most_recent_sessions(self):
        records = spread_records("u", 13, per_session=6)
        sessions = sessionize_user(records, PreprocessConfig())
        assert len(sessions) == 10
        # the three oldest windows are gone
        assert sessions[0][0].location_id == "L3_0"

    def test_user_below_session_minimum_dropped(self):
        records = spread_records("u", 4, per_session=6)
        assert sessionize_user(records, PreprocessConfig()) == []

    def test_emitted_sessions_satisfy_invariants(self):
        rng = np.random.default_rng(41)
        times = np.cumsum(rng.integers(5, 2000, size=300))  # minutes
        records = [rec("u", f"l{rng.integers(8)}", MON + timedelta(minutes=int(m)))
                   for m in times]
        sessions = sessionize_user(records, PreprocessConfig())
        assert sessions, "fixture should retain the user"
        for s in sessions:
            assert 5 <= len(s) <= 10
            span = (s[-1].timestamp - s[0].timestamp).total_seconds()
            assert span <= 3 * 86400
            for a, b in zip(s, s[1:]):
                assert (b.timestamp - a.timestamp).total_seconds() >= 600

    def test_idempotent_when_no_retention_drop(self):
        records = spread_records("u", 8, per_session=7)
        config = PreprocessConfig()
        first = sessionize_user(records, config)
        flattened = [r for s in first for r in s]
        second = sessionize_user(flattened, config)
        assert second == first


class TestSplit:
    def test_ten_sessions_split_eight_two(self):
        assert split_counts(10) == 8

    def test_five_sessions_split_four_one(self):
        assert split_counts(5) == 4

    @given(st.integers(min_value=2, max_value=50))
    def test_both_sides_nonempty(self, n):
        k = split_counts(n)
        assert 1 <= k < n


@pytest.fixture
def small_corpus():
    records = []
    for u in range(3):
        records += spread_records(f"u{u}", 6, per_session=6, loc=f"u{u}_")
    return build_corpus(records, mode="checkin")


class TestBuildCorpus:
    def test_split_is_chronological_prefix(self, small_corpus):
        for u in range(3):
            sessions = small_corpus.user_sessions(u)
            splits = [s.split for s in sessions]
            assert splits == ["train"] * 5 + ["test"]

    def test_vocab_round_trip(self, small_corpus):
        v = small_corpus.vocab
        for i, loc in enumerate(v.locations):
            if i != UNKNOWN_INDEX:
                assert v.locations[v.location_index(loc)] == loc
        for u in v.users:
            assert v.users[v.user_index(u)] == u

    def test_unknown_reserved_at_zero(self, small_corpus):
        assert small_corpus.vocab.locations[UNKNOWN_INDEX] == UNKNOWN_TOKEN
        assert small_corpus.vocab.categories[UNKNOWN_INDEX] == UNKNOWN_TOKEN

    def test_test_only_location_maps_to_unknown(self):
        records = spread_records("u", 6, per_session=6)
        # swap one record in the final (test) session to a fresh location
        records[-1] = rec("u", "never_in_train", records[-1].timestamp)
        corpus = build_corpus(records, mode="checkin")
        test_session = corpus.user_sessions(0)[-1]
        assert test_session.split == "test"
        assert test_session.records[-1].location == UNKNOWN_INDEX
        assert "never_in_train" not in corpus.vocab.locations

    def test_location_counts_are_train_visit_counts(self):
        records = spread_records("u", 6, per_session=6)
        corpus = build_corpus(records, mode="checkin")
        v = corpus.vocab
        from collections import Counter
        brute = Counter(r.location for s in corpus.train_sessions()
                        for r in s.records)
        for idx in range(1, v.n_locations):
            assert v.location_counts[idx] == brute[idx]

    def test_coords_from_first_train_occurrence(self):
        records = [rec("u", "L", MON + timedelta(days=3 * s, hours=i),
                       lat=10.0 + s, lon=20.0)
                   for s in range(6) for i in range(6)]
        corpus = build_corpus(records, mode="checkin")
        idx = corpus.vocab.location_index("L")
        assert corpus.vocab.coords[idx] == (10.0, 20.0)

    def test_cdr_mode_has_no_categories(self):
        records = [rec("u", f"l{s}_{i}", MON + timedelta(days=3 * s, hours=i),
                       cat=None)
                   for s in range(6) for i in range(6)]
        corpus = build_corpus(records, mode="cdr")
        assert not corpus.has_categories
        assert corpus.vocab.categories == [UNKNOWN_TOKEN]
        assert all(r.category == UNKNOWN_INDEX
                   for s in corpus.sessions for r in s.records)


class TestBuildQueries:
    def two_session_corpus(self):
        # lengths 5 and 6 in consecutive windows
        records = [rec("u", f"a{i}", MON + timedelta(hours=i)) for i in range(5)]
        records += [rec("u", f"b{i}", MON + timedelta(days=3, hours=i))
                    for i in range(6)]
        config = PreprocessConfig(min_records_per_user=1, min_sessions_per_user=2)
        return build_corpus(records, mode="checkin", config=config), config

    def test_counts_by_manual_enumeration(self):
        corpus, config = self.two_session_corpus()
        # session 0 is train, session 1 is test; only the second session has
        # history, giving one sample per position 2..6
        assert [s.split for s in corpus.sessions] == ["train", "test"]
        train_q = build_queries(corpus, "train", config)
        test_q = build_queries(corpus, "test", config)
        assert train_q == []
        assert len(test_q) == 5
        assert all(len(q.history_locations) == 5 for q in test_q)

    def test_recent_prefix_and_target_alignment(self):
        corpus, config = self.two_session_corpus()
        queries = build_queries(corpus, "test", config)
        session = corpus.sessions[1]
        locs = [r.location for r in session.records]
        for i, q in enumerate(queries, start=1):
            assert list(q.recent_locations) == locs[:i]
            assert q.target_location == locs[i]
            assert q.target_slot == session.records[i].slot
            assert q.qid == f"u/1/{i + 1}"

    def test_session_of_length_five_gives_four_samples(self):
        records = spread_records("u", 2, per_session=5)
        config = PreprocessConfig(min_records_per_user=1, min_sessions_per_user=2)
        corpus = build_corpus(records, mode="checkin", config=config)
        assert len(build_queries(corpus, "test", config)) == 4

    def test_first_session_emits_nothing(self, small_corpus):
        queries = build_queries(small_corpus, "train")
        assert queries, "later train sessions should produce samples"
        assert all(q.qid.split("/")[1] != "0" for q in queries)

    def test_train_queries_cover_later_train_sessions(self, small_corpus):
        queries = build_queries(small_corpus, "train")
        # 3 users x sessions 1..4 eligible x 5 positions each
        assert len(queries) == 3 * 4 * 5

    def test_history_grows_with_earlier_test_sessions_when_enabled(self):
        records = spread_records("u", 10, per_session=6)
        corpus = build_corpus(records, mode="checkin")
        queries = build_queries(corpus, "test")
        by_session = {}
        for q in queries:
            by_session.setdefault(int(q.qid.split("/")[1]), set()).add(
                len(q.history_locations))
        assert by_session[8] == {48}  # 8 earlier sessions x 6 records
        assert by_session[9] == {54}  # includes the earlier test session

    def test_history_frozen_at_train_when_disabled(self):
        records = spread_records("u", 10, per_session=6)
        config = PreprocessConfig(test_history_includes_test=False)
        corpus = build_corpus(records, mode="checkin", config=config)
        queries = build_queries(corpus, "test", config)
        assert {len(q.history_locations) for q in queries} == {48}

    def test_targets_strictly_later_than_context(self, small_corpus):
        sessions = {(s.user_index, s.session_index): s for s in small_corpus.sessions}
        for q in build_queries(small_corpus, "test"):
            user, s_idx, pos = q.qid.split("/")
            session = sessions[(q.user_index, int(s_idx))]
            target_time = session.records[int(pos) - 1].time
            context = [r.time for key, s in sessions.items()
                       if key[0] == q.user_index and key[1] < int(s_idx)
                       for r in s.records]
            context += [r.time for r in session.records[:int(pos) - 1]]
            assert all(t < target_time for t in context)


class TestCorpusIO:
    def test_roundtrip(self, tmp_path, small_corpus):
        sp, vp = tmp_path / "sessions.jsonl", tmp_path / "vocab.json"
        save_corpus(small_corpus, sp, vp)
        loaded = load_corpus(sp, vp)
        assert loaded.mode == small_corpus.mode
        assert loaded.vocab.locations == small_corpus.vocab.locations
        assert loaded.vocab.coords == small_corpus.vocab.coords
        assert loaded.sessions == small_corpus.sessions

    def test_serialization_deterministic(self, tmp_path, small_corpus):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        v1, v2 = tmp_path / "a.json", tmp_path / "b.json"
        save_corpus(small_corpus, p1, v1)
        save_corpus(small_corpus, p2, v2)
        assert p1.read_bytes() == p2.read_bytes()
        assert v1.read_bytes() == v2.read_bytes()
