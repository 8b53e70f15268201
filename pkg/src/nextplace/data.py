"""Trajectory ingestion and preparation for next-place prediction.

Covers raw check-in/CDR parsing, the cleaning and sessionization rules
(short-gap merge, 3-day windows, 5..10-record sessions, per-user caps),
48-slot time codes, vocabularies with a reserved UNKNOWN index, the
chronological 80/20 split, and (history, recent, target) query samples.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

UNKNOWN_TOKEN = "<unk>"
UNKNOWN_INDEX = 0

CHECKIN_COLUMNS = ("user_id", "location_id", "category_id", "category_name",
                   "latitude", "longitude", "tz_offset_minutes", "utc_timestamp")
CDR_COLUMNS = ("user_id", "cell_id", "latitude", "longitude", "local_timestamp")


class DataError(ValueError):
    """Unusable input: schema violations, too many malformed lines, etc."""


@dataclass
class PreprocessConfig:
    min_records_per_user: int = 10
    merge_gap_minutes: float = 10.0
    window_days: float = 3.0
    session_max: int = 10
    session_min: int = 5
    max_sessions_per_user: int = 10
    min_sessions_per_user: int = 5
    train_fraction: float = 0.8
    # whether a test query's history may include the user's earlier test
    # sessions (chronological realism) or only train sessions
    test_history_includes_test: bool = True


@dataclass
class CheckinRecord:
    user_id: str
    location_id: str
    latitude: float
    longitude: float
    timestamp: datetime          # local civil time, naive
    category_id: str | None = None
    category_name: str | None = None


@dataclass
class SessionRecord:
    location: int
    category: int
    slot: int
    time: datetime


@dataclass
class Session:
    user_id: str
    user_index: int
    session_index: int
    split: str                   # "train" | "test"
    records: list[SessionRecord]


@dataclass
class Vocab:
    users: list[str]
    locations: list[str]         # index 0 reserved for UNKNOWN
    categories: list[str]        # index 0 reserved for UNKNOWN
    user_counts: list[int]
    location_counts: list[int]
    category_counts: list[int]
    coords: list[tuple[float, float] | None]  # per location index

    def __post_init__(self):
        self._user_idx = {u: i for i, u in enumerate(self.users)}
        self._loc_idx = {l: i for i, l in enumerate(self.locations)}
        self._cat_idx = {c: i for i, c in enumerate(self.categories)}

    def user_index(self, user_id: str) -> int:
        return self._user_idx[user_id]

    def location_index(self, location_id: str) -> int:
        return self._loc_idx.get(location_id, UNKNOWN_INDEX)

    def category_index(self, category_id: str | None) -> int:
        if category_id is None:
            return UNKNOWN_INDEX
        return self._cat_idx.get(category_id, UNKNOWN_INDEX)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def n_categories(self) -> int:
        return len(self.categories)


@dataclass
class Corpus:
    mode: str                    # "checkin" | "cdr"
    vocab: Vocab
    sessions: list[Session]      # ordered by (user_index, session_index)

    @property
    def has_categories(self) -> bool:
        return self.mode == "checkin"

    def user_sessions(self, user_index: int) -> list[Session]:
        return [s for s in self.sessions if s.user_index == user_index]

    def train_sessions(self) -> list[Session]:
        return [s for s in self.sessions if s.split == "train"]

    def test_sessions(self) -> list[Session]:
        return [s for s in self.sessions if s.split == "test"]


@dataclass
class QuerySample:
    qid: str
    user_index: int
    split: str
    history_locations: np.ndarray
    history_categories: np.ndarray
    history_slots: np.ndarray
    recent_locations: np.ndarray
    recent_categories: np.ndarray
    recent_slots: np.ndarray
    target_location: int
    target_slot: int


@dataclass
class ParseResult:
    records: list[CheckinRecord]
    malformed: list[tuple[int, str]]  # (1-based line number, reason)
    total_lines: int


# ---------------------------------------------------------------------------
# parsing

def _parse_instant(text: str) -> datetime:
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    return datetime.fromisoformat(t)


def _to_local(utc_text: str, tz_offset_minutes: str) -> datetime:
    dt = _parse_instant(utc_text)
    offset = int(tz_offset_minutes)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return dt + timedelta(minutes=offset)


def _sniff_delimiter(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    raise DataError("cannot detect delimiter: first line has neither tab nor comma")


def _parse_line(parts: list[str], mode: str) -> CheckinRecord:
    columns = CHECKIN_COLUMNS if mode == "checkin" else CDR_COLUMNS
    if len(parts) != len(columns):
        raise ValueError(f"expected {len(columns)} columns, got {len(parts)}")
    if mode == "checkin":
        user, loc, cat_id, cat_name, lat, lon, tz_off, stamp = parts
        record = CheckinRecord(
            user_id=user.strip(), location_id=loc.strip(),
            latitude=float(lat), longitude=float(lon),
            timestamp=_to_local(stamp, tz_off),
            category_id=cat_id.strip(), category_name=cat_name.strip())
    else:
        user, cell, lat, lon, stamp = parts
        local = _parse_instant(stamp)
        if local.tzinfo is not None:
            local = local.replace(tzinfo=None)
        record = CheckinRecord(
            user_id=user.strip(), location_id=cell.strip(),
            latitude=float(lat), longitude=float(lon), timestamp=local)
    if not record.user_id or not record.location_id:
        raise ValueError("empty user or location id")
    if not -90.0 <= record.latitude <= 90.0:
        raise ValueError(f"latitude {record.latitude} out of [-90, 90]")
    if not -180.0 <= record.longitude <= 180.0:
        raise ValueError(f"longitude {record.longitude} out of [-180, 180]")
    return record


def parse_records(path, mode: str = "checkin", has_header: bool = False) -> ParseResult:
    """Parse a delimiter-separated trajectory file.

    Records come back sorted by (user, time). Malformed lines are collected
    with their 1-based line numbers; more than 1% malformed is a hard error.
    """
    if mode not in ("checkin", "cdr"):
        raise DataError(f"unknown mode {mode!r}, expected 'checkin' or 'cdr'")
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [(i + 1, line) for i, line in enumerate(lines) if line.strip()]
    if has_header and body:
        body = body[1:]
    if not body:
        logger.warning("input file %s has no data lines", path)
        return ParseResult([], [], 0)
    delimiter = _sniff_delimiter(body[0][1])
    records: list[CheckinRecord] = []
    malformed: list[tuple[int, str]] = []
    for line_no, line in body:
        try:
            records.append(_parse_line(line.split(delimiter), mode))
        except (ValueError, OverflowError) as exc:
            malformed.append((line_no, str(exc)))
    if malformed:
        logger.warning("%d malformed lines in %s (first: line %d: %s)",
                       len(malformed), path, malformed[0][0], malformed[0][1])
    if len(malformed) > 0.01 * len(body):
        shown = ", ".join(str(n) for n, _ in malformed[:20])
        more = f" and {len(malformed) - 20} more" if len(malformed) > 20 else ""
        raise DataError(
            f"{len(malformed)} of {len(body)} lines malformed (>1%): "
            f"lines {shown}{more}; first reason: {malformed[0][1]}")
    records.sort(key=lambda r: (r.user_id, r.timestamp, r.location_id))
    return ParseResult(records, malformed, len(body))


# ---------------------------------------------------------------------------
# cleaning and sessionization

def filter_users(records: list[CheckinRecord],
                 min_records: int = 10) -> list[CheckinRecord]:
    """Drop all records of users with fewer than min_records raw records."""
    counts: dict[str, int] = {}
    for r in records:
        counts[r.user_id] = counts.get(r.user_id, 0) + 1
    return [r for r in records if counts[r.user_id] >= min_records]


def merge_nearby_records(records: list[CheckinRecord],
                         gap_minutes: float = 10.0) -> list[CheckinRecord]:
    """Collapse each maximal run of records whose consecutive gaps are all
    below the threshold into its earliest record.

    Kept records are then at least gap_minutes apart, so a second pass is a
    no-op.
    """
    if not records:
        return []
    gap = timedelta(minutes=gap_minutes)
    kept = [records[0]]
    run_tail = records[0].timestamp
    for r in records[1:]:
        if r.timestamp - run_tail < gap:
            run_tail = r.timestamp  # absorbed into the current run
        else:
            kept.append(r)
            run_tail = r.timestamp
    return kept


def sessionize_user(records: list[CheckinRecord],
                    config: PreprocessConfig) -> list[list[CheckinRecord]]:
    """Apply the per-user session rules to time-sorted records.

    Merge short gaps, cut 3-day windows anchored at the user's first record,
    split oversized windows greedily into chunks of session_max, drop chunks
    below session_min, keep at most the max_sessions_per_user most recent
    sessions, and drop the user entirely below min_sessions_per_user.

    Re-running on the flattened output is a no-op whenever the retention cap
    removed whole windows (the anchor then stays grid-aligned); a cap that
    cuts mid-window shifts the grid for later records.
    """
    merged = merge_nearby_records(records, config.merge_gap_minutes)
    if not merged:
        return []
    anchor = merged[0].timestamp
    window = timedelta(days=config.window_days)
    windows: dict[int, list[CheckinRecord]] = {}
    for r in merged:
        idx = int((r.timestamp - anchor) // window)
        windows.setdefault(idx, []).append(r)
    sessions: list[list[CheckinRecord]] = []
    for idx in sorted(windows):
        block = windows[idx]
        for start in range(0, len(block), config.session_max):
            chunk = block[start:start + config.session_max]
            if len(chunk) >= config.session_min:
                sessions.append(chunk)
    if len(sessions) > config.max_sessions_per_user:
        sessions = sessions[-config.max_sessions_per_user:]
    if len(sessions) < config.min_sessions_per_user:
        return []
    return sessions


def slot_of(instant: datetime) -> int:
    """48-way time code: weekday hours map to 0..23, weekend hours to 24..47."""
    if instant.weekday() < 5:
        return instant.hour
    return 24 + instant.hour


def split_counts(n_sessions: int, train_fraction: float = 0.8) -> int:
    """Number of leading sessions assigned to train: ceil(fraction * n),
    pulled back by one when nothing would remain for test."""
    n_train = math.ceil(train_fraction * n_sessions)
    if n_train >= n_sessions:
        n_train = n_sessions - 1
    return n_train


# ---------------------------------------------------------------------------
# corpus assembly

def build_corpus(records: list[CheckinRecord], mode: str,
                 config: PreprocessConfig | None = None) -> Corpus:
    """Full preparation: filter, sessionize, split, build vocabularies from
    the training side only, and index every record.

    Locations/categories seen only in test map to the reserved UNKNOWN
    index 0; such targets are never predictable and score as misses.
    """
    config = config or PreprocessConfig()
    records = filter_users(records, config.min_records_per_user)
    by_user: dict[str, list[CheckinRecord]] = {}
    for r in records:
        by_user.setdefault(r.user_id, []).append(r)

    raw_sessions: dict[str, list[list[CheckinRecord]]] = {}
    for user_id in sorted(by_user):
        sessions = sessionize_user(by_user[user_id], config)
        if sessions:
            raw_sessions[user_id] = sessions

    users = sorted(raw_sessions)
    user_counts = [sum(len(s) for s in raw_sessions[u]) for u in users]
    n_train_by_user = {u: split_counts(len(raw_sessions[u]), config.train_fraction)
                       for u in users}

    locations = [UNKNOWN_TOKEN]
    loc_idx: dict[str, int] = {}
    location_counts = [0]
    coords: list[tuple[float, float] | None] = [None]
    categories = [UNKNOWN_TOKEN]
    cat_idx: dict[str, int] = {}
    category_counts = [0]
    for user_id in users:
        for session in raw_sessions[user_id][:n_train_by_user[user_id]]:
            for r in session:
                if r.location_id not in loc_idx:
                    loc_idx[r.location_id] = len(locations)
                    locations.append(r.location_id)
                    location_counts.append(0)
                    coords.append((r.latitude, r.longitude))
                location_counts[loc_idx[r.location_id]] += 1
                if mode == "checkin" and r.category_id is not None:
                    if r.category_id not in cat_idx:
                        cat_idx[r.category_id] = len(categories)
                        categories.append(r.category_id)
                        category_counts.append(0)
                    category_counts[cat_idx[r.category_id]] += 1

    vocab = Vocab(users, locations, categories, user_counts,
                  location_counts, category_counts, coords)
    sessions: list[Session] = []
    for u_idx, user_id in enumerate(users):
        n_train = n_train_by_user[user_id]
        for s_idx, chunk in enumerate(raw_sessions[user_id]):
            split = "train" if s_idx < n_train else "test"
            recs = [SessionRecord(location=vocab.location_index(r.location_id),
                                  category=vocab.category_index(
                                      r.category_id if mode == "checkin" else None),
                                  slot=slot_of(r.timestamp),
                                  time=r.timestamp)
                    for r in chunk]
            sessions.append(Session(user_id, u_idx, s_idx, split, recs))
    return Corpus(mode, vocab, sessions)


def build_queries(corpus: Corpus, split: str,
                  config: PreprocessConfig | None = None) -> list[QuerySample]:
    """Emit one sample per predictable position.

    For every session after a user's first and every position with at least
    one preceding record in that session: history is all earlier sessions
    flattened chronologically, recent is the in-session prefix, target is
    the next record. Train samples never draw history from test sessions.
    """
    config = config or PreprocessConfig()
    if split not in ("train", "test"):
        raise DataError(f"unknown split {split!r}")
    queries: list[QuerySample] = []
    by_user: dict[int, list[Session]] = {}
    for s in corpus.sessions:
        by_user.setdefault(s.user_index, []).append(s)
    for user_index in sorted(by_user):
        sessions = sorted(by_user[user_index], key=lambda s: s.session_index)
        hist_loc: list[int] = []
        hist_cat: list[int] = []
        hist_slot: list[int] = []
        for session in sessions:
            usable_history = bool(hist_loc)
            if session.split == split and usable_history:
                locs = [r.location for r in session.records]
                cats = [r.category for r in session.records]
                slots = [r.slot for r in session.records]
                h_loc = np.array(hist_loc, dtype=np.intp)
                h_cat = np.array(hist_cat, dtype=np.intp)
                h_slot = np.array(hist_slot, dtype=np.intp)
                for i in range(1, len(session.records)):
                    queries.append(QuerySample(
                        qid=f"{session.user_id}/{session.session_index}/{i + 1}",
                        user_index=user_index,
                        split=split,
                        history_locations=h_loc,
                        history_categories=h_cat,
                        history_slots=h_slot,
                        recent_locations=np.array(locs[:i], dtype=np.intp),
                        recent_categories=np.array(cats[:i], dtype=np.intp),
                        recent_slots=np.array(slots[:i], dtype=np.intp),
                        target_location=locs[i],
                        target_slot=slots[i]))
            contributes = (session.split == "train"
                           or (split == "test" and config.test_history_includes_test))
            if contributes:
                for r in session.records:
                    hist_loc.append(r.location)
                    hist_cat.append(r.category)
                    hist_slot.append(r.slot)
    return queries


# ---------------------------------------------------------------------------
# session and vocabulary files

def save_corpus(corpus: Corpus, sessions_path, vocab_path) -> None:
    """Line-delimited sessions plus a sidecar vocabulary file."""
    with open(sessions_path, "w", encoding="utf-8") as fh:
        for s in corpus.sessions:
            fh.write(json.dumps({
                "user": s.user_id,
                "user_index": s.user_index,
                "session_index": s.session_index,
                "split": s.split,
                "records": [{"loc": r.location, "cat": r.category, "slot": r.slot,
                             "time": r.time.isoformat()} for r in s.records],
            }, sort_keys=True) + "\n")
    vocab = corpus.vocab
    payload = {
        "mode": corpus.mode,
        "users": vocab.users,
        "locations": vocab.locations,
        "categories": vocab.categories,
        "user_counts": vocab.user_counts,
        "location_counts": vocab.location_counts,
        "category_counts": vocab.category_counts,
        "coords": [list(c) if c is not None else None for c in vocab.coords],
    }
    Path(vocab_path).write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_corpus(sessions_path, vocab_path) -> Corpus:
    raw = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
    vocab = Vocab(raw["users"], raw["locations"], raw["categories"],
                  raw["user_counts"], raw["location_counts"],
                  raw["category_counts"],
                  [tuple(c) if c is not None else None for c in raw["coords"]])
    sessions = []
    with open(sessions_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            recs = [SessionRecord(r["loc"], r["cat"], r["slot"],
                                  datetime.fromisoformat(r["time"]))
                    for r in obj["records"]]
            sessions.append(Session(obj["user"], obj["user_index"],
                                    obj["session_index"], obj["split"], recs))
    sessions.sort(key=lambda s: (s.user_index, s.session_index))
    return Corpus(raw["mode"], vocab, sessions)
