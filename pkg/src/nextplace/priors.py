"""Statistical prior structures for group-preference weighting.

Three builders over training sessions: geographic distance decay between
the current location and sequence positions, a 48x48 slot co-visitation
similarity matrix, and a category-by-slot activity count table. Each turns
into per-position weight vectors for the history and recent sequences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import stable_softmax
from .data import QuerySample, Session

EARTH_RADIUS_KM = 6371.0
N_SLOTS = 48
MIN_DISTANCE_KM = 0.01
PRIORS_MAGIC = b"PRIO"
PRIORS_FORMAT_VERSION = 1


class UnsupportedModeError(RuntimeError):
    """A category-dependent prior was requested for category-free data."""


class PriorsIOError(RuntimeError):
    """Malformed priors bundle file."""


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in kilometers between (lat, lon) degree pairs."""
    lat1, lon1 = np.radians(a[0]), np.radians(a[1])
    lat2, lon2 = np.radians(b[0]), np.radians(b[1])
    h = (np.sin((lat2 - lat1) / 2.0) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
    return float(2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0))))


class GeoTable:
    """Per-location coordinates with a lazily filled pairwise distance cache.

    Locations without coordinates (the UNKNOWN index, test-only venues) are
    infinitely far from everything, which bottoms out their decay weight.
    """

    def __init__(self, coords: list[tuple[float, float] | None]):
        self.lat = np.array([c[0] if c is not None else np.nan for c in coords])
        self.lon = np.array([c[1] if c is not None else np.nan for c in coords])
        self._cache: dict[tuple[int, int], float] = {}

    @property
    def n_locations(self) -> int:
        return self.lat.size

    def has_coords(self, index: int) -> bool:
        return bool(np.isfinite(self.lat[index]))

    def distance(self, a: int, b: int) -> float:
        key = (a, b) if a <= b else (b, a)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if not (self.has_coords(a) and self.has_coords(b)):
            d = float("inf")
        else:
            d = haversine((self.lat[a], self.lon[a]), (self.lat[b], self.lon[b]))
        self._cache[key] = d
        return d

    def distances_from(self, current: int, indices: np.ndarray) -> np.ndarray:
        """Vectorized distances from one location to many, inf where either
        side lacks coordinates."""
        indices = np.asarray(indices, dtype=np.intp)
        if not self.has_coords(current):
            return np.full(indices.shape, np.inf)
        lat1 = np.radians(self.lat[current])
        lon1 = np.radians(self.lon[current])
        lat2 = np.radians(self.lat[indices])
        lon2 = np.radians(self.lon[indices])
        h = (np.sin((lat2 - lat1) / 2.0) ** 2
             + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2)
        d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
        return np.where(np.isfinite(d), d, np.inf)


def distance_weights(current: int, sequence: np.ndarray, geo: GeoTable) -> np.ndarray:
    """Position weights exp(1/d) normalized over the sequence.

    Distances clamp below at MIN_DISTANCE_KM so co-located places get a
    large but finite score; unreachable places score exp(0). Computed as a
    softmax over the reciprocal clamped distances, so weights sum to 1.
    """
    sequence = np.asarray(sequence, dtype=np.intp)
    if sequence.size == 0:
        raise ValueError("distance_weights needs a non-empty sequence")
    d = np.maximum(geo.distances_from(current, sequence), MIN_DISTANCE_KM)
    scores = np.where(np.isinf(d), 0.0, 1.0 / d)
    return stable_softmax(scores)


def build_time_correlation(train_sessions: list[Session]) -> np.ndarray:
    """48x48 Jaccard similarity between the location sets of each slot pair."""
    visited: list[set[int]] = [set() for _ in range(N_SLOTS)]
    for session in train_sessions:
        for r in session.records:
            visited[r.slot].add(r.location)
    gamma = np.zeros((N_SLOTS, N_SLOTS))
    for i in range(N_SLOTS):
        for j in range(i, N_SLOTS):
            union = visited[i] | visited[j]
            if union:
                value = len(visited[i] & visited[j]) / len(union)
                gamma[i, j] = gamma[j, i] = value
    return gamma


def time_weights(current_slot: int, sequence_slots: np.ndarray,
                 gamma: np.ndarray) -> np.ndarray:
    """Per-position weights from the slot-affinity distribution.

    The current slot's correlation row is softmaxed over all 48 slots; each
    position then takes the probability of its own slot. Weights sum to 1
    over slots, not over positions.
    """
    beta = stable_softmax(gamma[current_slot])
    return beta[np.asarray(sequence_slots, dtype=np.intp)]


def build_activity_matrix(train_sessions: list[Session], n_categories: int,
                          has_categories: bool = True) -> np.ndarray:
    """Category-by-slot visit counts from training data."""
    if not has_categories:
        raise UnsupportedModeError(
            "activity priors need categories; the corpus mode has none")
    counts = np.zeros((n_categories, N_SLOTS))
    for session in train_sessions:
        for r in session.records:
            counts[r.category, r.slot] += 1
    return counts


def scale_activity_rows(activity: np.ndarray) -> np.ndarray:
    """Divide each row by its maximum so exponentiation stays bounded;
    all-zero rows stay zero (their softmax is uniform)."""
    row_max = activity.max(axis=1, keepdims=True)
    return np.divide(activity, row_max, out=np.zeros_like(activity),
                     where=row_max > 0)


def activity_weights(current_slot: int, sequence_categories: np.ndarray,
                     activity_scaled: np.ndarray) -> np.ndarray:
    """Per-position weights from each category's slot distribution.

    Each category row (already max-scaled) is softmaxed over its 48 slots
    and evaluated at the current slot.
    """
    per_category = np.apply_along_axis(stable_softmax, 1, activity_scaled)
    column = per_category[:, current_slot]
    return column[np.asarray(sequence_categories, dtype=np.intp)]


@dataclass
class QueryWeights:
    spatial_history: np.ndarray
    spatial_recent: np.ndarray
    temporal_history: np.ndarray
    temporal_recent: np.ndarray
    activity_history: np.ndarray | None
    activity_recent: np.ndarray | None

    def history_stack(self) -> list[np.ndarray]:
        out = [self.spatial_history, self.temporal_history]
        if self.activity_history is not None:
            out.append(self.activity_history)
        return out

    def recent_stack(self) -> list[np.ndarray]:
        out = [self.spatial_recent, self.temporal_recent]
        if self.activity_recent is not None:
            out.append(self.activity_recent)
        return out


class PriorSet:
    """Frozen bundle of the three priors, ready for per-query weighting."""

    def __init__(self, geo: GeoTable, time_correlation: np.ndarray,
                 activity: np.ndarray | None, config_digest: str = ""):
        if time_correlation.shape != (N_SLOTS, N_SLOTS):
            raise ValueError(
                f"time correlation must be {N_SLOTS}x{N_SLOTS}, "
                f"got {time_correlation.shape}")
        self.geo = geo
        self.time_correlation = time_correlation
        self.activity = activity
        self.config_digest = config_digest
        # softmax of each max-scaled category row over the 48 slots
        if activity is not None:
            scaled = scale_activity_rows(activity)
            self.activity_slot_probs = np.apply_along_axis(stable_softmax, 1, scaled)
        else:
            self.activity_slot_probs = None
        self.time_slot_probs = np.apply_along_axis(
            stable_softmax, 1, time_correlation)

    @property
    def has_activity(self) -> bool:
        return self.activity is not None

    def weights_for(self, query: QuerySample) -> QueryWeights:
        """The six (four without categories) per-position weight vectors.

        The reference point is the last element of the recent sequence: its
        location anchors distance decay, its slot anchors the temporal and
        activity distributions.
        """
        current_location = int(query.recent_locations[-1])
        current_slot = int(query.recent_slots[-1])
        beta = self.time_slot_probs[current_slot]
        if self.activity_slot_probs is not None:
            column = self.activity_slot_probs[:, current_slot]
            act_h = column[query.history_categories]
            act_r = column[query.recent_categories]
        else:
            act_h = act_r = None
        return QueryWeights(
            spatial_history=distance_weights(
                current_location, query.history_locations, self.geo),
            spatial_recent=distance_weights(
                current_location, query.recent_locations, self.geo),
            temporal_history=beta[query.history_slots],
            temporal_recent=beta[query.recent_slots],
            activity_history=act_h,
            activity_recent=act_r)


def build_priors(train_sessions: list[Session], coords, n_categories: int,
                 has_categories: bool, config_digest: str = "") -> PriorSet:
    geo = GeoTable(coords)
    gamma = build_time_correlation(train_sessions)
    activity = (build_activity_matrix(train_sessions, n_categories, True)
                if has_categories else None)
    return PriorSet(geo, gamma, activity, config_digest)


# ---------------------------------------------------------------------------
# priors bundle file: named float64 sections behind a JSON directory

def save_priors(priors: PriorSet, path) -> None:
    coords = np.stack([priors.geo.lat, priors.geo.lon], axis=1)
    sections = [("time_correlation", priors.time_correlation), ("coords", coords)]
    if priors.activity is not None:
        sections.append(("activity", priors.activity))
    header = json.dumps({
        "config_digest": priors.config_digest,
        "sections": [[name, list(arr.shape)] for name, arr in sections],
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PRIORS_MAGIC)
        fh.write(struct.pack("<II", PRIORS_FORMAT_VERSION, len(header)))
        fh.write(header)
        for _, arr in sections:
            fh.write(np.asarray(arr, dtype=np.float64).astype("<f8").tobytes(order="C"))


def load_priors(path) -> PriorSet:
    blob = Path(path).read_bytes()
    if blob[:4] != PRIORS_MAGIC:
        raise PriorsIOError("not a priors bundle (bad magic)")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != PRIORS_FORMAT_VERSION:
        raise PriorsIOError(f"unsupported priors format version {version}")
    header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    arrays = {}
    for name, shape in header["sections"]:
        size = int(np.prod(shape)) * 8
        if offset + size > len(blob):
            raise PriorsIOError(f"truncated priors bundle in section {name!r}")
        arrays[name] = np.frombuffer(
            blob[offset:offset + size], dtype="<f8").reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise PriorsIOError("trailing bytes after last priors section")
    for required in ("time_correlation", "coords"):
        if required not in arrays:
            raise PriorsIOError(f"priors bundle missing section {required!r}")
    coords = [None if not np.isfinite(lat) else (float(lat), float(lon))
              for lat, lon in arrays["coords"]]
    return PriorSet(GeoTable(coords), arrays["time_correlation"],
                    arrays.get("activity"), header.get("config_digest", ""))
