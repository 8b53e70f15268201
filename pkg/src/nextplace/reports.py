"""Analysis reports: preference-part weight attribution, distance
distributions of actual versus predicted next locations, and loss curves.

The weight proportion attributes the prediction head's drive to each
preference vector as the L1 mass of that column block's contribution,
normalized per query; this is one defensible attribution choice, noted as
such in emitted files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import UNKNOWN_INDEX, QuerySample
from .metrics import top_k
from .model import NextPlaceModel, prepare_query
from .priors import GeoTable, PriorSet

DEFAULT_DISTANCE_BINS = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0,
                         float("inf"))


def weight_proportion(model: NextPlaceModel, priors: PriorSet,
                      queries: list[QuerySample]) -> dict[str, float]:
    """Mean share of L1 drive each preference part contributes to the head.

    share_x(q) = ||W_p^(x) . g_x||_1 / sum_parts ||.||_1 over the parts the
    variant actually uses (the user embedding is not a preference part).
    """
    parts = [p for p in model.config.parts if p != "user"]
    slices = model.config.part_slices()
    w = model.params.prediction.data
    if not queries:
        raise ValueError("weight proportion needs at least one query")
    per_query = []
    for q in queries:
        clipped, weights = prepare_query(q, priors, model.config.history_cap)
        g = model.forward(clipped, weights).concat_vector.data
        mags = np.array([np.abs(w[:, slices[p]] @ g[slices[p]]).sum()
                         for p in parts])
        total = mags.sum()
        if total > 0:
            per_query.append(mags / total)
        else:
            per_query.append(np.full(len(parts), 1.0 / len(parts)))
    mean = np.mean(per_query, axis=0)
    return {part: float(share) for part, share in zip(parts, mean)}


def save_weight_proportion(shares: dict[str, float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["part", "share"])
        for part, share in shares.items():
            writer.writerow([part, f"{share:.10f}"])


@dataclass
class DistanceHistogram:
    bin_edges: tuple
    actual_prop: np.ndarray
    predicted_prop: np.ndarray
    n_pairs: int

    def rows(self):
        lows = self.bin_edges[:-1]
        highs = self.bin_edges[1:]
        return list(zip(lows, highs, self.actual_prop, self.predicted_prop))

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_low", "bin_high", "actual_prop",
                             "predicted_prop"])
            for low, high, actual, predicted in self.rows():
                writer.writerow([low, high, f"{actual:.10f}",
                                 f"{predicted:.10f}"])


def distance_pairs(score_fn, geo: GeoTable,
                   queries: list[QuerySample]) -> tuple[list, list]:
    """Per query: km from the current (last recent) location to the actual
    next location and to the predicted top-1 location."""
    actual, predicted = [], []
    for q in queries:
        if q.target_location == UNKNOWN_INDEX:
            continue
        current = int(q.recent_locations[-1])
        scores = score_fn(q)
        top1 = int(top_k(scores, 1, excluded=(UNKNOWN_INDEX,))[0])
        actual.append(geo.distance(current, q.target_location))
        predicted.append(geo.distance(current, top1))
    return actual, predicted


def bin_distances(actual, predicted,
                  bin_edges=DEFAULT_DISTANCE_BINS) -> DistanceHistogram:
    """Histogram both distance lists over shared edges; pairs with unknown
    coordinates (infinite distance in a finite-edged bin layout) are kept
    only if an infinite final edge catches them."""
    pairs = [(a, p) for a, p in zip(actual, predicted)
             if a <= bin_edges[-1] and p <= bin_edges[-1]]
    if not pairs:
        raise ValueError("no distance pairs fall inside the bin range")
    kept_actual = np.array([a for a, _ in pairs])
    kept_predicted = np.array([p for _, p in pairs])
    edges = np.array(bin_edges)
    # the final bin is closed on the right, so an inf edge catches inf
    # distances (missing coordinates)
    actual_counts, _ = np.histogram(kept_actual, bins=edges)
    predicted_counts, _ = np.histogram(kept_predicted, bins=edges)
    n = len(pairs)
    return DistanceHistogram(bin_edges=tuple(bin_edges),
                             actual_prop=actual_counts / n,
                             predicted_prop=predicted_counts / n,
                             n_pairs=n)


def distance_distribution(model: NextPlaceModel, priors: PriorSet,
                          queries: list[QuerySample],
                          bin_edges=DEFAULT_DISTANCE_BINS) -> DistanceHistogram:
    def score_fn(q):
        clipped, weights = prepare_query(q, priors, model.config.history_cap)
        return model.predict_scores(clipped, weights)

    actual, predicted = distance_pairs(score_fn, priors.geo, queries)
    return bin_distances(actual, predicted, bin_edges)


def save_loss_curve(curve: list[tuple[int, float, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "test_loss"])
        for epoch, train_loss, test_loss in curve:
            writer.writerow([epoch, f"{train_loss:.10f}", f"{test_loss:.10f}"])


def load_loss_curve(path) -> list[tuple[int, float, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["epoch", "train_loss", "test_loss"]:
            raise ValueError(f"unexpected loss-curve header: {header}")
        return [(int(e), float(a), float(b)) for e, a, b in reader]
