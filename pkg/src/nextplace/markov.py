"""First-order Markov baseline over locations.

Transitions are counted from consecutive pairs inside training sessions and
row-normalized. Prediction scores the candidates by P(next | last recent
location); a never-seen row falls back to the user's training visit
frequencies, and a never-seen user falls back to the global frequencies.
"""

from __future__ import annotations

import numpy as np

from .data import QuerySample, Session


class MarkovModel:
    def __init__(self, transitions: np.ndarray, user_freq: dict[int, np.ndarray],
                 global_freq: np.ndarray):
        self.transitions = transitions
        self.user_freq = user_freq
        self.global_freq = global_freq
        self.n_locations = transitions.shape[0]

    def scores(self, user_index: int, last_location: int) -> np.ndarray:
        row = self.transitions[last_location]
        if row.sum() > 0.0:
            return row
        user_row = self.user_freq.get(user_index)
        if user_row is not None:
            return user_row
        return self.global_freq

    def predict(self, query: QuerySample) -> np.ndarray:
        return self.scores(query.user_index, int(query.recent_locations[-1]))


def fit_markov(train_sessions: list[Session], n_locations: int,
               n_users: int | None = None) -> MarkovModel:
    counts = np.zeros((n_locations, n_locations))
    visit_counts: dict[int, np.ndarray] = {}
    for session in train_sessions:
        locs = [r.location for r in session.records]
        user = visit_counts.setdefault(session.user_index,
                                       np.zeros(n_locations))
        for loc in locs:
            user[loc] += 1.0
        for src, dst in zip(locs, locs[1:]):
            counts[src, dst] += 1.0

    row_sums = counts.sum(axis=1, keepdims=True)
    transitions = np.divide(counts, row_sums, out=np.zeros_like(counts),
                            where=row_sums > 0)
    total = np.zeros(n_locations)
    user_freq = {}
    for user, visits in visit_counts.items():
        total += visits
        if visits.sum() > 0:
            user_freq[user] = visits / visits.sum()
    if total.sum() > 0:
        global_freq = total / total.sum()
    else:
        global_freq = np.full(n_locations, 1.0 / n_locations)
    return MarkovModel(transitions, user_freq, global_freq)
