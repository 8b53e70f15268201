"""Synthetic check-in corpora with controllable structure.

Two generators, both emitting check-in TSV lines that survive preprocessing
with clean shapes (every 3-day window holds 15 or 18 records, so windows
chunk into two sessions each and session retention drops whole windows):

- periodic: each user cycles through a fixed weekday routine and a fixed
  weekend routine at fixed hours, sharing a home location at the start of
  every day, so the next location is a deterministic function of the user
  and the last visit's time slot.
- long-range: the next location is a permutation (keyed by the target
  daypart) of the location visited two steps back, which first-order
  transition models cannot capture.
"""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .util import derive_seed

START = datetime(2026, 1, 5, 0, 0)  # a Monday
GRID_ORIGIN = (40.70, -74.02)
HOURS_PERIODIC = (8, 10, 12, 15, 18, 21)
HOURS_LONG_RANGE = (9, 11, 14, 17, 20)
N_CATEGORIES = 5


def _coords(loc: int) -> tuple[float, float]:
    # ~1.1 km grid spacing so distance decay is meaningful
    lat = GRID_ORIGIN[0] + (loc // 6) * 0.01
    lon = GRID_ORIGIN[1] + (loc % 6) * 0.01
    return lat, lon


def _line(user: int, loc: int, when: datetime) -> str:
    cat = loc % N_CATEGORIES
    lat, lon = _coords(loc)
    return "\t".join([
        f"u{user:02d}", f"L{loc:02d}", f"C{cat}", f"cat{cat}",
        f"{lat:.5f}", f"{lon:.5f}", "0",
        when.isoformat() + "+00:00"])


def periodic_corpus(n_users: int = 20, n_locations: int = 30,
                    days: int = 30, n_weekday_templates: int = 5,
                    n_weekend_templates: int = 4, seed: int = 0) -> list[str]:
    """Deterministic daily routines: weekday and weekend location cycles
    drawn from small template pools and anchored at a personal home stop,
    so the post-midnight transition is a single-valued function of the
    previous slot. Template sharing keeps every (routine, slot) context
    well represented in training while homes keep users distinct."""
    def pool(kind, count):
        out = []
        for t in range(count):
            rng = np.random.default_rng(derive_seed(seed, kind, t))
            out.append(list(rng.choice(n_locations, size=5, replace=False)))
        return out

    weekday_pool = pool("weekday", n_weekday_templates)
    weekend_pool = pool("weekend", n_weekend_templates)
    lines = []
    for user in range(n_users):
        rng = np.random.default_rng(derive_seed(seed, "periodic", user))
        home = int(rng.integers(0, n_locations))
        weekday = [home] + weekday_pool[user % n_weekday_templates]
        weekend = [home] + weekend_pool[user % n_weekend_templates]
        for day in range(days):
            date = START + timedelta(days=day)
            routine = weekday if date.weekday() < 5 else weekend
            for pos, hour in enumerate(HOURS_PERIODIC):
                when = date.replace(hour=hour)
                lines.append(_line(user, int(routine[pos]), when))
    return lines


def long_range_corpus(n_users: int = 20, n_locations: int = 12,
                      days: int = 30, n_groups: int = 1,
                      seed: int = 0) -> list[str]:
    """Second-order dynamics: the location at step i is a permutation,
    keyed by the target daypart, of the location at step i-2.

    A first-order model sees almost no signal (the chain alternates two
    interleaved subsequences), and a recent-only sequence model goes blind
    whenever the two-back step falls before the current session prefix,
    while attention over past sessions can still recover it. The small
    alphabet keeps every permutation entry well observed; n_groups > 1
    splits users into cohorts with distinct permutations."""
    perms = {}
    for group in range(n_groups):
        for part in ("day", "evening"):
            rng = np.random.default_rng(derive_seed(seed, "perm", group, part))
            perms[(group, part)] = rng.permutation(n_locations)

    lines = []
    for user in range(n_users):
        rng = np.random.default_rng(derive_seed(seed, "long-range", user))
        group = user % n_groups
        prev2 = int(rng.integers(0, n_locations))
        prev1 = int(rng.integers(0, n_locations))
        visits = [prev2, prev1]
        hours_flat = []
        for day in range(days):
            for hour in HOURS_LONG_RANGE:
                hours_flat.append((day, hour))
        for step, (day, hour) in enumerate(hours_flat):
            if step < 2:
                loc = visits[step]
            else:
                part = "day" if hour < 14 else "evening"
                loc = int(perms[(group, part)][visits[step - 2]])
                visits.append(loc)
            when = START + timedelta(days=day)
            when = when.replace(hour=hour)
            lines.append(_line(user, loc, when))
    return lines


def write_corpus(lines: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
