"""
Planted-pattern interaction logs.

Every user gets a few favourite items; every (user, favourite) pair
prefers some hours and/or days of the week. Each generated interaction
picks a favourite, one of its preferred slots per planted granularity and
then shifts that slot by a uniform offset in [-jitter, jitter]. Optional
trend items additionally draw interactions from every user shortly after
their onset, decaying exponentially.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .calendar import (
    DAY_OF_WEEK,
    HOUR,
    SECONDS_PER_DAY,
    SECONDS_PER_HOUR,
    SLOT_COUNTS,
    max_radius,
    shift_slot,
)
from .errors import InputError
from .yaml import dumps

logger = logging.getLogger("timelyrec")

PLANTABLE = (HOUR, DAY_OF_WEEK)
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY

# Monday 2020-01-06 00:00 UTC
DEFAULT_START = 1578268800
# 1970-01-05, the first Monday 00:00 UTC after the epoch
FIRST_MONDAY = 4 * SECONDS_PER_DAY


@dataclass
class SyntheticSpec:
    n_users: int = 200
    n_items: int = 100
    interactions_per_user: int = 50
    favorites: int = 5
    granularities: tuple = (HOUR, DAY_OF_WEEK)
    preferred_slots: int = 1
    jitter: int = 1
    weeks: int = 52
    start: int = DEFAULT_START
    n_trends: int = 0
    trend_share: float = 0.1
    trend_decay_days: float = 14.0
    seed: int = 42

    def __post_init__(self):
        self.granularities = tuple(self.granularities)
        if self.n_users < 1 or self.n_items < 1 or self.interactions_per_user < 1:
            raise InputError("need at least one user, item and interaction per user")
        if not 1 <= self.favorites <= self.n_items:
            raise InputError(f"favorites must lie in [1, {self.n_items}], got {self.favorites}")
        if self.preferred_slots < 1:
            raise InputError("every planted granularity needs at least one preferred slot")
        if self.weeks < 1 or self.start < 0:
            raise InputError("need weeks >= 1 and a non-negative start")
        offset = (self.start - FIRST_MONDAY) % SECONDS_PER_WEEK
        if offset:
            raise InputError(
                "start must fall on a Monday 00:00 UTC, e.g. "
                f"{self.start + SECONDS_PER_WEEK - offset}, got {self.start}"
            )
        for g in self.granularities:
            if g not in PLANTABLE:
                raise InputError(f"can only plant preferences for {PLANTABLE}, not {g!r}")
            if self.preferred_slots > SLOT_COUNTS[g]:
                raise InputError(f"{g} has only {SLOT_COUNTS[g]} slots")
            if not 0 <= self.jitter <= max_radius(g):
                raise InputError(f"jitter {self.jitter} out of range for {g}")
        if self.n_trends and not 0 < self.trend_share < 1:
            raise InputError(f"trend_share must lie in (0, 1), got {self.trend_share}")
        if self.n_trends > self.n_items:
            raise InputError("more trend items than items")

    def to_dict(self):
        values = asdict(self)
        values["granularities"] = list(self.granularities)
        return values


def planted_distribution(preferred, granularity, jitter):
    """Probability of every slot of granularity given the preferred slots and jitter"""
    probs = np.zeros(SLOT_COUNTS[granularity])
    for slot in preferred:
        for offset in range(-jitter, jitter + 1):
            probs[shift_slot(slot, offset, granularity)] += 1.0
    return probs / probs.sum()


def _slot(rng, preferred, granularity, jitter):
    slot = preferred[rng.integers(len(preferred))]
    return int(shift_slot(slot, int(rng.integers(-jitter, jitter + 1)), granularity))


def generate(spec):
    """
    Return (frame of user, item, timestamp rows, ground truth dict).

    The ground truth maps every user id to its favourite items and each
    favourite's preferred slots per granularity.
    """
    rng = np.random.default_rng(spec.seed)
    end = spec.start + spec.weeks * SECONDS_PER_WEEK
    trends = []
    for item in rng.choice(spec.n_items, spec.n_trends, replace=False):
        onset = int(rng.integers(spec.start, end))
        trends.append({"item": f"i{item}", "onset": onset})

    rows = []
    truth = {}
    for u in range(spec.n_users):
        user = f"u{u}"
        favorites = rng.choice(spec.n_items, spec.favorites, replace=False)
        planted = {}
        for item in favorites:
            planted[f"i{item}"] = {
                g: sorted(
                    int(s)
                    for s in rng.choice(SLOT_COUNTS[g], spec.preferred_slots, replace=False)
                )
                for g in spec.granularities
            }
        truth[user] = planted
        names = list(planted)
        for _ in range(spec.interactions_per_user):
            if trends and rng.random() < spec.trend_share:
                trend = trends[rng.integers(len(trends))]
                delay = rng.exponential(spec.trend_decay_days * SECONDS_PER_DAY)
                rows.append((user, trend["item"], int(min(trend["onset"] + delay, end - 1))))
                continue
            item = names[rng.integers(len(names))]
            prefs = planted[item]
            if DAY_OF_WEEK in prefs:
                day = _slot(rng, prefs[DAY_OF_WEEK], DAY_OF_WEEK, spec.jitter)
            else:
                day = int(rng.integers(7))
            if HOUR in prefs:
                hour = _slot(rng, prefs[HOUR], HOUR, spec.jitter)
            else:
                hour = int(rng.integers(24))
            week = int(rng.integers(spec.weeks))
            t = (
                spec.start
                + week * SECONDS_PER_WEEK
                + day * SECONDS_PER_DAY
                + hour * SECONDS_PER_HOUR
                + int(rng.integers(SECONDS_PER_HOUR))
            )
            rows.append((user, item, int(t)))

    frame = pd.DataFrame(rows, columns=["user", "item", "timestamp"])
    ground_truth = {
        "spec": spec.to_dict(),
        "trends": [dict(t, decay_days=spec.trend_decay_days) for t in trends],
        "users": truth,
    }
    return frame, ground_truth


def truth_path(path):
    return f"{path}.truth.yaml"


def write_synthetic(spec, path):
    """Write the interaction TSV to path and its ground truth next to it"""
    frame, truth = generate(spec)
    frame.to_csv(path, sep="\t", header=False, index=False)
    with open(truth_path(path), "w", encoding="utf-8") as f:
        f.write(dumps(truth))
    logger.info(
        "Wrote %d interactions of %d users to %s", len(frame), spec.n_users, path
    )
    return frame, truth
