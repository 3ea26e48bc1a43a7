"""
Calendar features of epoch timestamps.

Timestamps are decomposed into period slots (month, day of the week,
day of the month, hour) at a fixed UTC offset. All arithmetic goes through
numpy's datetime64, which is proleptic Gregorian and never consults the
host timezone database.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, InputError

MONTH = "month"
DAY_OF_WEEK = "day_of_week"
DATE = "date"
HOUR = "hour"

GRANULARITIES = (MONTH, DAY_OF_WEEK, DATE, HOUR)

SLOT_COUNTS = {MONTH: 12, DAY_OF_WEEK: 7, DATE: 31, HOUR: 24}

DEFAULT_WINDOW_RADIUS = {MONTH: 2, DAY_OF_WEEK: 1, DATE: 6, HOUR: 5}

SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400

_MONTH_NAMES = (
    "Jan",
    "Feb",
    "Mar",
    "Apr",
    "May",
    "Jun",
    "Jul",
    "Aug",
    "Sep",
    "Oct",
    "Nov",
    "Dec",
)
_DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class CalendarFields(NamedTuple):
    """Slot indices of one timestamp. day_of_week 0 is Monday, date 0 is the 1st."""

    month: int
    day_of_week: int
    date: int
    hour: int

    def slot(self, granularity):
        return getattr(self, granularity)


@dataclass(frozen=True)
class GranularityConfig:
    """Which granularities are enabled and how far gradual attention looks around each"""

    enabled: tuple = GRANULARITIES
    window_radius: dict = field(default_factory=lambda: dict(DEFAULT_WINDOW_RADIUS))

    def __post_init__(self):
        if not self.enabled:
            raise ContractError("At least one granularity must be enabled")
        for g in self.enabled:
            if g not in SLOT_COUNTS:
                raise ContractError(f"Unknown granularity {g!r}")
            radius = self.radius(g)
            if radius < 0 or radius > max_radius(g):
                raise ContractError(
                    f"window radius {radius} for {g} outside [0, {max_radius(g)}]"
                )

    def radius(self, granularity):
        return int(self.window_radius.get(granularity, 0))


def max_radius(granularity):
    """Largest radius whose window does not wrap onto itself"""
    return (SLOT_COUNTS[granularity] - 1) // 2


def decompose_many(timestamps, offset=0):
    """
    Decompose an array of epoch seconds into slot index arrays.

    Returns a dict mapping each granularity name to an int64 array shaped
    like timestamps.
    """
    adjusted = np.asarray(timestamps, dtype=np.int64) + int(offset)
    if adjusted.size and adjusted.min() < 0:
        raise InputError(
            f"Timestamp {int(adjusted.min()) - int(offset)} is negative at offset {offset}"
        )
    seconds = adjusted.astype("datetime64[s]")
    months = seconds.astype("datetime64[M]")
    days = seconds.astype("datetime64[D]")
    return {
        MONTH: months.astype(np.int64) % 12,
        # 1970-01-01 was a Thursday
        DAY_OF_WEEK: (days.astype(np.int64) + 3) % 7,
        DATE: (days - months.astype("datetime64[D]")).astype(np.int64),
        HOUR: (adjusted // SECONDS_PER_HOUR) % 24,
    }


def decompose(t, offset=0):
    """Decompose one timestamp into its CalendarFields"""
    slots = decompose_many(np.array([t]), offset)
    return CalendarFields(*(int(slots[g][0]) for g in GRANULARITIES))


def shift_slot(slot, n, granularity):
    """Cyclically shift slot index (or array of indices) by n slots"""
    return (slot + n) % SLOT_COUNTS[granularity]


def temporal_encoding_many(timestamps, dim):
    """
    Sinusoidal encoding of timestamps measured in hours.

    Returns an array of shape timestamps.shape + (dim,). Even entries are
    sin(h / 10000^(j/dim)), odd entries cos(h / 10000^((j-1)/dim)).
    """
    if dim < 1:
        raise ContractError(f"encoding dimension must be >= 1, got {dim}")
    hours = np.asarray(timestamps, dtype=np.float64) / SECONDS_PER_HOUR
    j = np.arange(dim)
    exponents = (j - j % 2) / dim
    angles = hours[..., None] / np.power(10000.0, exponents)
    return np.where(j % 2 == 0, np.sin(angles), np.cos(angles))


def temporal_encoding(t, dim):
    """Sinusoidal encoding of one timestamp, a vector of length dim"""
    return temporal_encoding_many(np.array(t, dtype=np.float64), dim)


def slot_label(granularity, slot):
    """Human readable name of a slot, e.g. 'Feb', 'Sun', '16', '12 AM'"""
    slot = int(slot)
    if granularity == MONTH:
        return _MONTH_NAMES[slot]
    if granularity == DAY_OF_WEEK:
        return _DAY_NAMES[slot]
    if granularity == DATE:
        return str(slot + 1)
    if granularity == HOUR:
        suffix = "AM" if slot < 12 else "PM"
        return f"{(slot % 12) or 12} {suffix}"
    raise ContractError(f"Unknown granularity {granularity!r}")


def format_timestamp(t, offset=0):
    """ISO-like civil time of t at offset, e.g. '2020-01-06 08:00:00'"""
    return str(np.datetime64(int(t) + int(offset), "s")).replace("T", " ")
