"""Piecewise-constant, non-increasing interaction rates lambda(t).

Segments are half-open intervals ``[start, end)``: a time sitting exactly on
a boundary gets the value of the later segment. Only the last segment may
have an infinite duration.
"""

import bisect
import math
from dataclasses import dataclass

from simkv.errors import ConfigurationError


@dataclass(frozen=True)
class LambdaSchedule:
    segments: tuple  # ((duration, value), ...)

    def __post_init__(self):
        segs = tuple((float(dur), float(val)) for dur, val in self.segments)
        if not segs:
            raise ConfigurationError("schedule needs at least one segment")
        for i, (dur, val) in enumerate(segs):
            if not val > 0 or math.isinf(val):
                raise ConfigurationError(f"segment {i}: value must be positive and finite, got {val}")
            if not dur > 0:
                raise ConfigurationError(f"segment {i}: duration must be positive, got {dur}")
            if math.isinf(dur) and i != len(segs) - 1:
                raise ConfigurationError(f"segment {i}: only the last segment may be infinite")
            if i and val > segs[i - 1][1]:
                raise ConfigurationError(f"segment {i}: values must be non-increasing ({val} > {segs[i - 1][1]})")
        object.__setattr__(self, "segments", segs)
        ends, acc = [], 0.0
        for dur, _ in segs:
            acc += dur
            ends.append(acc)
        object.__setattr__(self, "_ends", tuple(ends))

    @property
    def total_duration(self):
        """Sum of the durations (``inf`` when the tail is infinite)."""
        return self._ends[-1]

    @property
    def finite_duration(self):
        return sum(dur for dur, _ in self.segments if math.isfinite(dur))

    @property
    def max_value(self):
        return self.segments[0][1]

    @property
    def breakpoints(self):
        """Start times of segments after the first."""
        return self._ends[:-1]

    def covers(self, t):
        return t < self.total_duration

    def __call__(self, t):
        return value_at(self, t)

    def to_records(self):
        """Config-file form: list of ``{"duration", "value"}`` with ``"inf"`` for an open tail."""
        return [
            {"duration": "inf" if math.isinf(dur) else dur, "value": val}
            for dur, val in self.segments
        ]

    @classmethod
    def from_records(cls, records):
        segs = []
        for rec in records:
            dur = rec["duration"]
            if isinstance(dur, str):
                if dur.strip().lower() not in ("inf", "infinity"):
                    raise ConfigurationError(f"bad duration {dur!r}; use a number or 'inf'")
                dur = math.inf
            segs.append((dur, rec["value"]))
        return cls(tuple(segs))


def value_at(schedule, t):
    if t < 0:
        raise ConfigurationError(f"time must be nonnegative, got {t}")
    i = bisect.bisect_right(schedule._ends, t)
    if i >= len(schedule.segments):
        raise ConfigurationError(
            f"t={t} lies beyond the schedule's total duration {schedule.total_duration}"
        )
    return schedule.segments[i][1]


def constant(lam):
    return LambdaSchedule(((math.inf, lam),))


def paper_annealing(first=2, last=11, base=4.0):
    """lambda = base**-i on consecutive windows of length base**i, i = first..last.

    The final value is held forever after the last window.
    """
    segs = [(base**i, base ** (-i)) for i in range(first, last + 1)]
    segs.append((math.inf, base ** (-last)))
    return LambdaSchedule(tuple(segs))
