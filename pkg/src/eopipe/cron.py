"""Five-field crontab patterns and next-fire-time computation (UTC)."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

# (name, low, high) for minute, hour, day-of-month, month, day-of-week (0=Sunday)
FIELDS = (
    ("minute", 0, 59),
    ("hour", 0, 23),
    ("day-of-month", 1, 31),
    ("month", 1, 12),
    ("day-of-week", 0, 6),
)

# Search horizon for next_fire_time; a leap-day pattern always fires within it.
HORIZON = timedelta(days=1827)


class CronError(ValueError):
    """Raised for a pattern that does not parse or has an empty field."""


class NoFireWithinHorizon(LookupError):
    """The pattern never matches within ``HORIZON`` of the start instant."""


def _parse_int(text: str, field: str, low: int, high: int) -> int:
    if not text.isdigit():
        raise CronError(f"{field}: {text!r} is not a number")
    value = int(text)
    if not low <= value <= high:
        raise CronError(f"{field}: {value} outside {low}-{high}")
    return value


def _parse_field(text: str, field: str, low: int, high: int) -> frozenset[int]:
    values: set[int] = set()
    for part in text.split(","):
        if not part:
            raise CronError(f"{field}: empty list element in {text!r}")
        base, slash, step_text = part.partition("/")
        step = 1
        if slash:
            if not step_text.isdigit() or int(step_text) == 0:
                raise CronError(f"{field}: bad step {step_text!r}")
            step = int(step_text)
        if base == "*":
            start, stop = low, high
        elif "-" in base:
            a, _, b = base.partition("-")
            start, stop = _parse_int(a, field, low, high), _parse_int(b, field, low, high)
            if start > stop:
                raise CronError(f"{field}: descending range {base!r}")
        else:
            if slash:
                raise CronError(f"{field}: step needs '*' or a range, got {part!r}")
            start = stop = _parse_int(base, field, low, high)
        values.update(range(start, stop + 1, step))
    return frozenset(values)


@dataclass(frozen=True)
class CronPattern:
    text: str
    minutes: frozenset[int]
    hours: frozenset[int]
    days: frozenset[int]
    months: frozenset[int]
    weekdays: frozenset[int]

    @classmethod
    def parse(cls, text: str) -> "CronPattern":
        parts = text.split()
        if len(parts) != 5:
            raise CronError(f"expected 5 fields, got {len(parts)}")
        sets = [_parse_field(p, name, lo, hi) for p, (name, lo, hi) in zip(parts, FIELDS)]
        return cls(" ".join(parts), *sets)

    @property
    def days_restricted(self) -> bool:
        return len(self.days) != 31

    @property
    def weekdays_restricted(self) -> bool:
        return len(self.weekdays) != 7

    def matches_day(self, day: datetime) -> bool:
        if day.month not in self.months:
            return False
        dom = day.day in self.days
        dow = (day.isoweekday() % 7) in self.weekdays
        if self.days_restricted and self.weekdays_restricted:
            return dom or dow
        return dom and dow

    def matches(self, t: datetime) -> bool:
        return t.minute in self.minutes and t.hour in self.hours and self.matches_day(t)

    def __str__(self) -> str:
        return self.text


def _as_pattern(p: CronPattern | str) -> CronPattern:
    return p if isinstance(p, CronPattern) else CronPattern.parse(p)


def next_fire_time(pattern: CronPattern | str, after: datetime) -> datetime:
    """Smallest minute-aligned UTC instant strictly after ``after`` matching ``pattern``.

    Day-of-month and day-of-week are OR-ed when both are restricted (their
    value set is not the full range), otherwise AND-ed.
    """
    p = _as_pattern(pattern)
    after = after.astimezone(timezone.utc)
    limit = after + HORIZON
    t = after.replace(second=0, microsecond=0) + timedelta(minutes=1)
    minutes, hours = sorted(p.minutes), sorted(p.hours)
    while t <= limit:
        if not p.matches_day(t):
            t = t.replace(hour=0, minute=0) + timedelta(days=1)
            continue
        if t.hour not in p.hours:
            later = [h for h in hours if h > t.hour]
            if not later:
                t = t.replace(hour=0, minute=0) + timedelta(days=1)
            else:
                t = t.replace(hour=later[0], minute=minutes[0])
            continue
        if t.minute not in p.minutes:
            later = [m for m in minutes if m > t.minute]
            if not later:
                t = t.replace(minute=0) + timedelta(hours=1)
            else:
                t = t.replace(minute=later[0])
            continue
        return t
    raise NoFireWithinHorizon(f"{p.text!r} does not fire within {HORIZON.days} days of {after.isoformat()}")
