"""Uniformly sampled current signals and calendar handling.

A :class:`TimeSeries` is a label, a start timestamp (whole minutes), a step
in minutes and a vector of non-negative current readings in amps.  The
functions here cover the ingestion path: CSV parsing, linear resampling to a
one-minute grid, splitting into calendar days and dropping closed days, and
summing per-device signals into an aggregate.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import CsvFormatError, ValidationError

MINUTES_PER_DAY = 1440

_CSV_HEADER = ("timestamp", "amps")


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled, non-negative current signal.

    Attributes
    ----------
    start_time:
        Timestamp of the first sample, minute precision, timezone naive.
    step:
        Sampling interval in whole minutes (>= 1).
    values:
        Readings in amps; finite and >= 0.  Stored read-only.
    label:
        Name of the signal source, e.g. a device name or ``"aggregate"``.
    """

    start_time: datetime
    step: int
    values: np.ndarray
    label: str

    def __post_init__(self) -> None:
        if self.start_time.second != 0 or self.start_time.microsecond != 0:
            raise ValidationError("start_time must have whole-minute precision")
        if not isinstance(self.step, (int, np.integer)) or self.step < 1:
            raise ValidationError(f"step must be a positive integer, got {self.step!r}")
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("values must be a non-empty 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValidationError("values must be finite")
        if np.any(values < 0.0):
            raise ValidationError("negative current readings are not allowed")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "step", int(self.step))
        if not self.label:
            raise ValidationError("label must be non-empty")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_time(self) -> datetime:
        """Timestamp of the last sample."""
        return self.start_time + timedelta(minutes=(len(self) - 1) * self.step)

    def timestamp(self, index: int) -> datetime:
        return self.start_time + timedelta(minutes=index * self.step)

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        """Copy of this series with the readings replaced."""
        return TimeSeries(self.start_time, self.step, values, self.label)


@dataclass(frozen=True)
class WorkCalendar:
    """Which calendar days count as closed (no monitoring expected).

    ``closed_weekdays`` uses Python's convention: Monday is 0, Sunday is 6.
    """

    closed_weekdays: frozenset[int] = frozenset()
    closed_dates: frozenset[date] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if any(d < 0 or d > 6 for d in self.closed_weekdays):
            raise ValidationError("closed_weekdays entries must be in 0..6")

    def is_closed(self, day: date) -> bool:
        return day.weekday() in self.closed_weekdays or day in self.closed_dates


#: Shops closed on Sundays only; the default for ingestion.
SUNDAYS_CLOSED = WorkCalendar(closed_weekdays=frozenset({6}))

#: Calendar with no closed days at all.
ALWAYS_OPEN = WorkCalendar()


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        stamp = datetime.fromisoformat(text.strip())
    except ValueError:
        raise CsvFormatError(f"unparseable timestamp {text!r}", row=row) from None
    if stamp.tzinfo is not None:
        raise CsvFormatError("timezone-aware timestamps are not supported", row=row)
    if stamp.second != 0 or stamp.microsecond != 0:
        raise CsvFormatError("timestamps must have whole-minute precision", row=row)
    return stamp


def parse_csv(stream: IO[str] | Iterable[str], label: str) -> TimeSeries:
    """Parse a ``timestamp,amps`` CSV stream into a :class:`TimeSeries`.

    The first row must be the header.  Timestamps must be ISO-8601 at minute
    precision and strictly increasing; readings must be finite and
    non-negative.  The sampling step is inferred as the most common gap
    between consecutive rows (ties broken toward the smaller gap); rows with
    other gaps are kept and treated as if they sat on that grid.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError("empty file") from None
    if tuple(h.strip().lower() for h in header) != _CSV_HEADER:
        raise CsvFormatError(
            f"expected header 'timestamp,amps', got {','.join(header)!r}", row=0
        )

    stamps: list[datetime] = []
    readings: list[float] = []
    for row_index, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise CsvFormatError(f"expected 2 fields, got {len(row)}", row=row_index)
        stamp = _parse_timestamp(row[0], row_index)
        try:
            amps = float(row[1])
        except ValueError:
            raise CsvFormatError(f"unparseable reading {row[1]!r}", row=row_index) from None
        if not np.isfinite(amps):
            raise CsvFormatError("reading must be finite", row=row_index)
        if amps < 0.0:
            raise CsvFormatError(f"negative reading {amps}", row=row_index)
        if stamps and stamp <= stamps[-1]:
            raise CsvFormatError(
                f"timestamps must be strictly increasing ({stamp.isoformat()} "
                f"follows {stamps[-1].isoformat()})",
                row=row_index,
            )
        stamps.append(stamp)
        readings.append(amps)

    if not stamps:
        raise CsvFormatError("no data rows")

    if len(stamps) == 1:
        step = 1
    else:
        gaps = Counter(
            int((b - a).total_seconds() // 60) for a, b in zip(stamps, stamps[1:])
        )
        most = max(gaps.values())
        step = min(g for g, c in gaps.items() if c == most)
    return TimeSeries(stamps[0], step, np.array(readings), label)


def load_csv(path: str | Path, label: str | None = None) -> TimeSeries:
    """Read a CSV file; the label defaults to the file stem."""
    path = Path(path)
    with path.open("r", newline="") as handle:
        return parse_csv(handle, label or path.stem)


def save_csv(ts: TimeSeries, path: str | Path) -> None:
    """Write ``timestamp,amps`` rows for every sample of ``ts``."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_HEADER)
        for k, v in enumerate(ts.values):
            writer.writerow([ts.timestamp(k).isoformat(timespec="minutes"), repr(float(v))])


def interpolate_to_minutes(ts: TimeSeries) -> TimeSeries:
    """Linearly resample a series onto a one-minute grid.

    Samples that already sit on the grid are preserved exactly; no
    extrapolation happens beyond the first or last sample.  A series already
    at one-minute resolution is returned unchanged, so the operation is
    idempotent.
    """
    if ts.step == 1:
        return ts
    if len(ts) < 2:
        raise ValidationError("need at least 2 samples to interpolate")
    old_minutes = np.arange(len(ts), dtype=np.float64) * ts.step
    total = int(old_minutes[-1])
    new_minutes = np.arange(total + 1, dtype=np.float64)
    values = np.interp(new_minutes, old_minutes, ts.values)
    return TimeSeries(ts.start_time, 1, values, ts.label)


def _day_blocks(ts: TimeSeries) -> Iterable[tuple[date, int]]:
    """Yield (calendar date, start index) for each complete in-series day."""
    minute_of_day = ts.start_time.hour * 60 + ts.start_time.minute
    offset = (-minute_of_day) % MINUTES_PER_DAY
    k = offset
    while k + MINUTES_PER_DAY <= len(ts):
        yield (ts.start_time + timedelta(minutes=k)).date(), k
        k += MINUTES_PER_DAY


def filter_closed_days(ts: TimeSeries, calendar: WorkCalendar) -> list[TimeSeries]:
    """Split a one-minute series into whole days, dropping closed ones.

    Only complete midnight-to-midnight blocks of 1440 samples are returned;
    partial days at either end are discarded.  Days are independent series:
    nothing is concatenated across a dropped day.
    """
    if ts.step != 1:
        raise ValidationError("day filtering expects a one-minute series")
    out: list[TimeSeries] = []
    for day, k in _day_blocks(ts):
        if calendar.is_closed(day):
            continue
        block = ts.values[k : k + MINUTES_PER_DAY]
        out.append(TimeSeries(datetime.combine(day, time()), 1, block, ts.label))
    return out


def split_days(ts: TimeSeries) -> list[TimeSeries]:
    """All complete calendar days of a one-minute series."""
    return filter_closed_days(ts, ALWAYS_OPEN)


def sum_signals(series: Sequence[TimeSeries]) -> TimeSeries:
    """Sample-wise sum of per-device signals, labelled ``"aggregate"``.

    Inputs must share ``step == 1`` and a common length.  They are folded in
    ascending label order so the result does not depend on argument order;
    the start time is taken from the first series in that order.
    """
    if not series:
        raise ValidationError("nothing to sum")
    ordered = sorted(series, key=lambda s: s.label)
    first = ordered[0]
    if any(s.step != 1 for s in ordered):
        raise ValidationError("all inputs must be at one-minute resolution")
    if any(len(s) != len(first) for s in ordered):
        raise ValidationError("all inputs must have the same length")
    if any(s.start_time != first.start_time for s in ordered):
        raise ValidationError("all inputs must start at the same time")
    total = ordered[0].values.copy()
    for s in ordered[1:]:
        total += s.values
    return TimeSeries(first.start_time, 1, total, "aggregate")
