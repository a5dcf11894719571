"""Recurrence quantification measures over sliding signal windows.

Five measures are extracted per window from its recurrence matrix, all with
the main diagonal (self pairs) excluded:

* ``rec``  - percentage of off-diagonal pairs that are recurrent;
* ``det``  - percentage of those points lying on counted diagonal runs;
* ``ent``  - Shannon entropy in bits of the diagonal run length
  distribution, restricted to runs that do not touch a window border
  (truncated runs carry no length information);
* ``lam``  - percentage of recurrent points lying on counted vertical runs;
* ``tt``   - mean length of the counted vertical runs.

Runs that touch the border of their diagonal band or vertical span are
truncations of longer structures, so they count toward ``det``/``lam`` at
any length; interior runs must reach ``lmin``.  A fully recurrent window
therefore scores ``rec = det = lam = 100`` with ``ent = 0`` exactly.

Windows slide over a day with a configurable stride; each emitted row is
stamped with the sample index just past its window, plus an on/off flag
(window mean above the on threshold).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from ._kernels import day_rqa
from .errors import ValidationError
from .recurrence import RecurrenceMatrix
from .timeseries import TimeSeries

FEATURE_NAMES = ("rec", "det", "ent", "lam", "tt")

_CSV_COLUMNS = ("window_end", "rec", "det", "ent", "lam", "tt", "is_on", "label")


@dataclass(frozen=True)
class RqaParams:
    """Parameters shared by every window of a feature extraction run."""

    epsilon: float = 6.0
    window: int = 80
    lmin: int = 2
    step: int = 1
    on_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValidationError("epsilon must be finite and >= 0")
        if self.window < 2:
            raise ValidationError("window must be >= 2 samples")
        if self.lmin < 2:
            raise ValidationError("lmin must be >= 2")
        if self.step < 1:
            raise ValidationError("step must be >= 1")
        if not np.isfinite(self.on_threshold) or self.on_threshold < 0:
            raise ValidationError("on_threshold must be finite and >= 0")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "window": self.window,
            "lmin": self.lmin,
            "step": self.step,
            "on_threshold": self.on_threshold,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RqaParams":
        return cls(
            epsilon=float(data["epsilon"]),
            window=int(data["window"]),
            lmin=int(data["lmin"]),
            step=int(data["step"]),
            on_threshold=float(data["on_threshold"]),
        )


@dataclass(frozen=True)
class RqaFeatures:
    """The five measures of a single window."""

    rec: float
    det: float
    ent: float
    lam: float
    tt: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rec, self.det, self.ent, self.lam, self.tt])


@dataclass(frozen=True)
class LineLengthDistribution:
    """Counts of maximal run lengths at or above ``lmin``."""

    counts: Mapping[int, int]
    lmin: int

    def __post_init__(self) -> None:
        counts = {int(k): int(v) for k, v in self.counts.items() if v > 0}
        if any(k < self.lmin for k in counts):
            raise ValidationError("distribution contains lengths below lmin")
        object.__setattr__(self, "counts", counts)

    @property
    def total_lines(self) -> int:
        return sum(self.counts.values())

    @property
    def total_points(self) -> int:
        return sum(k * v for k, v in self.counts.items())

    def mean_length(self) -> float:
        lines = self.total_lines
        return self.total_points / lines if lines else 0.0


def line_entropy_bits(dist: LineLengthDistribution) -> float:
    """Shannon entropy of the run length distribution, in bits.

    Normalised by line count, not by points: ``k`` equally frequent lengths
    give exactly ``log2(k)``; an empty or single-length distribution gives 0.
    """
    total = dist.total_lines
    if total == 0:
        return 0.0
    ent = 0.0
    for length in sorted(dist.counts):
        p = dist.counts[length] / total
        ent -= p * math.log2(p)
    return ent


def _runs(cells: np.ndarray) -> Iterator[tuple[int, int]]:
    """Yield (start, length) of maximal runs of truth in a 1-D bool array."""
    run = 0
    for t, cell in enumerate(cells):
        if cell:
            run += 1
        if not cell or t == len(cells) - 1:
            if run:
                end = t - 1 if not cell else t
                yield end - run + 1, run
                run = 0


def diagonal_lines(matrix: RecurrenceMatrix, lmin: int = 2) -> LineLengthDistribution:
    """Length counts of diagonal runs in the upper triangle.

    Diagonals parallel to the (excluded) main diagonal are scanned one lag at
    a time; the lower triangle mirrors the upper one by symmetry and is not
    scanned.  Runs shorter than ``lmin`` are not counted.
    """
    if lmin < 2:
        raise ValidationError("lmin must be >= 2")
    entries = matrix.entries
    counts: dict[int, int] = {}
    for lag in range(1, matrix.size):
        for _, length in _runs(np.diagonal(entries, lag)):
            if length >= lmin:
                counts[length] = counts.get(length, 0) + 1
    return LineLengthDistribution(counts, lmin)


def vertical_lines(matrix: RecurrenceMatrix, lmin: int = 2) -> LineLengthDistribution:
    """Length counts of vertical runs over all columns.

    The main-diagonal cell is removed from each column first, splitting it
    into two independent spans.  Runs shorter than ``lmin`` are not counted.
    """
    if lmin < 2:
        raise ValidationError("lmin must be >= 2")
    entries = matrix.entries
    w = matrix.size
    counts: dict[int, int] = {}
    for j in range(w):
        for span in (entries[:j, j], entries[j + 1 :, j]):
            for _, length in _runs(span):
                if length >= lmin:
                    counts[length] = counts.get(length, 0) + 1
    return LineLengthDistribution(counts, lmin)


def rqa_features(window, epsilon: float, lmin: int = 2) -> RqaFeatures:
    """The five measures for one window of scalar readings."""
    values = np.ascontiguousarray(window, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValidationError("window must be 1-D with at least 2 samples")
    if not np.all(np.isfinite(values)):
        raise ValidationError("window values must be finite")
    if not np.isfinite(epsilon) or epsilon < 0:
        raise ValidationError("epsilon must be finite and >= 0")
    if lmin < 2:
        raise ValidationError("lmin must be >= 2")
    row = day_rqa(values, values.size, 1, float(epsilon), int(lmin))[0]
    return RqaFeatures(*(float(x) for x in row))


@dataclass(frozen=True)
class RqaFeatureSeries:
    """Per-window features of one signal, in window order.

    ``window_end`` holds the sample index just past each window (the first
    full window of a day ends at index ``window``).  ``features`` is an
    (n, 5) array in :data:`FEATURE_NAMES` order and ``is_on`` flags windows
    whose mean reading exceeded the on threshold.
    """

    label: str
    params: RqaParams
    window_end: np.ndarray
    features: np.ndarray
    is_on: np.ndarray

    def __post_init__(self) -> None:
        window_end = np.ascontiguousarray(self.window_end, dtype=np.int64)
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        is_on = np.ascontiguousarray(self.is_on, dtype=bool)
        if features.ndim != 2 or features.shape[1] != 5:
            raise ValidationError("features must have shape (n, 5)")
        if window_end.shape != (features.shape[0],) or is_on.shape != window_end.shape:
            raise ValidationError("window_end, features and is_on lengths differ")
        if window_end.size and np.any(np.diff(window_end) <= 0):
            raise ValidationError("window_end must be strictly increasing")
        for array in (window_end, features, is_on):
            array.setflags(write=False)
        object.__setattr__(self, "window_end", window_end)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "is_on", is_on)

    def __len__(self) -> int:
        return int(self.window_end.size)

    def rows(self) -> Iterator[tuple[int, RqaFeatures, bool]]:
        for k in range(len(self)):
            yield (
                int(self.window_end[k]),
                RqaFeatures(*(float(x) for x in self.features[k])),
                bool(self.is_on[k]),
            )

    def on_features(self) -> np.ndarray:
        """Feature rows of on-windows only."""
        return self.features[self.is_on]


def sliding_rqa(day: TimeSeries, params: RqaParams = RqaParams()) -> RqaFeatureSeries:
    """Extract features for every stride-aligned trailing window of a day.

    Windows cover samples ``[t - window, t)`` for ``t = window,
    window + step, ...``; a series of length n yields
    ``(n - window) // step + 1`` rows.
    """
    if len(day) < params.window:
        raise ValidationError(
            f"series of length {len(day)} is shorter than the window ({params.window})"
        )
    values = day.values
    rows = day_rqa(
        values, params.window, params.step, float(params.epsilon), int(params.lmin)
    )
    n_rows = rows.shape[0]
    window_end = params.window + params.step * np.arange(n_rows, dtype=np.int64)
    csum = np.concatenate(([0.0], np.cumsum(values)))
    means = (csum[window_end] - csum[window_end - params.window]) / params.window
    return RqaFeatureSeries(day.label, params, window_end, rows, means > params.on_threshold)


def concat_feature_series(parts: Sequence[RqaFeatureSeries]) -> RqaFeatureSeries:
    """Join per-day feature series into one, renumbering window indices.

    Each part's indices are offset by the combined length of the parts before
    it, so the result stays strictly increasing.  All parts must share label
    and parameters.
    """
    if not parts:
        raise ValidationError("nothing to concatenate")
    first = parts[0]
    if any(p.label != first.label or p.params != first.params for p in parts):
        raise ValidationError("parts disagree on label or parameters")
    ends, feats, flags = [], [], []
    offset = 0
    for part in parts:
        ends.append(part.window_end + offset)
        feats.append(part.features)
        flags.append(part.is_on)
        offset += int(part.window_end[-1]) if len(part) else 0
    return RqaFeatureSeries(
        first.label,
        first.params,
        np.concatenate(ends),
        np.vstack(feats),
        np.concatenate(flags),
    )


def write_features_csv(series: Iterable[RqaFeatureSeries], path: str | Path) -> None:
    """Export feature rows as ``window_end,rec,det,ent,lam,tt,is_on,label``."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_COLUMNS)
        for fs in series:
            for k in range(len(fs)):
                writer.writerow(
                    [int(fs.window_end[k])]
                    + [repr(float(x)) for x in fs.features[k]]
                    + [int(fs.is_on[k]), fs.label]
                )


def read_features_csv(path: str | Path) -> dict[str, dict[str, list]]:
    """Read a feature CSV back into per-label column lists (for checking)."""
    out: dict[str, dict[str, list]] = {}
    with Path(path).open("r", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != _CSV_COLUMNS:
            raise ValidationError(f"unexpected feature CSV columns: {reader.fieldnames}")
        for row in reader:
            slot = out.setdefault(
                row["label"], {"window_end": [], "features": [], "is_on": []}
            )
            slot["window_end"].append(int(row["window_end"]))
            slot["features"].append([float(row[name]) for name in FEATURE_NAMES])
            slot["is_on"].append(bool(int(row["is_on"])))
    return out
