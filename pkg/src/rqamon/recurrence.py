"""Distance and recurrence matrices for scalar signal windows.

Windows are compared sample against sample with the absolute difference in
amps; a pair counts as recurrent when that distance does not exceed the
tolerance ``epsilon``.  The boundary case is inclusive: a distance exactly
equal to ``epsilon`` is recurrent.  No phase-space embedding is applied; the
raw one-dimensional readings are compared directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DistanceMatrix:
    """Pairwise absolute differences of a window, shape (W, W)."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError("distance matrix must be square")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])


@dataclass(frozen=True)
class RecurrenceMatrix:
    """Thresholded distance matrix: True where a pair is recurrent."""

    entries: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        entries = np.ascontiguousarray(self.entries, dtype=bool)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError("recurrence matrix must be square")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])


def _as_window(window) -> np.ndarray:
    values = np.ascontiguousarray(window, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValidationError("window must be 1-D with at least 2 samples")
    if not np.all(np.isfinite(values)):
        raise ValidationError("window values must be finite")
    return values


def distance_matrix(window) -> DistanceMatrix:
    """All-pairs |y_i - y_j| for a window of scalar readings."""
    values = _as_window(window)
    return DistanceMatrix(np.abs(values[:, None] - values[None, :]))


def recurrence_matrix(
    window_or_distances: DistanceMatrix | np.ndarray, epsilon: float
) -> RecurrenceMatrix:
    """Threshold a distance matrix at ``epsilon`` (inclusive).

    Accepts either a precomputed :class:`DistanceMatrix` or a raw window,
    in which case the distances are computed first.
    """
    if not np.isfinite(epsilon) or epsilon < 0:
        raise ValidationError("epsilon must be finite and >= 0")
    distances = window_or_distances
    if not isinstance(distances, DistanceMatrix):
        distances = distance_matrix(distances)
    return RecurrenceMatrix(distances.entries <= epsilon, float(epsilon))


def write_recurrence_csv(matrix: RecurrenceMatrix, path: str | Path) -> None:
    """Debug export: dump a recurrence matrix as a dense 0/1 CSV grid."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        for row in matrix.entries:
            writer.writerow(row.astype(int).tolist())
