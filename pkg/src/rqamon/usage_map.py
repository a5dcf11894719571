"""Density map of normal usage in the projected feature plane.

Training projections of every monitored state are histogrammed on a shared
grid; per state, the smallest set of highest-count cells holding at least a
quantile of that state's points is kept, and the union of the per-state
masks is the region of normal usage.  A monitored projection "crosses" the
map when it falls outside that region, either out of the grid's bounding box
entirely or into a cell that was not kept.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CompatibilityError, ValidationError
from .pca import Point2D

_FORMAT = "map-v1"


@dataclass(frozen=True)
class GridSpec:
    """Bounding box and resolution of the histogram grid."""

    min_c1: float
    max_c1: float
    min_c2: float
    max_c2: float
    cells_per_axis: int

    def __post_init__(self) -> None:
        if not (self.max_c1 > self.min_c1 and self.max_c2 > self.min_c2):
            raise ValidationError("grid bounding box must have positive extent")
        if self.cells_per_axis < 8:
            raise ValidationError("cells_per_axis must be >= 8")

    def cell_of(self, c1: float, c2: float) -> tuple[int, int] | None:
        """Cell indices of a point, or None when it lies outside the box.

        Cells are closed on their lower edge; the upper edge of the box
        belongs to the last cell.
        """
        if not (np.isfinite(c1) and np.isfinite(c2)):
            raise ValidationError("point coordinates must be finite")
        if c1 < self.min_c1 or c1 > self.max_c1 or c2 < self.min_c2 or c2 > self.max_c2:
            return None
        n = self.cells_per_axis
        i = min(int((c1 - self.min_c1) / (self.max_c1 - self.min_c1) * n), n - 1)
        j = min(int((c2 - self.min_c2) / (self.max_c2 - self.min_c2) * n), n - 1)
        return i, j


@dataclass(frozen=True)
class UsageMap:
    """Kept-cell masks over a grid; ``mask`` is the union over states."""

    grid: GridSpec
    mask: np.ndarray
    per_device_masks: Mapping[str, np.ndarray]
    mass_quantile: float
    model_id: str = ""

    def __post_init__(self) -> None:
        n = self.grid.cells_per_axis
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if mask.shape != (n, n):
            raise ValidationError("mask shape must match the grid")
        if not mask.any():
            raise ValidationError("usage map must keep at least one cell")
        per_device = {}
        union = np.zeros_like(mask)
        for label, m in self.per_device_masks.items():
            m = np.ascontiguousarray(m, dtype=bool)
            if m.shape != (n, n):
                raise ValidationError(f"mask for {label!r} does not match the grid")
            m.setflags(write=False)
            per_device[label] = m
            union |= m
        if per_device and not np.array_equal(union, mask):
            raise ValidationError("mask must be the union of the per-state masks")
        if not 0 < self.mass_quantile <= 1:
            raise ValidationError("mass_quantile must be in (0, 1]")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "per_device_masks", per_device)


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        array = np.asarray(points, dtype=np.float64)
    else:
        rows = [
            (p.c1, p.c2) if isinstance(p, Point2D) else (float(p[0]), float(p[1]))
            for p in points
        ]
        array = np.asarray(rows, dtype=np.float64)
    if array.ndim != 2 or array.shape[1] != 2:
        raise ValidationError("expected an (n, 2) array of plane points")
    if not np.all(np.isfinite(array)):
        raise ValidationError("plane points must be finite")
    return array


def _cell_indices(grid: GridSpec, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :meth:`GridSpec.cell_of`: (inside, i, j) arrays."""
    n = grid.cells_per_axis
    inside = (
        (pts[:, 0] >= grid.min_c1)
        & (pts[:, 0] <= grid.max_c1)
        & (pts[:, 1] >= grid.min_c2)
        & (pts[:, 1] <= grid.max_c2)
    )
    i = np.minimum(
        ((pts[:, 0] - grid.min_c1) / (grid.max_c1 - grid.min_c1) * n).astype(np.int64),
        n - 1,
    )
    j = np.minimum(
        ((pts[:, 1] - grid.min_c2) / (grid.max_c2 - grid.min_c2) * n).astype(np.int64),
        n - 1,
    )
    return inside, np.clip(i, 0, n - 1), np.clip(j, 0, n - 1)


def _quantile_mask(counts: np.ndarray, mass_quantile: float) -> np.ndarray:
    """Smallest set of highest-count cells covering the requested mass.

    Ties are kept whole: when a count tier is needed at all, every cell of
    that tier is included.
    """
    total = counts.sum()
    target = mass_quantile * total - 1e-9
    tiers = np.unique(counts[counts > 0])[::-1]
    covered = 0
    cut = tiers[0]
    for tier in tiers:
        cut = tier
        covered += tier * (counts == tier).sum()
        if covered >= target:
            break
    return (counts >= cut) & (counts > 0)


def _dilate(mask: np.ndarray) -> np.ndarray:
    """Grow a mask by one cell in the 8-neighbour sense."""
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def build_map(
    projections: Mapping[str, Sequence[Point2D] | np.ndarray],
    cells_per_axis: int = 100,
    mass_quantile: float = 0.95,
    margin_fraction: float = 0.05,
    dilate: bool = False,
    model_id: str = "",
) -> UsageMap:
    """Histogram training projections and keep each state's densest cells.

    The bounding box spans the pooled projections, expanded on every side by
    ``margin_fraction`` of that axis' extent.  Works best when every state
    contributes at least ``cells_per_axis`` points; an empty state is an
    error.
    """
    if not projections:
        raise ValidationError("no projections given")
    if not 0 < mass_quantile <= 1:
        raise ValidationError("mass_quantile must be in (0, 1]")
    if margin_fraction < 0:
        raise ValidationError("margin_fraction must be >= 0")
    arrays: dict[str, np.ndarray] = {}
    for label, pts in projections.items():
        array = _as_points(pts)
        if array.shape[0] == 0:
            raise ValidationError(f"no projections for state {label!r}")
        arrays[label] = array

    pooled = np.vstack(list(arrays.values()))
    lo = pooled.min(axis=0)
    hi = pooled.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, margin_fraction * span, 0.5)
    grid = GridSpec(
        float(lo[0] - pad[0]),
        float(hi[0] + pad[0]),
        float(lo[1] - pad[1]),
        float(hi[1] + pad[1]),
        cells_per_axis,
    )

    per_device: dict[str, np.ndarray] = {}
    for label in sorted(arrays):
        pts = arrays[label]
        inside, i, j = _cell_indices(grid, pts)
        counts = np.zeros((cells_per_axis, cells_per_axis), dtype=np.int64)
        np.add.at(counts, (i[inside], j[inside]), 1)
        kept = _quantile_mask(counts, mass_quantile)
        if dilate:
            kept = _dilate(kept)
        per_device[label] = kept

    union = np.zeros((cells_per_axis, cells_per_axis), dtype=bool)
    for kept in per_device.values():
        union |= kept
    return UsageMap(grid, union, per_device, mass_quantile, model_id)


def contains_points(usage: UsageMap, points) -> np.ndarray:
    """Boolean array: which points land in a kept cell of the union mask."""
    pts = _as_points(points)
    inside, i, j = _cell_indices(usage.grid, pts)
    out = np.zeros(pts.shape[0], dtype=bool)
    out[inside] = usage.mask[i[inside], j[inside]]
    return out


def contains(usage: UsageMap, point: Point2D) -> bool:
    """Whether one projected point falls in the normal-usage region."""
    return bool(contains_points(usage, [point])[0])


def count_outside(usage: UsageMap, points) -> int:
    """How many projections fall outside the normal-usage region."""
    return int((~contains_points(usage, points)).sum())


def _encode_rle(mask: np.ndarray) -> str:
    """Row-major run-length encoding: comma-joined ``bit:length`` tokens."""
    flat = mask.ravel().astype(np.int8)
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [flat.size]))
    return ",".join(f"{int(flat[s])}:{int(e - s)}" for s, e in zip(starts, ends))


def _decode_rle(text: str, cells_per_axis: int) -> np.ndarray:
    flat: list[np.ndarray] = []
    for token in text.split(","):
        try:
            bit, length = token.split(":")
            flat.append(np.full(int(length), int(bit) == 1, dtype=bool))
        except ValueError:
            raise ValidationError(f"bad run-length token {token!r}") from None
    mask = np.concatenate(flat) if flat else np.zeros(0, dtype=bool)
    expected = cells_per_axis * cells_per_axis
    if mask.size != expected:
        raise ValidationError(
            f"run-length data covers {mask.size} cells, grid has {expected}"
        )
    return mask.reshape(cells_per_axis, cells_per_axis)


def _payload(usage: UsageMap) -> dict:
    return {
        "version": _FORMAT,
        "grid": {
            "min_c1": usage.grid.min_c1,
            "max_c1": usage.grid.max_c1,
            "min_c2": usage.grid.min_c2,
            "max_c2": usage.grid.max_c2,
            "cells_per_axis": usage.grid.cells_per_axis,
        },
        "mass_quantile": usage.mass_quantile,
        "model_id": usage.model_id,
        "mask": _encode_rle(usage.mask),
        "per_device_masks": {
            label: _encode_rle(mask) for label, mask in sorted(usage.per_device_masks.items())
        },
    }


def serialize_map(usage: UsageMap) -> str:
    return json.dumps(_payload(usage), sort_keys=True, indent=2) + "\n"


def map_id(usage: UsageMap) -> str:
    """Content digest of a map, as stored in calibrated alarm policies."""
    return hashlib.sha256(serialize_map(usage).encode()).hexdigest()[:16]


def save_map(usage: UsageMap, path: str | Path) -> None:
    """Write the map as versioned JSON with run-length-encoded masks."""
    Path(path).write_text(serialize_map(usage))


def load_map(path: str | Path) -> UsageMap:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"map file is not valid JSON: {exc}") from None
    if payload.get("version") != _FORMAT:
        raise CompatibilityError(
            f"unsupported map format {payload.get('version')!r}, expected {_FORMAT!r}"
        )
    grid = GridSpec(
        float(payload["grid"]["min_c1"]),
        float(payload["grid"]["max_c1"]),
        float(payload["grid"]["min_c2"]),
        float(payload["grid"]["max_c2"]),
        int(payload["grid"]["cells_per_axis"]),
    )
    n = grid.cells_per_axis
    return UsageMap(
        grid,
        _decode_rle(payload["mask"], n),
        {k: _decode_rle(v, n) for k, v in payload["per_device_masks"].items()},
        float(payload["mass_quantile"]),
        str(payload.get("model_id", "")),
    )


def write_projection_csv(
    projections: Mapping[str, Sequence[Point2D] | np.ndarray], path: str | Path
) -> None:
    """Plot data: one ``c1,c2,label`` row per training projection."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["c1", "c2", "label"])
        for label in sorted(projections):
            for c1, c2 in _as_points(projections[label]):
                writer.writerow([repr(float(c1)), repr(float(c2)), label])


def write_cell_centers_csv(usage: UsageMap, path: str | Path) -> None:
    """Plot data: centers of kept cells, per state and for the union."""
    grid = usage.grid
    n = grid.cells_per_axis
    width_c1 = (grid.max_c1 - grid.min_c1) / n
    width_c2 = (grid.max_c2 - grid.min_c2) / n
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cell_c1", "cell_c2", "label"])
        masks = dict(sorted(usage.per_device_masks.items()))
        masks["union"] = usage.mask
        for label, mask in masks.items():
            for i, j in zip(*np.nonzero(mask)):
                writer.writerow(
                    [
                        repr(grid.min_c1 + (int(i) + 0.5) * width_c1),
                        repr(grid.min_c2 + (int(j) + 0.5) * width_c2),
                        label,
                    ]
                )
