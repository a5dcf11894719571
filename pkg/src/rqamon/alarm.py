"""Crossing-count alarms calibrated by bootstrap over historical days.

An aggregate day is scored by projecting its sliding-window features and
counting how many land outside the usage map.  To know how many crossings
are "normal", synthetic periods are bootstrapped from a library of recorded
per-device days: each simulated day sums one uniformly drawn historical day
per requested device, a weekly period chains six independent working days.
The alarm threshold is a nearest-rank quantile of the simulated counts, and
a monitored period triggers when it strictly exceeds that threshold.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CompatibilityError, ValidationError
from .pca import PcaModel, project_rows
from .rqa import sliding_rqa
from .timeseries import MINUTES_PER_DAY, TimeSeries, sum_signals
from .usage_map import UsageMap, contains_points

#: Working days per simulated week (shops shut one day a week).
WORKDAYS_PER_WEEK = 6

PERIODS = ("daily", "weekly")

_FORMAT = "policy-v1"

#: Nominal date given to resampled day profiles before they are summed.
_EPOCH = datetime(2000, 1, 3)


@dataclass(frozen=True)
class ProfileLibrary:
    """Historical one-minute day profiles, grouped by device label."""

    profiles: Mapping[str, Sequence[TimeSeries]]

    def __post_init__(self) -> None:
        if not self.profiles:
            raise ValidationError("profile library is empty")
        for label, days in self.profiles.items():
            if not days:
                raise ValidationError(f"no day profiles for device {label!r}")
            for day in days:
                if day.step != 1 or len(day) != MINUTES_PER_DAY:
                    raise ValidationError(
                        f"device {label!r} has a profile that is not a one-minute day"
                    )
        object.__setattr__(self, "profiles", dict(self.profiles))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sorted(self.profiles))

    def days_for(self, label: str) -> Sequence[TimeSeries]:
        try:
            return self.profiles[label]
        except KeyError:
            raise ValidationError(f"unknown device label {label!r}") from None


@dataclass(frozen=True)
class AlarmPolicy:
    """A calibrated crossing threshold for one monitoring period."""

    period: str
    threshold_crossings: int
    quantile: float
    runs: int
    calibrated_on: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.period not in PERIODS:
            raise ValidationError(f"period must be one of {PERIODS}")
        if self.threshold_crossings < 0:
            raise ValidationError("threshold_crossings must be >= 0")
        if not 0 < self.quantile <= 1:
            raise ValidationError("quantile must be in (0, 1]")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        object.__setattr__(self, "calibrated_on", dict(self.calibrated_on))


@dataclass(frozen=True)
class AlarmReport:
    """Outcome of evaluating one monitored period."""

    crossings: int
    threshold: int
    triggered: bool
    windows_evaluated: int

    def to_dict(self) -> dict:
        return {
            "crossings": self.crossings,
            "threshold": self.threshold,
            "triggered": self.triggered,
            "windows_evaluated": self.windows_evaluated,
        }


def _check_pairing(usage: UsageMap, model: PcaModel) -> None:
    if usage.model_id and usage.model_id != model.model_id:
        raise CompatibilityError(
            f"usage map was built from model {usage.model_id}, got {model.model_id}"
        )


def count_day_crossings(
    day: TimeSeries, model: PcaModel, usage: UsageMap
) -> tuple[int, int]:
    """(crossings, windows) for one aggregate day under a fitted model."""
    _check_pairing(usage, model)
    feats = sliding_rqa(day, model.params)
    outside = ~contains_points(usage, project_rows(model, feats.features))
    return int(outside.sum()), len(feats)


def _one_run(
    run: int,
    library: ProfileLibrary,
    model: PcaModel,
    usage: UsageMap,
    device_multiset: Sequence[str],
    days: int,
    seed: int,
) -> int:
    rng = np.random.default_rng(np.uint64(seed) ^ np.uint64(run))
    total = 0
    for _ in range(days):
        parts = []
        for label in device_multiset:
            pool = library.days_for(label)
            drawn = pool[int(rng.integers(len(pool)))]
            # Drawn days come from assorted dates; restamp them onto a
            # common origin so they can be summed into one synthetic day.
            parts.append(TimeSeries(_EPOCH, 1, drawn.values, drawn.label))
        crossings, _ = count_day_crossings(sum_signals(parts), model, usage)
        total += crossings
    return total


def simulate_counts(
    library: ProfileLibrary,
    model: PcaModel,
    usage: UsageMap,
    period: str,
    device_multiset: Sequence[str],
    runs: int,
    seed: int,
    threads: int = 1,
) -> list[int]:
    """Bootstrap crossing counts for ``runs`` simulated periods.

    Every run draws one historical day per multiset entry (labels may repeat
    to simulate duplicated devices), sums them into an aggregate and counts
    map crossings; a weekly period repeats this for six independent working
    days and sums the counts.  Run ``r`` uses the deterministic seed
    ``seed XOR r``, so results are reproducible and independent of thread
    count.
    """
    _check_pairing(usage, model)
    if period not in PERIODS:
        raise ValidationError(f"period must be one of {PERIODS}")
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    if not device_multiset:
        raise ValidationError("device multiset is empty")
    for label in set(device_multiset):
        library.days_for(label)  # fail fast on unknown labels
    days = 1 if period == "daily" else WORKDAYS_PER_WEEK

    if threads <= 1:
        return [
            _one_run(r, library, model, usage, device_multiset, days, seed)
            for r in range(runs)
        ]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_one_run, r, library, model, usage, device_multiset, days, seed)
            for r in range(runs)
        ]
        return [f.result() for f in futures]


def threshold_from_quantile(counts: Sequence[int], quantile: float) -> int:
    """Nearest-rank quantile of simulated counts.

    With n sorted counts the threshold is the ``ceil(q * n)``-th smallest.
    A tiny guard keeps float dust in ``q * n`` from bumping the rank.
    """
    if not 0 < quantile <= 1:
        raise ValidationError("quantile must be in (0, 1]")
    if len(counts) == 0:
        raise ValidationError("no counts to take a quantile of")
    ordered = sorted(int(c) for c in counts)
    rank = max(1, math.ceil(quantile * len(ordered) - 1e-12))
    return ordered[rank - 1]


def alarm_rate(counts: Sequence[int], threshold: int) -> float:
    """Fraction of counts strictly above the threshold."""
    if len(counts) == 0:
        raise ValidationError("no counts to rate")
    counts = np.asarray(counts)
    return float(np.mean(counts > threshold))


def calibrate(
    library: ProfileLibrary,
    model: PcaModel,
    usage: UsageMap,
    period: str,
    device_multiset: Sequence[str],
    quantile: float,
    runs: int,
    seed: int,
    calibrated_on: Mapping[str, str] | None = None,
    threads: int = 1,
) -> tuple[AlarmPolicy, list[int]]:
    """Bootstrap counts and turn their quantile into an alarm policy."""
    counts = simulate_counts(
        library, model, usage, period, device_multiset, runs, seed, threads
    )
    policy = AlarmPolicy(
        period,
        threshold_from_quantile(counts, quantile),
        quantile,
        runs,
        calibrated_on or {},
    )
    return policy, counts


def evaluate(
    usage: UsageMap, model: PcaModel, policy: AlarmPolicy, aggregate: TimeSeries
) -> AlarmReport:
    """Score one monitored aggregate period against a calibrated policy.

    The aggregate must be a one-minute series spanning exactly the policy
    period (one day, or six working days evaluated day by day).  The alarm
    triggers when total crossings strictly exceed the threshold.
    """
    _check_pairing(usage, model)
    if aggregate.step != 1:
        raise ValidationError("evaluation expects a one-minute aggregate")
    days_expected = 1 if policy.period == "daily" else WORKDAYS_PER_WEEK
    if len(aggregate) != days_expected * MINUTES_PER_DAY:
        raise ValidationError(
            f"a {policy.period} aggregate must span {days_expected} day(s), "
            f"got {len(aggregate)} samples"
        )
    expected_model = policy.calibrated_on.get("model_id")
    if expected_model and expected_model != model.model_id:
        raise CompatibilityError(
            f"policy was calibrated on model {expected_model}, got {model.model_id}"
        )
    crossings = 0
    windows = 0
    for day in range(days_expected):
        block = aggregate.values[day * MINUTES_PER_DAY : (day + 1) * MINUTES_PER_DAY]
        day_series = TimeSeries(
            aggregate.timestamp(day * MINUTES_PER_DAY), 1, block, aggregate.label
        )
        c, w = count_day_crossings(day_series, model, usage)
        crossings += c
        windows += w
    return AlarmReport(
        crossings,
        policy.threshold_crossings,
        crossings > policy.threshold_crossings,
        windows,
    )


def save_policy(policy: AlarmPolicy, path: str | Path) -> None:
    """Write a policy as versioned JSON (format ``policy-v1``)."""
    payload = {
        "version": _FORMAT,
        "period": policy.period,
        "threshold_crossings": policy.threshold_crossings,
        "quantile": policy.quantile,
        "runs": policy.runs,
        "calibrated_on": dict(sorted(policy.calibrated_on.items())),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_policy(path: str | Path) -> AlarmPolicy:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"policy file is not valid JSON: {exc}") from None
    if payload.get("version") != _FORMAT:
        raise CompatibilityError(
            f"unsupported policy format {payload.get('version')!r}, expected {_FORMAT!r}"
        )
    return AlarmPolicy(
        str(payload["period"]),
        int(payload["threshold_crossings"]),
        float(payload["quantile"]),
        int(payload["runs"]),
        {str(k): str(v) for k, v in payload.get("calibrated_on", {}).items()},
    )
