"""Synthetic device current profiles and spectral fault injection.

Real per-device recordings are rarely shareable, so the pipeline can be
exercised end to end on generated ones.  A device archetype is a square-ish
on/off duty cycle at a fixed amplitude with Gaussian measurement noise; each
simulated day is independently active or idle.  Faults are injected by
scaling the magnitude of a band of the per-segment Fourier spectrum while
keeping phases, segment RMS and the on/off activity mask unchanged, then
passing the segment through a 5-minute decimate / re-interpolate round trip
so the faulty signal has the texture of a coarsely metered recording.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FaultInjectionError, ValidationError
from .timeseries import MINUTES_PER_DAY, TimeSeries

logger = logging.getLogger(__name__)

#: First simulated day; a Monday, so six working days precede the first
#: closed Sunday.
DEFAULT_START = datetime(2018, 1, 1)

_ARCHETYPE_FIELDS = (
    "amplitude_amps",
    "duty_cycle",
    "cycle_period_min",
    "noise_sd_amps",
    "active_probability_per_day",
)


@dataclass(frozen=True)
class DeviceSpec:
    """Archetype of one device's daily usage pattern."""

    label: str
    amplitude_amps: float
    duty_cycle: float
    cycle_period_min: int
    noise_sd_amps: float
    active_probability_per_day: float

    def __post_init__(self) -> None:
        if not self.label:
            raise ValidationError("device label must be non-empty")
        if not self.amplitude_amps > 0:
            raise ValidationError("amplitude_amps must be > 0")
        if not 0 < self.duty_cycle <= 1:
            raise ValidationError("duty_cycle must be in (0, 1]")
        if self.cycle_period_min < 2:
            raise ValidationError("cycle_period_min must be >= 2")
        if self.noise_sd_amps < 0:
            raise ValidationError("noise_sd_amps must be >= 0")
        if not 0 < self.active_probability_per_day <= 1:
            raise ValidationError("active_probability_per_day must be in (0, 1]")


@dataclass(frozen=True)
class FaultSpec:
    """Spectral fault: gain applied to a frequency band, in cycles per day."""

    band_low_cyc_per_day: float
    band_high_cyc_per_day: float
    gain: float
    rms_tolerance: float = 0.05

    def __post_init__(self) -> None:
        if not 0 < self.band_low_cyc_per_day <= self.band_high_cyc_per_day:
            raise ValidationError("need 0 < band_low <= band_high")
        if not self.gain > 0:
            raise ValidationError("gain must be > 0")
        if not 0 < self.rms_tolerance < 1:
            raise ValidationError("rms_tolerance must be in (0, 1)")


def generate_device(
    spec: DeviceSpec, days: int, seed: int, start: datetime = DEFAULT_START
) -> TimeSeries:
    """Simulate ``days`` days of one device at one-minute resolution.

    Each day is active with the archetype's probability; idle days are flat
    zero.  An active day runs the duty cycle all day from a random phase,
    with Gaussian noise added and the result clamped at zero.  Identical
    arguments always produce an identical series.
    """
    if days < 1:
        raise ValidationError("days must be >= 1")
    rng = np.random.default_rng(seed)
    on_minutes = max(1, round(spec.duty_cycle * spec.cycle_period_min))
    minute = np.arange(MINUTES_PER_DAY)
    values = np.zeros(days * MINUTES_PER_DAY)
    for day in range(days):
        if rng.random() >= spec.active_probability_per_day:
            continue
        phase = int(rng.integers(spec.cycle_period_min))
        wave = np.where(
            (minute + phase) % spec.cycle_period_min < on_minutes,
            spec.amplitude_amps,
            0.0,
        )
        if spec.noise_sd_amps > 0:
            wave = wave + rng.normal(0.0, spec.noise_sd_amps, MINUTES_PER_DAY)
        values[day * MINUTES_PER_DAY : (day + 1) * MINUTES_PER_DAY] = np.maximum(wave, 0.0)
    return TimeSeries(start, 1, values, spec.label)


def on_activity_mask(
    values: np.ndarray, threshold: float = 0.5, max_gap_min: int = 30
) -> np.ndarray:
    """Boolean activity mask: readings above ``threshold``, short gaps closed.

    Gaps strictly shorter than ``max_gap_min`` between two above-threshold
    samples belong to the surrounding activity (a cycling device sits at zero
    between bursts without being off), so they are folded into it.
    """
    on = np.asarray(values) > threshold
    if max_gap_min <= 1 or not on.any():
        return on
    out = on.copy()
    idx = np.flatnonzero(on)
    gaps = np.diff(idx)
    for where in np.flatnonzero((gaps > 1) & (gaps < max_gap_min + 1)):
        out[idx[where] : idx[where + 1]] = True
    return out


def _segments(mask: np.ndarray) -> list[tuple[int, int]]:
    """(start, end-exclusive) pairs of maximal True runs."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[0::2], edges[1::2]))


def apply_band_gain(
    values: np.ndarray, band_low: float, band_high: float, gain: float
) -> np.ndarray:
    """Scale the Fourier magnitudes of one segment inside a frequency band.

    The band is expressed in cycles per day for a one-minute sampled segment.
    Phases are untouched (the complex coefficients are multiplied by a real
    factor) and everything outside the band is left alone.
    """
    values = np.asarray(values, dtype=np.float64)
    spectrum = np.fft.rfft(values)
    freq_cyc_per_day = np.fft.rfftfreq(values.size, d=1.0) * MINUTES_PER_DAY
    selected = (freq_cyc_per_day >= band_low) & (freq_cyc_per_day <= band_high)
    spectrum[selected] *= gain
    return np.fft.irfft(spectrum, n=values.size)


def _rms(values: np.ndarray) -> float:
    return math.sqrt(float(np.mean(np.square(values))))


def make_faulty(
    ts: TimeSeries,
    fault: FaultSpec,
    seed: int = 0,
    *,
    on_threshold: float = 0.5,
    max_gap_min: int | None = None,
    decimate_step: int = 5,
) -> TimeSeries:
    """Inject a spectral fault into every active segment of a daily signal.

    Per activity segment (see :func:`on_activity_mask`): the band gain is
    applied, negative excursions are clamped, the segment is decimated to
    ``decimate_step``-minute sampling and linearly re-interpolated to one
    minute, and finally rescaled so its RMS matches the original segment
    exactly.  Idle stretches are copied through untouched, so series length
    and the activity mask are preserved; segments shorter than 4 samples are
    skipped (a warning reports how many).

    The transform is deterministic; ``seed`` is accepted for interface
    stability with the generator but currently unused.
    """
    del seed  # deterministic transform, see docstring
    if ts.step != 1:
        raise ValidationError("fault injection expects a one-minute series")
    if len(ts) % MINUTES_PER_DAY != 0:
        raise ValidationError("fault injection expects whole days of data")
    if max_gap_min is None:
        max_gap_min = math.ceil(MINUTES_PER_DAY / fault.band_low_cyc_per_day)

    mask = on_activity_mask(ts.values, on_threshold, max_gap_min)
    out = ts.values.copy()
    skipped = 0
    for start, stop in _segments(mask):
        segment = ts.values[start:stop]
        if segment.size < 4:
            skipped += 1
            continue
        shaped = apply_band_gain(
            segment, fault.band_low_cyc_per_day, fault.band_high_cyc_per_day, fault.gain
        )
        shaped = np.maximum(shaped, 0.0)
        kept = np.arange(0, segment.size, decimate_step)
        if kept[-1] != segment.size - 1:
            kept = np.append(kept, segment.size - 1)
        shaped = np.interp(np.arange(segment.size), kept, shaped[kept])
        original_rms = _rms(segment)
        shaped_rms = _rms(shaped)
        if shaped_rms == 0.0:
            raise FaultInjectionError(
                f"segment [{start}:{stop}] collapsed to zero during injection"
            )
        shaped *= original_rms / shaped_rms
        if abs(_rms(shaped) - original_rms) > fault.rms_tolerance * original_rms:
            raise FaultInjectionError(
                f"segment [{start}:{stop}] RMS drifted beyond tolerance"
            )
        out[start:stop] = shaped
    if skipped:
        logger.warning("skipped %d activity segments shorter than 4 samples", skipped)

    result = ts.with_values(out)
    new_mask = on_activity_mask(result.values, on_threshold, max_gap_min)
    if not np.array_equal(new_mask, mask):
        raise FaultInjectionError("fault injection altered the on/off activity mask")
    return result


def load_archetypes(path: str | Path | None = None) -> dict[str, DeviceSpec]:
    """Device archetypes from an INI-style config (one section per label).

    With no path the packaged defaults are used.  Every section must define
    exactly the :class:`DeviceSpec` numeric fields.
    """
    parser = configparser.ConfigParser()
    if path is None:
        text = (resources.files("rqamon") / "data" / "archetypes.cfg").read_text()
        parser.read_string(text)
    else:
        if not parser.read(Path(path)):
            raise ValidationError(f"cannot read archetype config {path!r}")
    specs: dict[str, DeviceSpec] = {}
    for label in parser.sections():
        section = parser[label]
        missing = [f for f in _ARCHETYPE_FIELDS if f not in section]
        unknown = [f for f in section if f not in _ARCHETYPE_FIELDS]
        if missing or unknown:
            raise ValidationError(
                f"archetype [{label}]: missing {missing or 'nothing'}, "
                f"unknown {unknown or 'nothing'}"
            )
        try:
            specs[label] = DeviceSpec(
                label=label,
                amplitude_amps=section.getfloat("amplitude_amps"),
                duty_cycle=section.getfloat("duty_cycle"),
                cycle_period_min=section.getint("cycle_period_min"),
                noise_sd_amps=section.getfloat("noise_sd_amps"),
                active_probability_per_day=section.getfloat("active_probability_per_day"),
            )
        except ValueError as exc:
            raise ValidationError(f"archetype [{label}]: {exc}") from None
    if not specs:
        raise ValidationError("archetype config defines no devices")
    return specs


def generate_library(
    specs: Mapping[str, DeviceSpec],
    days: int,
    seed: int,
    start: datetime = DEFAULT_START,
    fault: FaultSpec | None = None,
    fault_label: str | None = None,
) -> dict[str, list[TimeSeries]]:
    """Per-device day profiles, dated on consecutive working days.

    Day ``d`` of every device lands on the same calendar date (Sundays are
    skipped), so same-index days can be summed into a coherent aggregate.
    Each device draws from its own seed stream derived from ``seed``; passing
    a fault spec routes that one device's days through :func:`make_faulty`.
    """
    if fault is not None and fault_label not in specs:
        raise ValidationError(f"fault label {fault_label!r} is not a configured device")
    dates = []
    when = start
    while len(dates) < days:
        if when.weekday() != 6:
            dates.append(when)
        when = when + timedelta(days=1)
    child_seeds = np.random.SeedSequence(seed).generate_state(len(specs), np.uint64)
    library: dict[str, list[TimeSeries]] = {}
    for child, label in zip(child_seeds, sorted(specs)):
        series = generate_device(specs[label], days, int(child), start)
        if fault is not None and label == fault_label:
            series = make_faulty(series, fault)
        blocks = series.values.reshape(days, MINUTES_PER_DAY)
        library[label] = [
            TimeSeries(dates[d], 1, blocks[d], label) for d in range(days)
        ]
    return library
