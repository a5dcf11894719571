"""Command line pipeline: synthesize, ingest, fit, map, calibrate, evaluate.

Artifacts on disk
-----------------
A *profile library* is a directory with one subdirectory per device label
holding one ``timestamp,amps`` CSV per working day, named by ISO date.  The
``aggregate`` subdirectory, when present, holds the summed site signal for
the same dates.  Models, maps and alarm policies are versioned JSON files;
every command that writes an artifact drops a run manifest next to it
recording the parameters, seed, inputs and package version that produced it.

Exit codes: 0 success, 1 bad invocation, 2 invalid input data, 3 alarm
triggered (``evaluate`` only).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime
from pathlib import Path

from . import __version__
from .alarm import (
    AlarmPolicy,
    ProfileLibrary,
    alarm_rate,
    calibrate,
    evaluate,
    load_policy,
    save_policy,
    simulate_counts,
)
from .errors import RqamonError, UsageError, ValidationError
from .pca import PcaModel, fit, load_model, project_rows, save_model
from .rqa import RqaFeatureSeries, RqaParams, concat_feature_series, sliding_rqa, write_features_csv
from .synth import FaultSpec, generate_library, load_archetypes
from .timeseries import (
    TimeSeries,
    WorkCalendar,
    filter_closed_days,
    interpolate_to_minutes,
    load_csv,
    parse_csv,
    save_csv,
    sum_signals,
)
from .usage_map import (
    UsageMap,
    build_map,
    load_map,
    map_id,
    save_map,
    write_cell_centers_csv,
    write_projection_csv,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems via exceptions.

    The default implementation exits the process with status 2, which this
    package reserves for data errors.
    """

    def error(self, message):  # noqa: D102 - see class docstring
        raise UsageError(message)


def _write_manifest(
    path: Path, command: str, args: argparse.Namespace, inputs: list, outputs: list
) -> None:
    params = {}
    for key, value in sorted(vars(args).items()):
        if key in ("handler", "command") or callable(value):
            continue
        params[key] = str(value) if isinstance(value, Path) else value
    payload = {
        "command": command,
        "version": __version__,
        "seed": params.get("seed"),
        "params": params,
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
    }
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _manifest_for(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else Path(str(out) + ".manifest.json")


# --- library directories ---


def _write_library(library: dict, out: Path) -> list[Path]:
    written = []
    for label, days in library.items():
        folder = out / label
        folder.mkdir(parents=True, exist_ok=True)
        for day in days:
            target = folder / f"{day.start_time.date().isoformat()}.csv"
            save_csv(day, target)
            written.append(target)
    return written


def _load_library(root: Path) -> dict[str, list[TimeSeries]]:
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"library directory {str(root)!r} does not exist")
    library: dict[str, list[TimeSeries]] = {}
    for folder in sorted(p for p in root.iterdir() if p.is_dir()):
        days = [load_csv(f, folder.name) for f in sorted(folder.glob("*.csv"))]
        if days:
            library[folder.name] = days
    if not library:
        raise ValidationError(f"no device day files under {str(root)!r}")
    return library


def _aggregate_by_date(library: dict[str, list[TimeSeries]]) -> list[TimeSeries]:
    """Sum same-date device days; only dates present for every device count."""
    devices = {k: v for k, v in library.items() if k != "aggregate"}
    by_date: dict = {}
    for label, days in devices.items():
        for day in days:
            by_date.setdefault(day.start_time.date(), {})[label] = day
    shared = [d for d, parts in sorted(by_date.items()) if len(parts) == len(devices)]
    if not shared:
        raise ValidationError("devices share no common dates to aggregate")
    return [sum_signals(list(by_date[d].values())) for d in shared]


def _feature_sets(
    library: dict[str, list[TimeSeries]], params: RqaParams
) -> dict[str, RqaFeatureSeries]:
    sets = {}
    for label, days in library.items():
        sets[label] = concat_feature_series([sliding_rqa(day, params) for day in days])
    if "aggregate" not in sets:
        sets["aggregate"] = concat_feature_series(
            [sliding_rqa(day, params) for day in _aggregate_by_date(library)]
        )
    return sets


def _training_projections(
    model: PcaModel, sets: dict[str, RqaFeatureSeries]
) -> dict:
    """Plane points per state: on-windows for devices, everything for the
    aggregate (its quiet stretches are legitimate usage and belong on the
    map)."""
    projections = {}
    for label, fs in sets.items():
        rows = fs.features if label == "aggregate" else fs.on_features()
        if rows.shape[0] == 0:
            raise ValidationError(f"state {label!r} contributed no training windows")
        projections[label] = project_rows(model, rows)
    return projections


def _add_rqa_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, default=6.0, help="recurrence tolerance in amps")
    parser.add_argument("--window", type=int, default=80, help="window length in minutes")
    parser.add_argument("--lmin", type=int, default=2, help="shortest counted line")
    parser.add_argument("--step", type=int, default=1, help="window stride in minutes")
    parser.add_argument(
        "--on-threshold", type=float, default=0.5, help="mean amps above which a window is on"
    )


def _params_from(args: argparse.Namespace) -> RqaParams:
    return RqaParams(args.epsilon, args.window, args.lmin, args.step, args.on_threshold)


# --- subcommand handlers ---


def _cmd_synth(args: argparse.Namespace) -> int:
    specs = load_archetypes(args.config)
    fault = None
    if args.fault_device:
        fault = FaultSpec(args.band_low, args.band_high, args.gain, args.rms_tolerance)
    start = datetime.fromisoformat(args.start)
    library = generate_library(
        specs, args.days, args.seed, start, fault, args.fault_device
    )
    dates = [d.start_time.date() for d in next(iter(library.values()))]
    library["aggregate"] = [
        sum_signals([library[label][k] for label in specs]) for k in range(len(dates))
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_library(library, out)
    inputs = [args.config] if args.config else []
    _write_manifest(_manifest_for(out), "synth", args, inputs, [out])
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    closed_weekdays = frozenset(
        int(d) for d in args.closed_weekdays.split(",") if d.strip() != ""
    )
    closed_dates = frozenset(
        datetime.fromisoformat(d).date()
        for d in (args.closed_dates or "").split(",")
        if d.strip()
    )
    calendar = WorkCalendar(closed_weekdays, closed_dates)
    with open(args.input, "r", newline="") as handle:
        series = parse_csv(handle, args.label)
    series = interpolate_to_minutes(series)
    days = filter_closed_days(series, calendar)
    if not days:
        raise ValidationError("input covers no complete open days")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = _write_library({args.label: days}, out)
    _write_manifest(_manifest_for(out), "ingest", args, [args.input], written)
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    params = _params_from(args)
    sets = _feature_sets(_load_library(Path(args.library)), params)
    out = Path(args.out)
    write_features_csv([sets[k] for k in sorted(sets)], out)
    _write_manifest(_manifest_for(out), "features", args, [args.library], [out])
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    params = _params_from(args)
    sets = _feature_sets(_load_library(Path(args.library)), params)
    model = fit(sets)
    out = Path(args.out)
    save_model(model, out)
    _write_manifest(_manifest_for(out), "fit", args, [args.library], [out])
    return 0


def _cmd_map(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    sets = _feature_sets(_load_library(Path(args.library)), model.params)
    projections = _training_projections(model, sets)
    usage = build_map(
        projections,
        cells_per_axis=args.cells,
        mass_quantile=args.mass_quantile,
        margin_fraction=args.margin,
        dilate=args.dilate,
        model_id=model.model_id,
    )
    out = Path(args.out)
    save_map(usage, out)
    outputs = [out]
    if args.projections_csv:
        write_projection_csv(projections, args.projections_csv)
        outputs.append(Path(args.projections_csv))
    if args.cells_csv:
        write_cell_centers_csv(usage, args.cells_csv)
        outputs.append(Path(args.cells_csv))
    _write_manifest(_manifest_for(out), "map", args, [args.library, args.model], outputs)
    return 0


def _load_pair(args: argparse.Namespace) -> tuple[PcaModel, UsageMap]:
    return load_model(args.model), load_map(args.map)


def _write_counts(counts: list[int], path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "crossings"])
        for run, value in enumerate(counts):
            writer.writerow([run, value])


def _cmd_calibrate(args: argparse.Namespace) -> int:
    model, usage = _load_pair(args)
    library = ProfileLibrary(_load_library(Path(args.library)))
    policy, counts = calibrate(
        library,
        model,
        usage,
        args.period,
        args.devices.split(","),
        args.quantile,
        args.runs,
        args.seed,
        calibrated_on={"model_id": model.model_id, "map_id": map_id(usage)},
        threads=args.threads,
    )
    out = Path(args.out)
    save_policy(policy, out)
    outputs = [out]
    if args.counts_csv:
        _write_counts(counts, Path(args.counts_csv))
        outputs.append(Path(args.counts_csv))
    _write_manifest(
        _manifest_for(out), "calibrate", args, [args.library, args.model, args.map], outputs
    )
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    model, usage = _load_pair(args)
    library = ProfileLibrary(_load_library(Path(args.library)))
    counts = simulate_counts(
        library,
        model,
        usage,
        args.period,
        args.devices.split(","),
        args.runs,
        args.seed,
        threads=args.threads,
    )
    out = Path(args.out)
    _write_counts(counts, out)
    if args.policy:
        policy = load_policy(args.policy)
        summary = {
            "alarm_rate": alarm_rate(counts, policy.threshold_crossings),
            "period": args.period,
            "runs": args.runs,
            "threshold": policy.threshold_crossings,
        }
        print(json.dumps(summary, sort_keys=True))
    inputs = [args.library, args.model, args.map] + ([args.policy] if args.policy else [])
    _write_manifest(_manifest_for(out), "simulate", args, inputs, [out])
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    model, usage = _load_pair(args)
    policy = load_policy(args.policy)
    aggregate = load_csv(args.aggregate, "aggregate")
    report = evaluate(usage, model, policy, aggregate)
    line = dict(report.to_dict(), period=policy.period)
    print(json.dumps(line, sort_keys=True))
    if args.report:
        target = Path(args.report)
        target.write_text(json.dumps(line, sort_keys=True, indent=2) + "\n")
        _write_manifest(
            _manifest_for(target),
            "evaluate",
            args,
            [args.aggregate, args.model, args.map, args.policy],
            [target],
        )
    return 3 if report.triggered else 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rqamon",
        description="Recurrence-based monitoring of aggregate current signals.",
    )
    parser.add_argument("--version", action="version", version=f"rqamon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic device profile library")
    p.add_argument("--out", required=True, help="library directory to create")
    p.add_argument("--config", default=None, help="archetype config (INI); packaged defaults if omitted")
    p.add_argument("--days", type=int, default=36, help="working days to simulate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="2018-01-01", help="first working day (ISO date)")
    p.add_argument("--fault-device", default=None, help="device label to fault-inject")
    p.add_argument("--band-low", type=float, default=36.0, help="fault band low edge, cycles/day")
    p.add_argument("--band-high", type=float, default=60.0, help="fault band high edge, cycles/day")
    p.add_argument("--gain", type=float, default=1.5, help="fault band magnitude gain")
    p.add_argument("--rms-tolerance", type=float, default=0.05)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("ingest", help="split a raw reading CSV into per-day library files")
    p.add_argument("--input", required=True, help="timestamp,amps CSV at any uniform step")
    p.add_argument("--label", required=True, help="device label for the readings")
    p.add_argument("--out", required=True, help="library directory to write into")
    p.add_argument("--closed-weekdays", default="6", help="comma list, Monday=0 .. Sunday=6")
    p.add_argument("--closed-dates", default="", help="comma list of ISO dates to drop")
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("features", help="export per-window feature rows as CSV")
    p.add_argument("--library", required=True)
    p.add_argument("--out", required=True)
    _add_rqa_flags(p)
    p.set_defaults(handler=_cmd_features)

    p = sub.add_parser("fit", help="fit the 2-D projection model from a library")
    p.add_argument("--library", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    _add_rqa_flags(p)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("map", help="build the normal-usage map from training projections")
    p.add_argument("--library", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="map JSON path")
    p.add_argument("--cells", type=int, default=100, help="grid cells per axis")
    p.add_argument("--mass-quantile", type=float, default=0.95)
    p.add_argument("--margin", type=float, default=0.05, help="bounding box margin fraction")
    p.add_argument("--dilate", action="store_true", help="grow kept cells by one neighbour")
    p.add_argument("--projections-csv", default=None, help="also export training projections")
    p.add_argument("--cells-csv", default=None, help="also export kept cell centers")
    p.set_defaults(handler=_cmd_map)

    def _monitoring_flags(q: argparse.ArgumentParser, with_quantile: bool) -> None:
        q.add_argument("--library", required=True)
        q.add_argument("--model", required=True)
        q.add_argument("--map", required=True)
        q.add_argument("--period", choices=["daily", "weekly"], default="daily")
        q.add_argument(
            "--devices", required=True, help="comma multiset of device labels to sum"
        )
        if with_quantile:
            q.add_argument("--quantile", type=float, default=0.9)
        q.add_argument("--runs", type=int, default=100)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--threads", type=int, default=1, help="worker threads for bootstrap runs")

    p = sub.add_parser("calibrate", help="bootstrap crossing counts and fix the alarm threshold")
    _monitoring_flags(p, with_quantile=True)
    p.add_argument("--out", required=True, help="policy JSON path")
    p.add_argument("--counts-csv", default=None, help="also export simulated counts")
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("simulate", help="bootstrap crossing counts for a what-if scenario")
    _monitoring_flags(p, with_quantile=False)
    p.add_argument("--out", required=True, help="counts CSV path")
    p.add_argument("--policy", default=None, help="policy JSON to rate the counts against")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("evaluate", help="score one aggregate period against a policy")
    p.add_argument("--aggregate", required=True, help="one-minute aggregate CSV for the period")
    p.add_argument("--model", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--report", default=None, help="also write the report as JSON")
    p.set_defaults(handler=_cmd_evaluate)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help/--version
        return int(exc.code or 0)
    except RqamonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
