"""Command-line front end: ``vehicle-energy <command> ...``.

Exit status: 0 success, 1 unexpected package error, 2 unreadable input
data, 3 bad configuration (missing files, invalid parameters), 4 fitting
failure. Every data file is written to a temporary sibling and renamed into
place, and carries no timestamps; package and library versions go to a
``<output>.versions.json`` sidecar instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import drive_cycles as dc
from . import map_fitting as mf
from .errors import (
    ConfigurationError,
    FitError,
    InputError,
    ParseError,
    VehicleEnergyError,
)
from .grid_dump import DEFAULT_AXES, export_grid, load_grid
from .reduction import fit as fit_simplified_params
from .semi_principled import (
    SemiPrincipledModel,
    SemiPrincipledVehicle,
    evaluate_any,
    is_vehicle_document,
    save_vehicle,
)
from .simplified import (
    Duty,
    Feasibility,
    SimplifiedModel,
    SimplifiedParams,
    bundled_vehicles,
    evaluate,
    save_params,
)
from .tabular import atomic_write_text, csv_text, parse_float, read_rows

logger = logging.getLogger("vehicle_energy.cli")

EXIT_OK, EXIT_ERROR, EXIT_PARSE, EXIT_CONFIG, EXIT_FIT = 0, 1, 2, 3, 4


# -- loading ------------------------------------------------------------------------

class LoadedVehicle:
    """A simplified parameter set or a semi-principled vehicle, behind one interface."""

    def __init__(self, source, definition, project=False, specific_energy=None):
        self.source = source
        self.definition = definition
        if isinstance(definition, SimplifiedParams):
            self.kind = "simplified"
            self.name = definition.name
            self.duty = definition.duty
            self.model = SimplifiedModel(
                definition, project=project, specific_energy=specific_energy
            )
        else:
            self.kind = "semi_principled"
            self.name = definition.name
            self.duty = Duty.LIGHT
            self.model = SemiPrincipledModel(definition)


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"file not found: {path}") from None
    except IsADirectoryError:
        raise ConfigurationError(f"expected a file, got a directory: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


def load_any_vehicle(source, project=False, specific_energy=None):
    """Vehicle from a JSON file path or a bundled simplified-vehicle key."""
    path = Path(source)
    if not path.exists() and source in bundled_vehicles():
        from .simplified import load_bundled

        return LoadedVehicle(source, load_bundled(source), project, specific_energy)
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: expected a JSON object")
    if is_vehicle_document(data):
        if project:
            logger.warning("--project applies to simplified models only; ignored for %s", source)
        return LoadedVehicle(source, SemiPrincipledVehicle.from_dict(data))
    return LoadedVehicle(source, SimplifiedParams.from_dict(data), project, specific_energy)


def load_semi_vehicle(source):
    data = read_json(source)
    if not is_vehicle_document(data):
        raise ConfigurationError(f"{source} is not a semi-principled vehicle file")
    return SemiPrincipledVehicle.from_dict(data)


def _versions():
    return {"vehicle_energy": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def write_output(path, text):
    """Atomic data write plus the versions sidecar."""
    atomic_write_text(path, text)
    write_output_sidecar(path)


def write_output_sidecar(path):
    path = Path(path)
    atomic_write_text(path.with_name(path.name + ".versions.json"),
                      json.dumps(_versions(), indent=2, sort_keys=True) + "\n")


def _json_text(data):
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


def _fmt(x):
    return repr(float(x))


# -- eval ------------------------------------------------------------------------------

def read_points(path):
    """Operating points from a ``v,a[,theta]`` CSV."""
    _columns, rows = read_rows(path, ("v", "a"), optional=("theta",))
    pts = np.zeros((len(rows), 3))
    for i, (index, fields) in enumerate(rows):
        pts[i, :len(fields)] = [parse_float(f, index) for f in fields]
    return pts[:, 0], pts[:, 1], pts[:, 2]


def evaluation_table(vehicle, v, a, theta):
    """Header and rows of the batch evaluation output."""
    if vehicle.kind == "simplified":
        model = vehicle.model
        res = evaluate(vehicle.definition, v, a, theta, model.project, model.specific_energy)
        header = ("v", "a", "theta", "fuel_rate", "power", "feasibility")
        rows = [[_fmt(v[i]), _fmt(a[i]), _fmt(theta[i]), _fmt(res.fuel_rate[i]),
                 _fmt(res.power[i]), int(res.feasibility[i])] for i in range(v.size)]
        return header, rows
    header = ("v", "a", "theta", "fuel_rate", "feasibility", "gear", "N", "T", "P_wheel")
    ok = v >= 0
    out = evaluate_any(vehicle.definition, v[ok], a[ok], theta[ok], vehicle.model.diagnostics)
    rows, j = [], 0
    for i in range(v.size):
        if not ok[i]:
            rows.append([_fmt(v[i]), _fmt(a[i]), _fmt(theta[i]), _fmt(0.0),
                         int(Feasibility.NEGATIVE_SPEED), 0, _fmt(0.0), _fmt(0.0), _fmt(0.0)])
            continue
        code = Feasibility.FEASIBLE if out.feasible[j] else Feasibility.INFEASIBLE
        rows.append([_fmt(v[i]), _fmt(a[i]), _fmt(theta[i]), _fmt(out.fuel_rate[j]), int(code),
                     int(out.gear[j]), _fmt(out.N[j]), _fmt(out.T[j]), _fmt(out.P_wheel[j])])
        j += 1
    return header, rows


def parse_axis(text):
    """``name=start,stop,n`` for grid export."""
    try:
        name, rest = text.split("=", 1)
        start, stop, n = rest.split(",")
        return name.strip(), (float(start), float(stop), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected name=start,stop,n, got {text!r}") from None


def cmd_eval(args):
    vehicle = load_any_vehicle(args.vehicle, args.project, args.specific_energy)
    if args.points is None and args.cycle is None and args.export_grid is None:
        raise ConfigurationError("eval needs --points, --cycle or --export-grid")
    if args.points is not None or args.cycle is not None:
        if args.out is None:
            raise ConfigurationError("eval needs --out for the evaluation table")
        if args.points is not None:
            v, a, theta = read_points(args.points)
            header, rows = evaluation_table(vehicle, v, a, theta)
        else:
            cycle = dc.resolve_cycle(args.cycle)
            if args.grade:
                cycle = dc.with_constant_grade(cycle, args.grade[0], vehicle.duty)
            a = dc.derive_acceleration(cycle) if len(cycle) > 1 else np.zeros(1)
            header, rows = evaluation_table(vehicle, cycle.v, a, cycle.theta)
            header = ("t",) + header
            rows = [[_fmt(t)] + r for t, r in zip(cycle.t, rows)]
            trip = dc.integrate_fuel(vehicle.model, cycle)
            print(f"{cycle.name}: {trip.total:.6f} g over {cycle.duration:g} s, "
                  f"{trip.n_infeasible} infeasible samples")
        write_output(args.out, csv_text(header, rows))
    if args.export_grid is not None:
        axes = dict(args.grid_axis or [])
        unknown = set(axes) - set(DEFAULT_AXES)
        if unknown:
            raise ConfigurationError(f"unknown grid axes {sorted(unknown)}")
        export_grid(vehicle.model, args.export_grid, axes)
        write_output_sidecar(args.export_grid)
    return EXIT_OK


# -- fit -------------------------------------------------------------------------------

def cmd_fit(args):
    if (args.vehicle is None) == (args.grid is None):
        raise ConfigurationError("fit needs exactly one oracle: --vehicle or --grid")
    if args.vehicle is not None:
        vehicle = load_semi_vehicle(args.vehicle)
        oracle, default_name = SemiPrincipledModel(vehicle), vehicle.name
    else:
        oracle, default_name = load_grid(args.grid), Path(args.grid).stem
    duty = Duty(args.duty) if args.duty else None
    params, report = fit_simplified_params(oracle, name=args.name or default_name, duty=duty)
    if args.out is None:
        raise ConfigurationError("fit needs --out for the parameter file")
    out = Path(args.out)
    save_params(params, out)
    write_output_sidecar(out)
    report_path = Path(args.report) if args.report else out.with_name(out.stem + ".report.json")
    write_output(report_path, _json_text(report.to_dict()))
    print(f"fitted {params.name} ({params.duty.value}); steps: {', '.join(report.step_names)}")
    return EXIT_OK


# -- validate --------------------------------------------------------------------------

def _parse_grades(values):
    grades = []
    for item in values or ["0"]:
        for part in str(item).split(","):
            part = part.strip()
            if part:
                try:
                    grades.append(float(part))
                except ValueError:
                    raise ConfigurationError(f"bad grade {part!r}") from None
    return grades


def _unique_labels(vehicles):
    labels, seen = [], {}
    for veh in vehicles:
        base = veh.kind
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return labels


def _reference_traces(entries, cycles):
    by_name = {c.name: c for c in cycles}
    traces = {}
    for source in entries:
        try:
            name, grade, path = source.split(":", 2)
            grade = float(grade)
        except ValueError:
            raise ConfigurationError(f"expected CYCLE:GRADE:PATH, got {source!r}") from None
        if name not in by_name:
            raise ConfigurationError(f"reference trace for unknown cycle {name!r}")
        traces[(name, grade)] = dc.read_reference_trace(path, by_name[name])
    return traces


def cmd_validate(args):
    if not args.vehicle:
        raise ConfigurationError("validate needs at least one --vehicle")
    vehicles = [load_any_vehicle(v, args.project, args.specific_energy) for v in args.vehicle]
    cycles = [dc.resolve_cycle(c) for c in (args.cycle or dc.bundled_cycles())]
    grades = _parse_grades(args.grade)
    duty = vehicles[0].duty
    limit = dc.GRADE_LIMITS[duty]
    beyond = [g for g in grades if abs(g) > limit + 1e-12]
    if beyond and not args.force:
        raise ConfigurationError(f"grades {beyond} exceed +-{limit} rad for {duty.value}; "
                                 "pass --force to run them anyway")
    if args.reference_trace:
        reference = _reference_traces(args.reference_trace, cycles)
    elif args.reference:
        reference = load_any_vehicle(args.reference, args.project, args.specific_energy).model
    else:
        raise ConfigurationError("validate needs --reference or --reference-trace")
    if args.out is None:
        raise ConfigurationError("validate needs --out for the report")

    rows, traces = [], {}
    for veh, label in zip(vehicles, _unique_labels(vehicles)):
        run = dc.validate({label: veh.model}, reference, cycles, grades, veh.name, duty)
        rows.extend(run.rows)
        for key, trace in run.traces.items():
            merged = traces.setdefault(key, {"t": trace["t"], "reference": trace["reference"]})
            merged[f"{veh.name} {label}"] = trace[label]
    write_output(args.out, dc.validation_csv(rows))
    if args.traces:
        out_dir = Path(args.traces)
        out_dir.mkdir(parents=True, exist_ok=True)
        for (cycle, grade), trace in traces.items():
            atomic_write_text(out_dir / f"{cycle}_grade_{grade:+.3f}.csv",
                              dc.plot_trace_csv(trace))
        atomic_write_text(out_dir / "versions.json",
                          json.dumps(_versions(), indent=2, sort_keys=True) + "\n")
    print(f"{len(rows)} validation rows written to {args.out}")
    return EXIT_OK


# -- cycles, vcd, constants --------------------------------------------------------------

def cmd_cycles_list(args):
    for name in dc.bundled_cycles():
        c = dc.load_bundled_cycle(name)
        print(f"{name}\t{len(c)} samples\t{c.duration:g} s\tmax {c.v.max():.2f} m/s")
    return EXIT_OK


def cmd_vcd_schedule(args):
    vehicle = load_semi_vehicle(args.vehicle)
    schedule = mf.generate_vcd_schedule(vehicle.constants, args.gears)
    if args.out is None:
        raise ConfigurationError("vcd schedule needs --out")
    mf.write_vcd_schedule(schedule, args.out)
    write_output_sidecar(args.out)
    print(f"{len(schedule)} schedule entries for gears 1..{len(schedule.bounds)}")
    return EXIT_OK


def cmd_vcd_fit_maps(args):
    samples = mf.read_vcd_samples(args.samples)
    if args.out is None:
        raise ConfigurationError("vcd fit-maps needs --out")
    base = load_semi_vehicle(args.vehicle) if args.vehicle else None
    maps, report = mf.fit_empirical_maps(samples, base.constants.n_gears if base else None)
    out = Path(args.out)
    if base is not None:
        save_vehicle(replace(base, emaps=maps), out)
        write_output_sidecar(out)
    else:
        write_output(out, _json_text(maps.to_dict()))
    write_output(out.with_name(out.stem + ".report.json"), _json_text(report.to_dict()))
    return EXIT_OK


def cmd_extract_constants(args):
    trace = mf.read_drive_trace(args.trace)
    constants = torque_map = None
    if args.vehicle:
        vehicle = load_semi_vehicle(args.vehicle)
        constants, torque_map = vehicle.constants, vehicle.emaps.engine_torque[0]
    extracted = mf.extract_empirical_constants(trace, constants, torque_map)
    for note in extracted.diagnostics:
        logger.warning("%s", note)
    if args.out is None:
        raise ConfigurationError("extract-constants needs --out")
    write_output(args.out, _json_text(extracted.to_dict()))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="vehicle-energy",
                                description="Reduced vehicle fuel models: evaluate, fit, validate.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def model_flags(sp):
        sp.add_argument("--project", action="store_true",
                        help="project infeasible accelerations onto the feasible boundary "
                             "(simplified models)")
        sp.add_argument("--specific-energy", type=float, metavar="J_PER_G",
                        help="fuel specific energy for the power column (simplified models)")

    e = sub.add_parser("eval", help="evaluate a vehicle on points or a cycle, or dump a grid")
    e.add_argument("--vehicle", required=True,
                   help="vehicle JSON file (simplified or semi-principled) or bundled key")
    e.add_argument("--points", help="CSV of operating points with header v,a[,theta]")
    e.add_argument("--cycle", help="bundled cycle name or t,v[,theta] CSV")
    e.add_argument("--grade", type=float, action="append", help="constant grade for --cycle")
    e.add_argument("--out", help="evaluation CSV")
    e.add_argument("--export-grid", metavar="PATH", help="write a grid dump (.npz or CSV)")
    e.add_argument("--grid-axis", type=parse_axis, action="append", metavar="NAME=START,STOP,N",
                   help="override one grid axis (v, a or theta)")
    model_flags(e)
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fit", help="fit a simplified model to an oracle")
    f.add_argument("--vehicle", help="semi-principled vehicle file used as the oracle")
    f.add_argument("--grid", help="grid dump used as the oracle")
    f.add_argument("--name", help="name of the fitted parameter set")
    f.add_argument("--duty", choices=[d.value for d in Duty], help="skip duty detection")
    f.add_argument("--out", help="output parameter JSON")
    f.add_argument("--report", help="fit report JSON (default: <out>.report.json)")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("validate", help="trip-fuel comparison table against a reference")
    v.add_argument("--vehicle", action="append", help="model file or bundled key (repeatable)")
    v.add_argument("--reference", help="reference model file or bundled key")
    v.add_argument("--reference-trace", action="append", metavar="CYCLE:GRADE:PATH",
                   help="recorded reference run in the drive-trace CSV layout (repeatable)")
    v.add_argument("--cycle", action="append", help="cycle name or file (default: all bundled)")
    v.add_argument("--grade", action="append",
                   help="grade(s) in rad, comma separated or repeated (default 0)")
    v.add_argument("--force", action="store_true", help="accept grades beyond the duty range")
    v.add_argument("--out", help="validation report CSV")
    v.add_argument("--traces", metavar="DIR", help="write 20 s moving-average fuel traces")
    model_flags(v)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("cycles", help="bundled drive cycles")
    csub = c.add_subparsers(dest="cycles_command", required=True)
    csub.add_parser("list", help="list bundled cycles").set_defaults(func=cmd_cycles_list)

    d = sub.add_parser("vcd", help="steady-state test schedule and map fitting")
    dsub = d.add_subparsers(dest="vcd_command", required=True)
    ds = dsub.add_parser("schedule", help="write the test schedule for a vehicle")
    ds.add_argument("--vehicle", required=True, help="semi-principled vehicle file")
    ds.add_argument("--gears", type=int, help="number of gears to schedule (default: all)")
    ds.add_argument("--out", help="schedule CSV")
    ds.set_defaults(func=cmd_vcd_schedule)
    dm = dsub.add_parser("fit-maps", help="fit empirical maps to recorded test samples")
    dm.add_argument("samples", help="CSV gear,v,pedal,N,T,fuel,N_output,F_wheel,tc_locked")
    dm.add_argument("--vehicle", help="vehicle whose empirical maps are replaced")
    dm.add_argument("--out", help="output vehicle (with --vehicle) or maps JSON")
    dm.set_defaults(func=cmd_vcd_fit_maps)

    x = sub.add_parser("extract-constants", help="tune empirical constants from a drive trace")
    x.add_argument("trace", help="CSV t,v,gear,N,T,fuel,F_wheel,tc_state")
    x.add_argument("--vehicle", help="vehicle for the first-gear torque correction")
    x.add_argument("--out", help="constants JSON")
    x.set_defaults(func=cmd_extract_constants)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except VehicleEnergyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
