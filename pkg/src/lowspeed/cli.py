"""Command-line entry points: run, sweep, modes, validate."""

import argparse
import csv
import json
import sys
from dataclasses import replace

from .modes import TRUTH_TABLE_FIELDS, dump_truth_table
from .scenario import ScenarioError, load_scenario
from .simulation import Simulation
from .sweep import summary, sweep, write_report


def _add_run(sub):
    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--duration", type=float, default=None, help="override the duration [s]")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--headless", action="store_true", default=True,
                      help="run as fast as possible (default)")
    mode.add_argument("--serve", type=int, metavar="PORT", default=None,
                      help="interactive mode: wall-clock paced with a telemetry server")
    p.add_argument("--rt-factor", type=float, default=1.0,
                   help="time scale for interactive mode (2.0 = twice real time)")
    p.add_argument("--trace", default=None, help="write the per-step CSV trace here")
    p.add_argument("--metrics", default=None, help="write the metrics JSON here")


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="penetration-rate study")
    p.add_argument("--scenario", required=True)
    p.add_argument("--penetration", required=True,
                   help="comma-separated list, e.g. 0,0.25,0.5,0.75,1.0")
    p.add_argument("--seeds", type=int, default=10, help="seeds per point")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--quiet", action="store_true")


def _add_modes(sub):
    p = sub.add_parser("modes", help="mode arbitration tools")
    p.add_argument("--table", action="store_true",
                   help="dump the transition truth table as CSV to stdout")
    p.add_argument("--out", default=None, help="write the table here instead")


def _add_validate(sub):
    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)


def _load(path, seed=None, duration=None):
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        raise SystemExit(2)
    if seed is not None:
        sc = replace(sc, seed=seed)
    if duration is not None:
        sc = replace(sc, duration=duration)
    return sc


def cmd_run(args):
    sc = _load(args.scenario, args.seed, args.duration)
    if args.serve is not None:
        from .telemetry import TelemetryServer, run_paced
        sim = Simulation(sc)
        server = TelemetryServer(sim, port=args.serve)
        server.start()
        print(f"serving telemetry on ws://127.0.0.1:{args.serve} "
              f"(rt x{args.rt_factor:g}); ctrl-c stops")
        try:
            metrics = run_paced(sim, server, rt_factor=args.rt_factor)
        except KeyboardInterrupt:
            metrics = sim.metrics()
            print("\ninterrupted")
        finally:
            server.stop()
    else:
        sim = Simulation(sc)
        metrics = sim.run()
    if args.trace:
        sim.write_trace(args.trace)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_sweep(args):
    sc = _load(args.scenario)
    try:
        penetrations = [float(x) for x in args.penetration.split(",") if x.strip()]
    except ValueError:
        print(f"bad --penetration list: {args.penetration!r}", file=sys.stderr)
        return 2
    progress = None
    if not args.quiet:
        def progress(p, seed, metrics):
            print(f"  p={p:.2f} seed={seed}: collisions={metrics.collisions} "
                  f"mean_speed={metrics.mean_speed:.2f}")
    points = sweep(sc, penetrations, args.seeds, progress=progress)
    write_report(points, args.out)
    print(summary(points))
    print(f"report written to {args.out}")
    return 1 if any(pt.tainted for pt in points) else 0


def cmd_modes(args):
    if not args.table:
        print("nothing to do; try --table", file=sys.stderr)
        return 2
    rows = dump_truth_table()
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    writer = csv.DictWriter(out, fieldnames=TRUTH_TABLE_FIELDS)
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        out.close()
        print(f"{len(rows)} rows written to {args.out}")
    return 0


def cmd_validate(args):
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    print(f"{args.scenario}: ok "
          f"({len(sc.road.segments)} segments, {sc.road.total_length:.0f} m, "
          f"duration {sc.duration:.0f} s, seed {sc.seed})")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lowspeed",
        description="deterministic low-speed automation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_sweep(sub)
    _add_modes(sub)
    _add_validate(sub)
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "modes": cmd_modes,
               "validate": cmd_validate}[args.command]
    try:
        raise SystemExit(handler(args))
    except BrokenPipeError:
        sys.stderr.close()
        raise SystemExit(0)


if __name__ == "__main__":
    main()
