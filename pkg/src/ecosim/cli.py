"""``ecosim`` command line: run scenarios and suites, handle traces, emit reports.

Exit codes: 0 ok, 1 configuration/input error, 2 runtime invariant
violation, 3 I/O or network failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from . import __version__
from .errors import ConfigError, EcosimError, HttpError, InvariantViolation, SchemaError, TraceError
from .harness.config import SHAPES, build_scenario, load_document
from .harness.report import write_plotdata, write_report_csv
from .harness.suites import SUITES, ReportRow, run_suite
from .kernel import Simulation
from .traces import (
    REGION_SHAPES,
    SyntheticSpec,
    TraceKind,
    dumps_trace,
    export_csv,
    fetch_live_intensity,
    load_trace,
    synth_trace,
)


EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("ecosim")


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "-"
        if math.isinf(v):
            return "inf"
        return f"{v:.4g}"
    return str(v)


def _print_rows(rows: list[ReportRow], out=None):
    cols = ["cell", "tenant", "total_carbon_g", "runtime_ticks", "p95_latency_s", "slo_violations", "energy_wh", "energy_efficiency"]
    table = [cols] + [[_fmt(getattr(r, c)) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    for row in table:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip(), file=out or sys.stdout)


# ------------------------------------------------------------------ commands
def cmd_run(args) -> int:
    doc = load_document(args.scenario)
    if doc.get("cells"):
        log.warning("%s defines cells; 'run' executes the base scenario only (use 'suite' for all cells)", args.scenario)
    scenario = build_scenario(doc, seed=args.seed)
    report = Simulation(scenario).run()
    if args.out:
        report.write(args.out)
    rows = [ReportRow.from_summary(scenario.name, "", _label(t.policy), {}, report.tenants[t.id]) for t in scenario.tenants]
    _print_rows(rows)
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def _label(policy) -> str:
    return policy.label() if hasattr(policy, "label") else repr(policy)


def cmd_suite(args) -> int:
    if args.list or not args.name:
        for name, doc in SUITES.items():
            print(f"{name:16s} {doc['description']} ({len(doc['cells'])} cells)")
        return EXIT_OK
    result = run_suite(args.name, out_dir=args.out, jobs=args.jobs, seed=args.seed, keep_reports=False)
    _print_rows(result.rows)
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = {"true": True, "false": False}.get(v.lower(), v)
    return out


def cmd_trace_synth(args) -> int:
    kind = TraceKind.parse(args.kind)
    if args.region:
        if args.region not in REGION_SHAPES:
            raise ConfigError(f"unknown region {args.region!r}; known: {', '.join(REGION_SHAPES)}")
        shape = REGION_SHAPES[args.region]
        label = f"{args.region} (synthetic)"
    else:
        if args.shape not in SHAPES:
            raise ConfigError(f"--shape must be one of {', '.join(SHAPES)} (or use --region)")
        try:
            shape = SHAPES[args.shape](**_parse_params(args.param))
        except TypeError as exc:
            raise ConfigError(f"bad --param for {args.shape}: {exc}") from None
        label = f"{args.shape} (synthetic)"
    series = synth_trace(SyntheticSpec(shape, args.jitter, kind, label), args.horizon, args.dt, seed=args.seed)
    _emit_trace(series, args.out)
    return EXIT_OK


def _emit_trace(series, out):
    if out:
        export_csv(series, out)
        print(f"wrote {len(series)} samples to {out}")
    else:
        sys.stdout.write(dumps_trace(series))


def cmd_trace_fetch(args) -> int:
    series = fetch_live_intensity(args.endpoint, args.zone, auth=args.token, window=(args.start, args.end), timeout=args.timeout)
    _emit_trace(series, args.out)
    return EXIT_OK


def cmd_trace_validate(args) -> int:
    series = load_trace(args.file, kind=args.kind, resolution=args.resolution)
    print(f"{args.file}: ok, kind={series.kind.value}, samples={len(series)}, "
          f"span=[{series.start:g}, {series.end:g}) s, resolution={series.resolution:g} s, "
          f"min={series.values.min():g}, max={series.values.max():g}")
    if args.horizon is not None:
        n = int(round(args.horizon / args.dt))
        series.resample(args.start_time, args.dt, n)
        print(f"covers {n} ticks of {args.dt:g} s from t={args.start_time:g}")
    return EXIT_OK


def cmd_report(args) -> int:
    if not os.path.isdir(args.dir):
        raise FileNotFoundError(f"no such run directory: {args.dir}")
    if args.format == "csv":
        path = write_report_csv(args.dir, args.out)
        print(f"wrote {path}")
    else:
        for path in write_plotdata(args.dir, args.out):
            print(f"wrote {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import ServiceRunner

    scenario = build_scenario(load_document(args.scenario), seed=args.seed)
    sim = Simulation(scenario)
    with ServiceRunner(sim, args.host, args.port) as runner:
        print(f"serving {scenario.name} on {runner.url}", flush=True)
        report = runner.run(pace=args.pace, start_delay=args.wait)
    if args.out:
        report.write(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecosim", description="Virtual energy system simulator for carbon-aware applications")
    p.add_argument("--version", action="version", version=f"ecosim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", help="directory for per-tick CSVs and summary.json")
    r.add_argument("--seed", type=int, help="override the scenario seed (also ECOSIM_SEED)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run a canned experiment suite")
    s.add_argument("name", nargs="?", help=f"one of {', '.join(SUITES)} or a suite TOML path")
    s.add_argument("--out", help="output directory (one subdirectory per cell)")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1, help="cells to run in parallel")
    s.add_argument("--list", action="store_true", help="list built-in suites")
    s.set_defaults(func=cmd_suite)

    t = sub.add_parser("trace", help="synthesise, fetch or validate traces")
    tsub = t.add_subparsers(dest="trace_command", required=True)
    ts = tsub.add_parser("synth", help="write a synthetic trace CSV")
    ts.add_argument("--kind", default="carbon_intensity", help="carbon_intensity | solar | arrivals")
    ts.add_argument("--shape", help=f"one of {', '.join(SHAPES)}")
    ts.add_argument("--region", help=f"canned region shape: {', '.join(REGION_SHAPES)}")
    ts.add_argument("--param", action="append", metavar="KEY=VALUE", help="shape parameter, repeatable")
    ts.add_argument("--horizon", type=float, default=86400.0, help="seconds")
    ts.add_argument("--dt", type=float, default=300.0, help="sample spacing in seconds")
    ts.add_argument("--jitter", type=float, default=0.0, help="relative gaussian noise")
    ts.add_argument("--seed", type=int, default=0)
    ts.add_argument("--out", help="output CSV (stdout when omitted)")
    ts.set_defaults(func=cmd_trace_synth)

    tf = tsub.add_parser("fetch", help="download carbon intensity from an electricityMap-style endpoint")
    tf.add_argument("--endpoint", required=True)
    tf.add_argument("--zone", required=True)
    tf.add_argument("--token", default=os.environ.get("ECOSIM_API_TOKEN"))
    tf.add_argument("--from", dest="start")
    tf.add_argument("--to", dest="end")
    tf.add_argument("--timeout", type=float, default=10.0)
    tf.add_argument("--out")
    tf.set_defaults(func=cmd_trace_fetch)

    tv = tsub.add_parser("validate", help="check a trace CSV and optionally its coverage")
    tv.add_argument("file")
    tv.add_argument("--kind")
    tv.add_argument("--resolution", type=float)
    tv.add_argument("--horizon", type=float, help="check coverage of this many seconds")
    tv.add_argument("--dt", type=float, default=60.0)
    tv.add_argument("--start-time", type=float, default=0.0)
    tv.set_defaults(func=cmd_trace_validate)

    rp = sub.add_parser("report", help="re-aggregate a run or suite directory")
    rp.add_argument("dir")
    rp.add_argument("--format", choices=("csv", "plotdata"), default="csv")
    rp.add_argument("--out", help="output file (csv) or directory (plotdata)")
    rp.set_defaults(func=cmd_report)

    sv = sub.add_parser("serve", help="run a scenario behind the HTTP/JSON API")
    sv.add_argument("scenario")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--pace", type=float, default=0.0, help="wall-clock seconds between ticks")
    sv.add_argument("--wait", type=float, default=0.0, help="seconds to wait for clients before tick 0")
    sv.add_argument("--seed", type=int)
    sv.add_argument("--out")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, SchemaError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, HttpError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EcosimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
