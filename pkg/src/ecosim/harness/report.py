"""Independent re-aggregation of per-tick CSVs, and figure-ready plot data.

Nothing here touches simulator state: every number is rebuilt from the
files a run wrote, which is what makes ``summarize`` usable as an oracle.
"""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from collections import defaultdict

from ..accounting import CSV_COLUMNS
from ..ecovisor import SYSTEM_TENANT
from ..errors import SchemaError
from ..kernel import TENANT_COLUMNS
from .suites import ReportRow, rows_csv

_NUMERIC = ("power_w", "energy_wh", "carbon_g", "intensity_g_per_kwh", "solar_w", "battery_wh")


def _read(path: str, columns, what: str) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaError(f"{path}: empty file, expected a {what} header")
            if list(header) != list(columns):
                raise SchemaError(f"{path}: header {header} does not match the {what} schema {list(columns)}")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(columns):
                    raise SchemaError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(rec)}")
                rows.append(dict(zip(columns, rec)))
            return rows
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 text ({exc})") from None


def _float(rec: dict, key: str, path: str) -> float:
    try:
        return float(rec[key])
    except ValueError:
        raise SchemaError(f"{path}: column {key} holds non-numeric {rec[key]!r}") from None


def _nearest_rank(values: list[float], p: float) -> float:
    xs = sorted(values)
    rank = min(len(xs), max(1, math.ceil(p * len(xs) / 100.0 - 1e-9)))
    return xs[rank - 1]


def _locate(path: str) -> tuple[str, str]:
    if os.path.isdir(path):
        return path, os.path.join(path, "samples.csv")
    return os.path.dirname(path) or ".", path


def summarize(path, suite: str = "", cell: str = "") -> list[ReportRow]:
    """ReportRows rebuilt from ``samples.csv`` (energy, carbon) and ``tenants.csv``.

    ``path`` is a run directory or a samples CSV. Runtime, latency, SLO and
    work figures need the tenants CSV next to it; without it they are left
    as inf/nan/0. The ecovisor's own overhead rows are excluded.
    """
    directory, samples_path = _locate(os.fspath(path))
    if not os.path.exists(samples_path):
        raise SchemaError(f"no per-tick samples CSV at {samples_path}")
    samples = _read(samples_path, CSV_COLUMNS, "samples")
    if not samples:
        warnings.warn(f"{samples_path} holds a header but no samples; nothing to summarize", stacklevel=2)
        return []

    energy = defaultdict(list)
    carbon = defaultdict(list)
    order: list[str] = []
    for rec in samples:
        tid = rec["tenant"]
        if tid == SYSTEM_TENANT:
            continue
        if tid not in energy:
            order.append(tid)
        for key in _NUMERIC:
            _float(rec, key, samples_path)
        energy[tid].append(float(rec["energy_wh"]))
        carbon[tid].append(float(rec["carbon_g"]))

    meta = {}
    meta_path = os.path.join(directory, "cell.json")
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    suite = suite or meta.get("suite", "")
    cell = cell or meta.get("cell", os.path.basename(os.path.abspath(directory)))
    policies = meta.get("policies", {})
    params = json.dumps(meta.get("params", {}), sort_keys=True)

    per_tenant = defaultdict(list)
    tenants_path = os.path.join(directory, "tenants.csv")
    if os.path.exists(tenants_path):
        for rec in _read(tenants_path, TENANT_COLUMNS, "tenant log"):
            per_tenant[rec["tenant"]].append(rec)

    rows = []
    for tid in order:
        e = math.fsum(energy[tid])
        c = math.fsum(carbon[tid])
        runtime, p95, slo, work = math.inf, math.nan, 0, 0.0
        log = per_tenant.get(tid, [])
        if log:
            work = _float(log[-1], "work_done", tenants_path)
            slo = sum(int(r["slo_violation"]) for r in log)
            first_done = next((r for r in log if r["done"] == "1"), None)
            if first_done is not None:
                t = int(first_done["tick"])
                # a zero-length job is complete before its first tick
                runtime = 0.0 if t == 0 and _float(first_done, "work_done", tenants_path) == 0.0 else float(t + 1)
            lats = []
            for r in log:
                if _float(r, "arrival_rate", tenants_path) > 0:
                    v = _float(r, "latency_s", tenants_path)
                    lats.append(math.inf if math.isnan(v) else v)
            if lats:
                p95 = _nearest_rank(lats, 95)
        eff = work / e if e > 0 else math.nan
        rows.append(ReportRow(suite, cell, tid, policies.get(tid, ""), params, c, runtime, p95, slo, e, eff, work))
    return rows


def summarize_suite(out_dir) -> list[ReportRow]:
    """Re-aggregate every cell directory listed in a suite's summary.json."""
    meta = _suite_meta(out_dir)
    rows = []
    for c in meta["cells"]:
        rows.extend(summarize(os.path.join(out_dir, c["label"]), suite=meta["suite"], cell=c["label"]))
    return rows


def _suite_meta(out_dir) -> dict:
    path = os.path.join(out_dir, "summary.json")
    if not os.path.exists(path):
        raise SchemaError(f"{out_dir} has no summary.json; not a suite output directory")
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if "cells" not in meta:
        raise SchemaError(f"{path} lists no cells")
    return meta


# ------------------------------------------------------------------ plot data
class Panel:
    """One figure panel: ``x,y,series`` triples written to a single CSV."""

    def __init__(self, name: str):
        self.name = name
        self.points: list[tuple] = []

    def add(self, x, y, series: str):
        self.points.append((x, y, series))

    def write(self, directory: str) -> str:
        path = os.path.join(directory, f"{self.name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "series"])
            for x, y, s in self.points:
                w.writerow([_num(x), _num(y), s])
        return path


def _num(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf"
        return repr(v)
    return str(v)


def _tenant_log(cell_dir: str) -> list[dict]:
    return _read(os.path.join(cell_dir, "tenants.csv"), TENANT_COLUMNS, "tenant log")


def _timeseries(panel: Panel, log: list[dict], column: str, series: str, tenant: str | None = None, fn=None):
    for r in log:
        if tenant is not None and r["tenant"] != tenant:
            continue
        y = float(r[column])
        panel.add(float(r["time_s"]) / 3600.0, fn(y) if fn else y, series)


def _summary_panel(name: str, rows, x_key, y_attr, series_key, cells) -> Panel:
    panel = Panel(name)
    params = {c["label"]: c["params"] for c in cells}
    for r in rows:
        p = params.get(r.cell, {})
        x = p.get(x_key, r.cell) if x_key else r.cell
        s = str(p.get(series_key, r.tenant)) if series_key else r.tenant
        panel.add(x, getattr(r, y_attr), s)
    return panel


def _panels_reducing_carbon(out_dir, meta, rows):
    cells = meta["cells"]
    tag = {c["label"]: c["label"].split("-", 1)[1] for c in cells}
    carbon, runtime = Panel("carbon"), Panel("runtime")
    for r in rows:
        wl = next(c["params"]["workload"] for c in cells if c["label"] == r.cell)
        carbon.add(tag[r.cell], r.total_carbon_g, wl)
        runtime.add(tag[r.cell], r.runtime_ticks, wl)
    intensity = Panel("intensity")
    _timeseries(intensity, _tenant_log(os.path.join(out_dir, cells[0]["label"])), "intensity", "intensity", "app")
    return [carbon, runtime, intensity]


def _panels_budgeting(out_dir, meta, rows):
    inten, latency, rate, workers = Panel("intensity_workload"), Panel("p95_latency"), Panel("carbon_rate"), Panel("workers")
    for i, c in enumerate(meta["cells"]):
        log = _tenant_log(os.path.join(out_dir, c["label"]))
        dt = (float(log[1]["time_s"]) - float(log[0]["time_s"])) if len(log) > 1 else 1.0
        if i == 0:
            _timeseries(inten, log, "intensity", "intensity_g_per_kwh")
            _timeseries(inten, log, "arrival_rate", "arrivals_per_s")
        _timeseries(latency, log, "latency_s", c["label"])
        _timeseries(rate, log, "carbon_g", c["label"], fn=lambda g, dt=dt: g / dt)
        _timeseries(workers, log, "running", c["label"])
    return [inten, latency, rate, workers]


def _panels_virtual_battery(out_dir, meta, rows):
    level, workers, solar, latency = Panel("battery_level"), Panel("workers"), Panel("solar"), Panel("latency")
    for i, c in enumerate(meta["cells"]):
        log = _tenant_log(os.path.join(out_dir, c["label"]))
        if i == 0:
            _timeseries(solar, log, "solar_w", "solar_w")
        _timeseries(level, log, "battery_wh", c["label"])
        _timeseries(workers, log, "running", c["label"])
        if c["params"].get("app") == "service":
            _timeseries(latency, log, "latency_s", c["label"])
    runtime = Panel("runtime")
    for r in rows:
        if math.isfinite(r.runtime_ticks):
            runtime.add(r.cell, r.runtime_ticks, "runtime_ticks")
    return [level, workers, solar, latency, runtime]


def _panels_solar_capping(out_dir, meta, rows):
    cells = meta["cells"]
    runtime = _summary_panel("runtime", rows, "solar_scale", "runtime_ticks", "mode", cells)
    eff = _summary_panel("energy_efficiency", rows, "solar_scale", "energy_efficiency", "mode", cells)
    improvement = Panel("runtime_improvement")
    by = {(c["params"]["solar_scale"], c["params"]["mode"]): c["label"] for c in cells}
    rt = {r.cell: r.runtime_ticks for r in rows}
    for scale in sorted({k[0] for k in by}):
        s, d = rt.get(by.get((scale, "static"))), rt.get(by.get((scale, "dynamic")))
        if s and d is not None and math.isfinite(s):
            improvement.add(scale, 1.0 - d / s, "dynamic_vs_static")
    return [runtime, eff, improvement]


def _panels_straggler(out_dir, meta, rows):
    cells = meta["cells"]
    return [
        _summary_panel("runtime", rows, "max_replicas", "runtime_ticks", None, cells),
        _summary_panel("energy_efficiency", rows, "max_replicas", "energy_efficiency", None, cells),
    ]


def _panels_default(out_dir, meta, rows):
    power, carbon = Panel("power"), Panel("carbon")
    for c in meta["cells"]:
        log = _tenant_log(os.path.join(out_dir, c["label"]))
        for tid in sorted({r["tenant"] for r in log}):
            name = f"{c['label']}:{tid}"
            for col in ("solar_to_load_w", "battery_to_load_w", "grid_to_load_w"):
                _timeseries(power, log, col, f"{name}:{col[:-2]}", tid)
            acc = 0.0
            for r in log:
                if r["tenant"] == tid:
                    acc += float(r["carbon_g"])
                    carbon.add(float(r["time_s"]) / 3600.0, acc, f"{name}:cumulative_carbon_g")
    return [power, carbon]


PANEL_BUILDERS = {
    "reducing-carbon": _panels_reducing_carbon,
    "budgeting": _panels_budgeting,
    "virtual-battery": _panels_virtual_battery,
    "solar-capping": _panels_solar_capping,
    "straggler": _panels_straggler,
}


def write_plotdata(out_dir, dest: str | None = None) -> list[str]:
    """One ``x,y,series`` CSV per panel; works on suite and single-run directories."""
    out_dir = os.fspath(out_dir)
    dest = dest or os.path.join(out_dir, "plotdata")
    if os.path.exists(os.path.join(out_dir, "summary.json")) and "cells" in _peek(out_dir):
        meta = _suite_meta(out_dir)
        rows = summarize_suite(out_dir)
    else:
        rows = summarize(out_dir)
        meta = {"suite": "", "cells": [{"label": ".", "params": {}}]}
    builder = PANEL_BUILDERS.get(meta.get("suite"), _panels_default)
    panels = builder(out_dir, meta, rows)
    os.makedirs(dest, exist_ok=True)
    return [p.write(dest) for p in panels]


def _peek(out_dir) -> dict:
    with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as fh:
        return json.load(fh)


def write_report_csv(out_dir, dest: str | None = None) -> str:
    out_dir = os.fspath(out_dir)
    if os.path.exists(os.path.join(out_dir, "summary.json")) and "cells" in _peek(out_dir):
        rows = summarize_suite(out_dir)
    else:
        rows = summarize(out_dir)
    dest = dest or os.path.join(out_dir, "report.csv")
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_csv(rows))
    return dest
