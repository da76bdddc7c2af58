"""Canned experiment suites and the runner that executes their cells.

Each suite is a plain-data document in the scenario schema plus a list of
cells (overrides of the base). The same documents are checked in, with
comments, as ``scenarios/<name>.toml``; a test keeps the two in lock-step.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError
from ..kernel import SimulationReport, TenantSummary, run_scenario
from .config import apply_cell, build_scenario, load_document

log = logging.getLogger(__name__)

DAY = 86400


def _cell(label: str, params: dict, set_: dict, **extra) -> dict:
    return {"label": label, "params": params, "set": set_, **extra}


# --------------------------------------------------------------- reducing carbon
_ML_THRESHOLD = {"percentile": 30.0, "window_s": 2 * DAY}
_BLAST_THRESHOLD = {"percentile": 33.0}


def _rc_cells():
    cells = []
    for wl, th in (("mltrain", _ML_THRESHOLD), ("blast", _BLAST_THRESHOLD)):
        variants = [
            ("agnostic", {"name": "agnostic"}, {}),
            ("suspend-resume", {"name": "suspend_resume", "threshold": th}, {}),
            ("ws2", {"name": "wait_and_scale", "threshold": th, "k": 2}, {"k": 2}),
            ("ws3", {"name": "wait_and_scale", "threshold": th, "k": 3}, {"k": 3}),
            ("ws4", {"name": "wait_and_scale", "threshold": th, "k": 4}, {"k": 4}),
        ]
        for tag, policy, params in variants:
            workload = {"preset": wl} if wl == "mltrain" else {"preset": wl, "total_work": 5760.0}
            cells.append(_cell(f"{wl}-{tag}", {"workload": wl, **params},
                               {"tenants.0.workload": workload, "tenants.0.policy": policy}))
    return cells


REDUCING_CARBON = {
    "name": "reducing-carbon",
    "description": "Suspend-resume and Wait&Scale against a carbon-agnostic baseline",
    "seed": 1,
    "tick": {"delta_t": 300.0, "horizon": 12.0 * DAY},
    "physical": {"baseline_power": 5.0},
    "traces": {"intensity": {"kind": "carbon_intensity", "region": "caiso_like", "resolution": 300.0, "jitter": 0.05, "seed": 1}},
    "tenants": [{"id": "app", "workload": {"preset": "mltrain"}, "policy": {"name": "agnostic"}}],
    "cells": _rc_cells(),
}

# --------------------------------------------------------------- budgeting
BUDGETING = {
    "name": "budgeting",
    "description": "System carbon rate-limit versus an application carbon budget",
    "seed": 0,
    "tick": {"delta_t": 60.0, "horizon": 2.0 * DAY},
    "physical": {"baseline_power": 5.0},
    "traces": {
        "intensity": {"kind": "carbon_intensity", "shape": "sinusoid", "mean": 250.0, "amplitude": 150.0},
        # load peaks six hours after carbon intensity does
        "load": {"kind": "arrivals", "shape": "sinusoid", "mean": 2500.0, "amplitude": 2300.0, "phase": -21600.0},
    },
    "tenants": [{"id": "app", "arrivals": "load", "workload": {"preset": "webapp"}, "policy": {"name": "noop"}}],
    "cells": [
        _cell("static-rate-limit", {"target_rate": 0.02},
              {"tenants.0.policy": {"name": "rate_limit", "target_rate": 0.02, "max_workers": 500},
               "tenants.0.carbon_rate": 0.02}),
        _cell("dynamic-budget", {"budget": 3456.0},
              {"tenants.0.policy": {"name": "carbon_budget", "budget": 3456.0},
               "tenants.0.carbon_budget": 3456.0}),
    ],
}

# --------------------------------------------------------------- virtual battery
_SERVICE = {"preset": "webapp", "slo_latency": 0.1}
VIRTUAL_BATTERY = {
    "name": "virtual-battery",
    "description": "Zero-carbon batch job and web service on solar plus a virtual battery",
    "seed": 0,
    "tick": {"delta_t": 300.0, "horizon": 6.0 * DAY},
    "physical": {"solar_rated": 150.0, "baseline_power": 5.0},
    "traces": {
        "solar": {"kind": "solar", "shape": "diurnal", "peak": 150.0},
        "load": {"kind": "arrivals", "shape": "diurnal", "peak": 450.0},
    },
    "tenants": [{"id": "app", "solar_fraction": 1.0, "battery_fraction": 1.0,
                 "workload": {"preset": "spark"}, "policy": {"name": "noop"}}],
    "cells": [
        _cell("batch-static", {"app": "batch", "mode": "static"},
              {"tenants.0.policy": {"name": "battery_aware", "min_power": 20.0, "mode": "static"}}),
        _cell("batch-dynamic", {"app": "batch", "mode": "dynamic"},
              {"tenants.0.policy": {"name": "battery_aware", "min_power": 20.0, "mode": "dynamic"}}),
        _cell("service-static", {"app": "service", "mode": "static"},
              {"tenants.0.workload": _SERVICE, "tenants.0.arrivals": "load",
               "tenants.0.policy": {"name": "battery_aware_service", "min_power": 20.0, "mode": "static"}}),
        _cell("service-dynamic", {"app": "service", "mode": "dynamic"},
              {"tenants.0.workload": _SERVICE, "tenants.0.arrivals": "load",
               "tenants.0.policy": {"name": "battery_aware_service", "min_power": 20.0, "mode": "dynamic"}}),
    ],
}

# --------------------------------------------------------------- solar capping
_NODES = 10


def _cap_cells():
    cells = []
    for scale in (0.4, 0.6, 0.8):
        supply = scale * _NODES * 5.0
        for mode in ("static", "dynamic"):
            cells.append(_cell(f"scale{int(round(scale * 100))}-{mode}", {"solar_scale": scale, "mode": mode}, {
                "traces.solar.value": supply,
                "physical.solar_rated": supply,
                "tenants.0.policy": {"name": "cap_balance", "mode": mode},
            }))
    return cells


SOLAR_CAPPING = {
    "name": "solar-capping",
    "description": "Static versus water-filled power caps on a solar-only parallel job",
    "seed": 0,
    "tick": {"delta_t": 60.0, "horizon": 2.0 * DAY},
    "physical": {"solar_rated": 20.0, "battery_capacity": 0.0, "baseline_power": 5.0},
    "traces": {"solar": {"kind": "solar", "shape": "constant", "value": 20.0}},
    "tenants": [{"id": "app", "solar_fraction": 1.0,
                 "workload": {"kind": "phase_parallel", "nodes": _NODES, "phases": 20, "phase_work": 10.0, "imbalance": 0.5},
                 "policy": {"name": "cap_balance", "mode": "static"}}],
    "cells": _cap_cells(),
}

# --------------------------------------------------------------- stragglers
STRAGGLER = {
    "name": "straggler",
    "description": "Speculative replicas funded by excess solar",
    "seed": 0,
    "tick": {"delta_t": 60.0, "horizon": 1.0 * DAY},
    "physical": {"solar_rated": 200.0, "battery_capacity": 0.0, "baseline_power": 5.0},
    "traces": {"solar": {"kind": "solar", "shape": "constant", "value": 200.0}},
    "tenants": [{"id": "app", "solar_fraction": 1.0,
                 "workload": {"kind": "straggler", "tasks": 10, "waves": 20, "task_work": 10.0,
                              "straggler_prob": 0.2, "straggler_slowdown": 3.0},
                 "policy": {"name": "straggler", "max_replicas": 0}}],
    "cells": [_cell(f"replicas{k}", {"max_replicas": k}, {"tenants.0.policy": {"name": "straggler", "max_replicas": k}})
              for k in (0, 1, 2, 4, 8)],
}

# --------------------------------------------------------------- multi-tenancy
MULTI_TENANCY = {
    "name": "multi-tenancy",
    "description": "Three tenants with different policies sharing one solar array and battery",
    "seed": 0,
    "tick": {"delta_t": 300.0, "horizon": 6.0 * DAY},
    "physical": {"solar_rated": 300.0, "baseline_power": 5.0},
    "traces": {
        "intensity": {"kind": "carbon_intensity", "region": "caiso_like", "resolution": 300.0, "jitter": 0.05, "seed": 2},
        "solar": {"kind": "solar", "shape": "diurnal", "peak": 300.0},
        "load": {"kind": "arrivals", "shape": "sinusoid", "mean": 500.0, "amplitude": 400.0, "phase": -21600.0},
    },
    "tenants": [
        {"id": "a", "solar_fraction": 0.3, "battery_fraction": 0.3,
         "workload": {"preset": "mltrain"},
         "policy": {"name": "suspend_resume", "threshold": _ML_THRESHOLD}},
        {"id": "b", "solar_fraction": 0.3, "battery_fraction": 0.3, "arrivals": "load", "carbon_budget": 300.0,
         "workload": {"preset": "webapp"},
         "policy": {"name": "carbon_budget", "budget": 300.0}},
        {"id": "c", "solar_fraction": 0.4, "battery_fraction": 0.4,
         "workload": {"preset": "spark"},
         "policy": {"name": "battery_aware", "min_power": 10.0, "mode": "dynamic"}},
    ],
    "cells": [
        _cell("shared", {"tenants": "a,b,c"}, {}),
        _cell("without-b", {"tenants": "a,c"}, {}, drop_tenants=["b"]),
        _cell("reclaim", {"tenants": "a,b,c", "excess_policy": "reclaim"},
              {f"tenants.{i}.excess_policy": "reclaim" for i in range(3)}),
    ],
}

SUITES = {d["name"]: d for d in (REDUCING_CARBON, BUDGETING, VIRTUAL_BATTERY, SOLAR_CAPPING, STRAGGLER, MULTI_TENANCY)}


def suite_document(name_or_path) -> dict:
    """A built-in suite by name, or a suite TOML file by path."""
    key = str(name_or_path)
    if key in SUITES:
        return copy.deepcopy(SUITES[key])
    if os.path.exists(key):
        doc = load_document(key)
        if not doc.get("cells"):
            raise ConfigError(f"{key}: a suite file needs at least one [[cells]] entry")
        return doc
    raise ConfigError(f"unknown suite {key!r}; built-in suites: {', '.join(SUITES)}")


# --------------------------------------------------------------- report rows
@dataclass
class ReportRow:
    suite: str
    cell: str
    tenant: str
    policy: str
    params: str  # JSON object
    total_carbon_g: float
    runtime_ticks: float  # inf when unfinished (or not a job)
    p95_latency_s: float  # nan for batch tenants
    slo_violations: int
    energy_wh: float
    energy_efficiency: float  # work units per Wh
    work_done: float = 0.0

    @classmethod
    def from_summary(cls, suite: str, cell: str, policy: str, params: dict, s: TenantSummary) -> "ReportRow":
        return cls(suite, cell, s.tenant, policy, json.dumps(params, sort_keys=True), s.carbon_g, s.runtime_ticks,
                   s.p95_latency_s, s.slo_violations, s.energy_wh, s.energy_efficiency, s.work_done)

    def as_dict(self) -> dict:
        return asdict(self)


ROW_COLUMNS = [f.name for f in fields(ReportRow)]


def _cell_text(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf"
        return repr(v)
    return str(v)


def rows_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow([_cell_text(getattr(r, c)) for c in ROW_COLUMNS])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else "inf"
    return v


# --------------------------------------------------------------- runner
@dataclass
class CellResult:
    label: str
    params: dict
    policies: dict  # tenant -> policy label
    rows: list
    directory: str | None
    report: SimulationReport | None = None


def _run_cell(suite: str, doc: dict, cell: dict, out_dir: str | None, seed: int | None, keep_report: bool) -> CellResult:
    cell_doc = apply_cell(doc, cell)
    scenario = build_scenario(cell_doc, seed=seed)
    scenario.name = f"{suite}/{cell['label']}"
    report = run_scenario(scenario)
    policies = {t.id: (t.policy.label() if hasattr(t.policy, "label") else repr(t.policy)) for t in scenario.tenants}
    params = dict(cell.get("params", {}))
    rows = [ReportRow.from_summary(suite, cell["label"], policies[tid], params, s) for tid, s in report.tenants.items()]
    directory = None
    if out_dir is not None:
        directory = os.path.join(out_dir, cell["label"])
        report.write(directory)
        meta = {"suite": suite, "cell": cell["label"], "params": params, "policies": policies,
                "delta_t": scenario.tick.delta_t}
        with open(os.path.join(directory, "cell.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return CellResult(cell["label"], params, policies, rows, directory, report if keep_report else None)


def _run_cell_star(args):
    return _run_cell(*args)


@dataclass
class SuiteResult:
    name: str
    cells: list[CellResult]
    out_dir: str | None = None

    @property
    def rows(self) -> list[ReportRow]:
        return [r for c in self.cells for r in c.rows]

    def cell(self, label: str) -> CellResult:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(label)

    def row(self, label: str, tenant: str = "app") -> ReportRow:
        for r in self.cell(label).rows:
            if r.tenant == tenant:
                return r
        raise KeyError((label, tenant))


def run_suite(name_or_doc, out_dir: str | None = None, jobs: int = 1, seed: int | None = None, keep_reports: bool | None = None) -> SuiteResult:
    """Run every cell of a suite; with ``out_dir`` each cell writes its own directory."""
    doc = copy.deepcopy(name_or_doc) if isinstance(name_or_doc, dict) else suite_document(name_or_doc)
    name = doc.get("name", "suite")
    cells = doc.get("cells") or []
    labels = [c.get("label") for c in cells]
    if not cells or any(not lbl for lbl in labels) or len(set(labels)) != len(labels):
        raise ConfigError(f"suite {name!r} needs cells with unique, non-empty labels")
    keep = (jobs <= 1) if keep_reports is None else keep_reports
    args = [(name, doc, c, out_dir, seed, keep) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell_star, args))
    else:
        results = [_run_cell(*a) for a in args]
    result = SuiteResult(name, results, out_dir)
    if out_dir is not None:
        write_suite_summary(result, out_dir)
    return result


def write_suite_summary(result: SuiteResult, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_csv(result.rows))
    meta = {
        "suite": result.name,
        "cells": [{"label": c.label, "params": c.params, "policies": c.policies} for c in result.cells],
        "rows": [{k: _json_safe(v) for k, v in r.as_dict().items()} for r in result.rows],
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
