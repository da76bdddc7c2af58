"""Scenario files: a plain-data (TOML) description turned into Scenario objects.

Layout of a scenario document::

    name, seed, description
    [tick]      delta_t, horizon, start_time
    [physical]  PhysicalEnergySystem fields
    [traces.<name>]  one trace; see ``build_trace``
    [[tenants]] id, shares, [tenants.workload], [tenants.policy]
    [[cells]]   suite documents only: label, params, set, drop_tenants
"""
from __future__ import annotations

import copy
import math
import os
import sys
from dataclasses import fields
from typing import Any

from ..dispatch import ExcessSolarPolicy
from ..ecovisor import PhysicalEnergySystem
from ..errors import ConfigError
from ..kernel import Scenario, TenantSpec, TickConfig
from ..policies import make_policy
from ..traces import (
    Constant,
    Diurnal,
    REGION_SHAPES,
    Sinusoid,
    SquareWave,
    SyntheticSpec,
    TraceKind,
    load_trace,
    synth_trace,
)
from ..workloads import (
    BatchJobModel,
    BatchWorkload,
    ConstantLoad,
    InteractiveServiceModel,
    PhaseParallelJob,
    PowerModel,
    ServiceWorkload,
    StragglerJob,
    make_preset,
)
from ..workloads.presets import BATCH_PRESETS, SERVICE_PRESETS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "ECOSIM_SEED"

SHAPES = {"constant": Constant, "sinusoid": Sinusoid, "square": SquareWave, "diurnal": Diurnal}


def load_document(path) -> dict:
    """Read a scenario/suite TOML file; relative trace paths resolve against it."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"scenario file not found: {path}")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    doc.setdefault("_base_dir", os.path.dirname(os.path.abspath(path)))
    return doc


def _take(d: dict, cls, what: str) -> dict:
    allowed = {f.name for f in fields(cls)}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown {what} keys: {', '.join(sorted(extra))}")
    return dict(d)


def build_trace(name: str, spec: dict, tick: TickConfig, base_dir: str = "."):
    """One trace from its table: ``file``, ``region`` or a synthetic ``shape``."""
    spec = dict(spec)
    kind = TraceKind.parse(spec.pop("kind", "carbon_intensity"))
    scale = float(spec.pop("scale", 1.0))
    if "file" in spec:
        path = spec.pop("file")
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        res = spec.pop("resolution", None)
        if spec:
            raise ConfigError(f"trace {name!r}: unknown keys {sorted(spec)}")
        series = load_trace(path, kind=kind, resolution=res)
    else:
        seed = int(spec.pop("seed", 0))
        jitter = float(spec.pop("jitter", 0.0))
        res = float(spec.pop("resolution", tick.delta_t))
        if "region" in spec:
            region = spec.pop("region")
            if region not in REGION_SHAPES:
                raise ConfigError(f"trace {name!r}: unknown region {region!r}; known: {sorted(REGION_SHAPES)}")
            shape = REGION_SHAPES[region]
            label = f"{region} (synthetic)"
        else:
            shape_name = spec.pop("shape", None)
            if shape_name not in SHAPES:
                raise ConfigError(f"trace {name!r}: shape must be one of {sorted(SHAPES)}, got {shape_name!r}")
            label = spec.pop("label", f"{shape_name} (synthetic)")
            try:
                shape = SHAPES[shape_name](**spec)
            except TypeError as exc:
                raise ConfigError(f"trace {name!r}: {exc}") from None
            spec = {}
        if spec:
            raise ConfigError(f"trace {name!r}: unknown keys {sorted(spec)}")
        horizon = max(tick.horizon, res)
        horizon = math.ceil(horizon / res) * res
        series = synth_trace(SyntheticSpec(shape, jitter, kind, label), horizon, res, seed=seed, start=tick.start_time)
    return series.scaled(scale) if scale != 1.0 else series


def build_workload(spec: dict | None):
    if spec is None:
        return None
    spec = dict(spec)
    pm = PowerModel(**spec.pop("power_model")) if "power_model" in spec else None
    if "preset" in spec:
        name = spec.pop("preset")
        if name not in BATCH_PRESETS and name not in SERVICE_PRESETS:
            raise ConfigError(f"unknown workload preset {name!r}")
        try:
            return make_preset(name, pm, **spec)
        except TypeError as exc:
            raise ConfigError(f"workload preset {name!r}: {exc}") from None
    kind = spec.pop("kind", None)
    try:
        if kind == "batch":
            return BatchWorkload(BatchJobModel(**spec), pm)
        if kind == "service":
            return ServiceWorkload(InteractiveServiceModel(**spec), pm)
        if kind == "phase_parallel":
            return PhaseParallelJob(power_model=pm, **spec)
        if kind == "straggler":
            return StragglerJob(power_model=pm, **spec)
        if kind == "constant":
            return ConstantLoad(power_model=pm, **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"workload {kind!r}: {exc}") from None
    raise ConfigError(f"workload needs a preset or a kind in batch|service|phase_parallel|straggler|constant, got {kind!r}")


def build_policy(spec: dict | None):
    if spec is None:
        return None
    spec = dict(spec)
    name = spec.pop("name", None)
    if name is None:
        raise ConfigError("policy table needs a name")
    return make_policy(name, **spec)


def build_tenant(spec: dict) -> TenantSpec:
    spec = dict(spec)
    if "id" not in spec:
        raise ConfigError("every tenant needs an id")
    workload = build_workload(spec.pop("workload", None))
    policy = build_policy(spec.pop("policy", None))
    if "excess_policy" in spec:
        try:
            spec["excess_policy"] = ExcessSolarPolicy.parse(spec["excess_policy"])
        except ValueError:
            raise ConfigError(f"tenant {spec['id']!r}: bad excess_policy {spec['excess_policy']!r}") from None
    spec = _take(spec, TenantSpec, f"tenant {spec['id']!r}")
    return TenantSpec(workload=workload, policy=policy, **spec)


def resolve_seed(doc_seed: int | None) -> int:
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return int(doc_seed or 0)


def build_scenario(doc: dict, seed: int | None = None) -> Scenario:
    """Scenario from a document; ``seed`` beats ECOSIM_SEED beats the file."""
    try:
        tick = TickConfig(**_take(doc.get("tick", {}), TickConfig, "tick"))
        physical = PhysicalEnergySystem(**_take(doc.get("physical", {}), PhysicalEnergySystem, "physical"))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    base_dir = doc.get("_base_dir", ".")
    traces = {name: build_trace(name, t, tick, base_dir) for name, t in doc.get("traces", {}).items()}
    tenants = [build_tenant(t) for t in doc.get("tenants", [])]
    if not tenants:
        raise ConfigError("scenario declares no tenants")
    return Scenario(
        tick=tick,
        tenants=tenants,
        physical=physical,
        traces=traces,
        seed=resolve_seed(doc.get("seed")) if seed is None else int(seed),
        intensity_trace=doc.get("intensity_trace", "intensity"),
        solar_trace=doc.get("solar_trace", "solar"),
        name=doc.get("name", "scenario"),
    )


# ------------------------------------------------------------------ cells
def _set_path(doc: dict, dotted: str, value: Any):
    parts = dotted.split(".")
    node: Any = doc
    for i, key in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(key)
                node[idx]
            except (ValueError, IndexError):
                raise ConfigError(f"override {dotted!r}: bad list index {key!r}") from None
            if last:
                node[idx] = copy.deepcopy(value)
            else:
                node = node[idx]
        else:
            if last:
                node[key] = copy.deepcopy(value)
            else:
                node = node.setdefault(key, {})


def apply_cell(doc: dict, cell: dict) -> dict:
    """Base document with one cell's overrides applied (the base is untouched)."""
    out = {k: copy.deepcopy(v) for k, v in doc.items() if k != "cells"}
    # overrides first, so list indices always refer to the base tenant order
    for dotted, value in cell.get("set", {}).items():
        _set_path(out, dotted, value)
    drop = set(cell.get("drop_tenants", []))
    if drop:
        known = {t["id"] for t in out.get("tenants", [])}
        if drop - known:
            raise ConfigError(f"cell {cell.get('label')!r} drops unknown tenants {sorted(drop - known)}")
        out["tenants"] = [t for t in out["tenants"] if t["id"] not in drop]
    return out
