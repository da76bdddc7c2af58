"""Deterministic tick loop: traces -> policies -> actions -> power -> dispatch -> accounting."""
from __future__ import annotations

import copy
import csv
import enum
import io
import json
import math
import os
import queue
import zlib
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from .accounting import CarbonLedger, Notifier, Sample, TimeSeriesStore, fmt_num, percentile
from .dispatch import ExcessSolarPolicy
from .ecovisor import SYSTEM_TENANT, Ecovisor, PhysicalEnergySystem, VirtualEnergySystem
from .errors import ConfigError, DuplicateRegistration, InvariantViolation, UnknownTenant
from .policies.context import (
    ACTION_TYPES,
    BatteryView,
    ContainerView,
    LedgerView,
    PolicyContext,
    ResumeAll,
    SetChargeRate,
    SetMaxDischarge,
    SetPowerCap,
    SetWorkerCount,
    SpawnReplica,
    SuspendAll,
    TenantView,
    action_label,
)
from .traces import TraceSeries
from .workloads.base import Workload


class TickPhase(enum.IntEnum):
    SAMPLE_TRACES = 1
    POLICY_CALLBACKS = 2
    APPLY_ACTIONS = 3
    CONTAINER_POWER = 4
    DISPATCH = 5
    MULTIPLEX = 6
    ACCOUNTING = 7


@dataclass(frozen=True)
class TickConfig:
    delta_t: float = 60.0
    horizon: float = 3600.0
    start_time: float = 0.0

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ConfigError(f"delta_t must be > 0, got {self.delta_t}")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        n = self.horizon / self.delta_t
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"horizon {self.horizon} s is not a multiple of delta_t {self.delta_t} s")

    @property
    def n_ticks(self) -> int:
        return int(round(self.horizon / self.delta_t))

    def time_of(self, tick: int) -> float:
        return self.start_time + tick * self.delta_t


@dataclass
class TenantSpec:
    id: str
    workload: Workload | None = None
    policy: Callable | None = None
    solar_fraction: float = 0.0
    battery_fraction: float = 0.0
    excess_policy: ExcessSolarPolicy = ExcessSolarPolicy.CURTAIL
    battery_level: float | None = None  # initial Wh; default the floor
    charge_rate: float = 0.0
    max_discharge: float | None = None
    arrivals: str | None = None  # trace name
    carbon_rate: float | None = None  # ledger metadata (g/s)
    carbon_budget: float | None = None  # ledger metadata (g over the horizon)
    config: dict = field(default_factory=dict)


@dataclass
class Scenario:
    tick: TickConfig = field(default_factory=TickConfig)
    tenants: list[TenantSpec] = field(default_factory=list)
    physical: PhysicalEnergySystem = field(default_factory=PhysicalEnergySystem)
    traces: dict[str, TraceSeries] = field(default_factory=dict)
    seed: int = 0
    intensity_trace: str | None = "intensity"
    solar_trace: str | None = "solar"
    name: str = "scenario"


@dataclass(slots=True)
class TenantTick:
    tick: int
    time_s: float
    tenant: str
    workers: int
    running: int
    demand_w: float
    solar_w: float
    solar_to_load_w: float
    battery_to_load_w: float
    grid_to_load_w: float
    charge_from_solar_w: float
    charge_from_grid_w: float
    charge_from_pool_w: float
    excess_routed_w: float
    excess_sink: str
    carbon_g: float
    battery_wh: float
    intensity: float
    arrival_rate: float
    latency_s: float
    slo_violation: int
    work_done: float
    done: int


TENANT_COLUMNS = [f for f in TenantTick.__dataclass_fields__]
PHYSICAL_COLUMNS = [
    "tick", "time_s", "solar_w", "intensity", "solar_allocated_w", "solar_unallocated_w",
    "battery_discharge_w", "battery_charge_w", "pool_offered_w", "pool_absorbed_w",
    "system_power_w", "system_carbon_g",
]


def tenant_rng(seed: int, tenant_id: str, stream: int) -> np.random.Generator:
    """Independent generator per (seed, tenant, stream); tenants never share draws."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(tenant_id.encode()), stream])
    return np.random.default_rng(ss)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class TenantSummary:
    tenant: str
    carbon_g: float
    energy_wh: float
    grid_energy_wh: float
    solar_energy_wh: float
    battery_energy_wh: float
    runtime_ticks: float  # inf when the job never finished
    completion_tick: int | None
    slo_violations: int
    p95_latency_s: float
    work_done: float
    lost_work: float
    energy_efficiency: float  # work units per Wh
    carbon_efficiency: float  # work units per g
    max_workers: int
    curtailed_wh: float
    exported_wh: float


class SimulationReport:
    def __init__(self, scenario: Scenario, tick_log, physical_log, actions, store, summaries, system_carbon, errors):
        self.scenario = scenario
        self.tick_log: list[TenantTick] = tick_log
        self.physical_log = physical_log
        self.actions: list[tuple[int, str, str]] = actions
        self.store: TimeSeriesStore = store
        self.tenants: dict[str, TenantSummary] = summaries
        self.system_carbon = system_carbon
        self.errors = errors

    @property
    def n_ticks(self) -> int:
        return len(self.physical_log)

    @property
    def total_carbon(self) -> float:
        """Application carbon (excludes the ecovisor's own overhead)."""
        return math.fsum(s.carbon_g for s in self.tenants.values())

    @property
    def total_energy(self) -> float:
        return math.fsum(s.energy_wh for s in self.tenants.values())

    def tenant_log(self, tenant: str) -> list[TenantTick]:
        return [r for r in self.tick_log if r.tenant == tenant]

    def series(self, tenant: str, column: str) -> np.ndarray:
        return np.array([getattr(r, column) for r in self.tick_log if r.tenant == tenant], dtype=float)

    def tenant_actions(self, tenant: str) -> list[tuple[int, str]]:
        return [(t, a) for t, tid, a in self.actions if tid == tenant]

    def summary(self) -> dict:
        tenants = {}
        for tid, s in self.tenants.items():
            d = asdict(s)
            for k, v in d.items():
                if isinstance(v, float) and not math.isfinite(v):
                    d[k] = None if math.isnan(v) else "inf"
            tenants[tid] = d
        return {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "ticks": self.n_ticks,
            "delta_t": self.scenario.tick.delta_t,
            "total_carbon_g": self.total_carbon,
            "total_energy_wh": self.total_energy,
            "system_carbon_g": self.system_carbon,
            "tenants": tenants,
            "errors": self.errors,
        }

    # ------------------------------------------------------------- files
    def tenants_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TENANT_COLUMNS)
        for r in self.tick_log:
            w.writerow([_fmt(getattr(r, c)) for c in TENANT_COLUMNS])
        return buf.getvalue()

    def physical_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PHYSICAL_COLUMNS)
        dt, t0 = self.scenario.tick.delta_t, self.scenario.tick.start_time
        for rec in self.physical_log:
            w.writerow([
                rec.tick, fmt_num(t0 + rec.tick * dt), repr(rec.solar), repr(rec.intensity),
                repr(rec.solar_allocated), repr(rec.solar_unallocated), repr(rec.battery_discharge),
                repr(rec.battery_charge), repr(rec.pool_offered), repr(rec.pool_absorbed),
                repr(rec.system_power), repr(rec.system_carbon),
            ])
        return buf.getvalue()

    def actions_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tick", "tenant", "action"])
        w.writerows(self.actions)
        return buf.getvalue()

    def write(self, out_dir) -> dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = {}
        files = {
            "samples.csv": self.store.dumps_csv(),
            "tenants.csv": self.tenants_csv(),
            "physical.csv": self.physical_csv(),
            "actions.csv": self.actions_csv(),
            "summary.json": json.dumps(self.summary(), indent=2, sort_keys=True) + "\n",
        }
        for name, text in files.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            paths[name] = path
        return paths


class Simulation:
    """One run of a scenario. Build, optionally register callbacks, then ``run()``."""

    def __init__(self, scenario: Scenario, copy_specs: bool = True):
        self.scenario = scenario
        cfg = scenario.tick
        self.cfg = cfg
        self.n_ticks = cfg.n_ticks
        self.ecovisor = Ecovisor(scenario.physical, cfg.delta_t)
        self.store = TimeSeriesStore(cfg.delta_t, cfg.start_time)
        self.tick = 0
        self.commands: queue.SimpleQueue = queue.SimpleQueue()
        self.tick_log: list[TenantTick] = []
        self.physical_log = []
        self.action_log: list[tuple[int, str, str]] = []
        self.errors: list[str] = []
        self.system_carbon = 0.0

        self.intensity = self._sample(scenario.intensity_trace)
        self.solar = self._sample(scenario.solar_trace)
        self.ledgers: dict[str, CarbonLedger] = {}
        self.notifiers: dict[str, Notifier] = {}
        self.step_rngs: dict[str, np.random.Generator] = {}
        self.arrivals: dict[str, np.ndarray] = {}
        self.specs: dict[str, TenantSpec] = {}
        self.peak_workers: dict[str, int] = {}

        ids = [t.id for t in scenario.tenants]
        if len(set(ids)) != len(ids):
            raise DuplicateRegistration("tenant ids must be unique")
        for spec in scenario.tenants:
            self._add_tenant(copy.deepcopy(spec) if copy_specs else spec)
        self.ecovisor.validate_shares()
        if scenario.physical.baseline_power > 0:
            self.store.register_tenant(SYSTEM_TENANT)

    # -------------------------------------------------------------- setup
    def _sample(self, name: str | None, required: bool = False) -> np.ndarray:
        if name is None or name not in self.scenario.traces:
            if required:
                raise ConfigError(f"scenario lacks trace {name!r}")
            return np.zeros(self.n_ticks)
        return self.scenario.traces[name].resample(self.cfg.start_time, self.cfg.delta_t, self.n_ticks)

    def _add_tenant(self, spec: TenantSpec):
        if spec.id == SYSTEM_TENANT:
            raise ConfigError(f"tenant id {SYSTEM_TENANT!r} is reserved")
        ves = VirtualEnergySystem.from_shares(
            self.scenario.physical,
            battery_fraction=spec.battery_fraction,
            solar_fraction=spec.solar_fraction,
            excess_policy=spec.excess_policy,
            delta_t=self.cfg.delta_t,
            level=spec.battery_level,
            charge_rate=spec.charge_rate,
            max_discharge=spec.max_discharge,
        )
        tenant = self.ecovisor.add_tenant(spec.id, ves, spec.workload)
        ledger = CarbonLedger(spec.id, self.cfg.delta_t)
        if spec.carbon_rate is not None:
            ledger.set_carbon_rate(spec.carbon_rate)
        if spec.carbon_budget is not None:
            ledger.set_carbon_budget(spec.carbon_budget, self.cfg.horizon)
        tenant.ledger = ledger
        self.ledgers[spec.id] = ledger
        self.notifiers[spec.id] = Notifier()
        self.specs[spec.id] = spec
        self.store.register_tenant(spec.id)
        if spec.arrivals is not None:
            self.arrivals[spec.id] = self._sample(spec.arrivals, required=True)
        if spec.workload is not None:
            spec.workload.setup(tenant, tenant_rng(self.scenario.seed, spec.id, 0))
        self.step_rngs[spec.id] = tenant_rng(self.scenario.seed, spec.id, 1)
        self.peak_workers[spec.id] = 0
        if spec.policy is not None:
            self.register_tick_callback(spec.id, spec.policy)

    def register_tick_callback(self, tenant_id: str, callback):
        """At most one callback per tenant, fired in phase 2 of every tick."""
        return self.ecovisor.register_tick(tenant_id, callback)

    def submit(self, tenant_id: str, action):
        """Queue an action from another thread; applied in phase 3 of the next tick."""
        if tenant_id not in self.ecovisor.tenants:
            raise UnknownTenant(tenant_id)
        self.commands.put((tenant_id, action))

    # ---------------------------------------------------------------- loop
    def _context(self, tenant, tick: int, events) -> PolicyContext:
        b = tenant.battery
        wl = tenant.workload
        tel = dict(wl.telemetry()) if wl is not None else {}
        tel["arrival_rate_now"] = tenant.arrival_rate
        return PolicyContext.build(
            tick=tick,
            time_s=self.cfg.time_of(tick),
            delta_t=self.cfg.delta_t,
            horizon_ticks=self.n_ticks,
            api=TenantView(self.ecovisor.api(tenant.id)),
            ledger=LedgerView(self.store, self.ledgers[tenant.id], tenant.id, tick),
            battery=BatteryView(
                b.capacity, b.level, b.floor, b.reserve, b.charge_rate, b.max_discharge,
                b.phys_max_charge, b.phys_max_discharge, self.cfg.delta_t,
            ),
            containers=tuple(
                ContainerView(c.id, c.role, c.power, c.power_cap, c.utilization, c.running)
                for c in tenant.containers.values()
            ),
            telemetry=tel,
            intensity_history=self.intensity[: tick + 1],
            intensity_trace=self.intensity,
            power_model=tenant.power_model,
            workload_model=getattr(wl, "model", None),
            base_workers=wl.initial_workers if wl is not None else 0,
            worker_role=wl.worker_role if wl is not None else "worker",
            events=tuple(events),
            config=self.specs[tenant.id].config,
        )

    def _apply(self, tenant, action, tick: int):
        wl = tenant.workload
        if isinstance(action, SetWorkerCount):
            if wl is not None:
                wl.set_worker_count(tenant, int(action.n))
        elif isinstance(action, SuspendAll):
            tenant.suspend_all()
        elif isinstance(action, ResumeAll):
            tenant.resume_all()
        elif isinstance(action, SetPowerCap):
            self.ecovisor.set_container_powercap(tenant.id, action.container, action.watts)
        elif isinstance(action, SetChargeRate):
            self.ecovisor.set_battery_charge_rate(tenant.id, action.watts)
        elif isinstance(action, SetMaxDischarge):
            self.ecovisor.set_battery_max_discharge(tenant.id, action.watts)
        elif isinstance(action, SpawnReplica):
            if wl is not None:
                wl.spawn_replica(tenant, action.task)
        elif callable(action):
            action(self.ecovisor, tenant)
        else:
            raise ConfigError(f"unknown policy action {action!r}")

    def step(self):
        t = self.tick
        if t >= self.n_ticks:
            raise StopIteration
        cfg, eco = self.cfg, self.ecovisor
        dt_h = cfg.delta_t / 3600.0
        time_s = cfg.time_of(t)

        # (1) sample traces
        eco.begin_tick(t, float(self.solar[t]), float(self.intensity[t]), {tid: float(a[t]) for tid, a in self.arrivals.items()})

        # (2) policy callbacks on a read-only view
        pending: dict[str, list] = {}
        for tid, tenant in eco.tenants.items():
            events = self.notifiers[tid].observe(t, tenant.solar_now, eco.intensity, tenant.battery)
            if tenant.callback is None:
                continue
            acts = tenant.callback(self._context(tenant, t, events)) or []
            pending[tid] = list(acts)

        # (3) apply actions, deduplicated so repeats within a tick are idempotent
        while True:
            try:
                tid, act = self.commands.get_nowait()
            except queue.Empty:
                break
            pending.setdefault(tid, []).append(act)
        for tid, acts in pending.items():
            tenant = eco.tenants[tid]
            seen = set()
            for act in acts:
                key = act if isinstance(act, ACTION_TYPES) else id(act)
                if key in seen:
                    continue
                seen.add(key)
                self._apply(tenant, act, t)
                self.action_log.append((t, tid, action_label(act) if isinstance(act, ACTION_TYPES) else repr(act)))

        # (4) container power
        for tid, tenant in eco.tenants.items():
            wl = tenant.workload
            if wl is not None:
                wl.prepare(tenant, t)
                wants = wl.wants(tenant, t)
            else:
                wants = {}
            for cid, c in tenant.containers.items():
                c.draw(wants.get(cid, 0.0))

        # (5) + (6) dispatch every tenant and multiplex onto the physical system
        mux = eco.multiplex_tick()
        self.physical_log.append(mux.physical)

        # (7) accounting, then let workloads consume the granted utilization
        intensity = eco.intensity
        for tid, tenant in eco.tenants.items():
            r = mux.results[tid]
            level = tenant.battery.level
            demand = r.demand
            grid_share = r.grid_to_load * dt_h / 1000.0 * intensity
            for cid, c in tenant.containers.items():
                carbon = grid_share * (c.power / demand) if demand > 0 else 0.0
                self.store.append(Sample(t, time_s, tid, cid, c.power, c.power * dt_h, carbon, intensity, tenant.solar_now, level))
            cfg_carbon = r.charge_from_grid * dt_h / 1000.0 * intensity
            self.store.append(Sample(t, time_s, tid, "", r.charge_from_grid, r.charge_from_grid * dt_h, cfg_carbon, intensity, tenant.solar_now, level))
            self.ledgers[tid].add(r.carbon_g)

            wl = tenant.workload
            workers = sum(1 for c in tenant.containers.values() if wl is None or c.role == wl.worker_role)
            running = sum(1 for c in tenant.containers.values() if c.running and (wl is None or c.role == wl.worker_role))
            self.peak_workers[tid] = max(self.peak_workers[tid], running)
            if wl is not None:
                wl.advance(tenant, t, cfg.delta_t, self.step_rngs[tid])
                tel = wl.telemetry()
            else:
                tel = {}
            lat = tel.get("latency", math.nan)
            self.tick_log.append(TenantTick(
                tick=t, time_s=time_s, tenant=tid, workers=workers, running=running,
                demand_w=demand, solar_w=r.solar, solar_to_load_w=r.solar_to_load,
                battery_to_load_w=r.battery_to_load, grid_to_load_w=r.grid_to_load,
                charge_from_solar_w=r.charge_from_solar, charge_from_grid_w=r.charge_from_grid,
                charge_from_pool_w=r.charge_from_pool, excess_routed_w=r.excess_routed,
                excess_sink=r.excess_sink.value, carbon_g=r.carbon_g, battery_wh=level,
                intensity=intensity, arrival_rate=tenant.arrival_rate,
                latency_s=float(lat) if lat is not None else math.nan,
                slo_violation=int(bool(tel.get("slo_violation", False))),
                work_done=float(tel.get("work_done", 0.0)), done=int(bool(tel.get("done", False))),
            ))
        rec = mux.physical
        if self.scenario.physical.baseline_power > 0:
            sysp = rec.system_power
            self.store.append(Sample(t, time_s, SYSTEM_TENANT, "", sysp, sysp * dt_h, rec.system_carbon, intensity, rec.solar,
                                     math.fsum(x.battery.level for x in eco.tenants.values())))
        self.system_carbon += rec.system_carbon
        self.store.end_tick(t)
        self.tick += 1

    def run(self) -> SimulationReport:
        while self.tick < self.n_ticks:
            try:
                self.step()
            except InvariantViolation as exc:
                if exc.tick is None:
                    exc.tick = self.tick
                raise
        return self.report()

    def report(self) -> SimulationReport:
        dt_h = self.cfg.delta_t / 3600.0
        summaries = {}
        for tid, tenant in self.ecovisor.tenants.items():
            rows = [r for r in self.tick_log if r.tenant == tid]
            carbon = math.fsum(r.carbon_g for r in rows)
            energy = math.fsum((r.demand_w + r.charge_from_grid_w) * dt_h for r in rows)
            grid = math.fsum((r.grid_to_load_w + r.charge_from_grid_w) * dt_h for r in rows)
            solar = math.fsum(r.solar_to_load_w * dt_h for r in rows)
            batt = math.fsum(r.battery_to_load_w * dt_h for r in rows)
            wl = tenant.workload
            runtime = math.inf
            completion = None
            work = 0.0
            lost = 0.0
            if wl is not None:
                work = float(wl.telemetry().get("work_done", 0.0))
                lost = float(getattr(wl, "lost_work", 0.0) or 0.0)
                if wl.done and wl.runtime_ticks is not None:
                    runtime = float(wl.runtime_ticks)
                    completion = wl.completion_tick
            lats = [r.latency_s for r in rows if r.arrival_rate > 0]
            p95 = math.nan
            if lats:
                p95 = percentile([x if x == x else math.inf for x in lats], 95)
            summaries[tid] = TenantSummary(
                tenant=tid,
                carbon_g=carbon,
                energy_wh=energy,
                grid_energy_wh=grid,
                solar_energy_wh=solar,
                battery_energy_wh=batt,
                runtime_ticks=runtime,
                completion_tick=completion,
                slo_violations=sum(r.slo_violation for r in rows),
                p95_latency_s=p95,
                work_done=work,
                lost_work=lost,
                energy_efficiency=work / energy if energy > 0 else math.nan,
                carbon_efficiency=work / carbon if carbon > 0 else math.inf if work > 0 else math.nan,
                max_workers=self.peak_workers[tid],
                curtailed_wh=tenant.ves.curtailed_wh,
                exported_wh=tenant.ves.exported_wh,
            )
        return SimulationReport(self.scenario, self.tick_log, self.physical_log, self.action_log, self.store,
                                summaries, self.system_carbon, self.errors)


def run_scenario(scenario: Scenario) -> SimulationReport:
    """Run a scenario from scratch; the Scenario object itself is never mutated."""
    return Simulation(scenario).run()
