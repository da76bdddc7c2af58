"""What a policy sees each tick, and the actions it may return."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Union

import numpy as np

from ..accounting import BudgetStatus, budget_status


# ------------------------------------------------------------------ actions
@dataclass(frozen=True)
class SetWorkerCount:
    n: int


@dataclass(frozen=True)
class SuspendAll:
    pass


@dataclass(frozen=True)
class ResumeAll:
    pass


@dataclass(frozen=True)
class SetPowerCap:
    container: str
    watts: float


@dataclass(frozen=True)
class SetChargeRate:
    watts: float


@dataclass(frozen=True)
class SetMaxDischarge:
    watts: float


@dataclass(frozen=True)
class SpawnReplica:
    task: int


PolicyAction = Union[SetWorkerCount, SuspendAll, ResumeAll, SetPowerCap, SetChargeRate, SetMaxDischarge, SpawnReplica]
ACTION_TYPES = (SetWorkerCount, SuspendAll, ResumeAll, SetPowerCap, SetChargeRate, SetMaxDischarge, SpawnReplica)


def action_label(action) -> str:
    name = type(action).__name__
    args = ",".join(f"{v!r}" for v in action.__dict__.values())
    return f"{name}({args})"


# ------------------------------------------------------------------ views
@dataclass(frozen=True)
class ContainerView:
    id: str
    role: str
    power: float
    power_cap: float
    utilization: float
    running: bool


@dataclass(frozen=True)
class BatteryView:
    capacity: float
    level: float
    floor: float
    reserve: float
    charge_rate: float
    max_discharge: float
    phys_max_charge: float
    phys_max_discharge: float
    delta_t: float

    @property
    def usable_top(self) -> float:
        return self.capacity - self.reserve

    @property
    def is_full(self) -> bool:
        return self.capacity > 0 and self.level >= self.usable_top - 1e-9

    @property
    def is_empty(self) -> bool:
        return self.level <= self.floor + 1e-9

    @property
    def available_discharge(self) -> float:
        """Power the battery could deliver this tick ignoring the software ceiling."""
        return max(0.0, min(self.phys_max_discharge, (self.level - self.floor) / (self.delta_t / 3600.0)))


class TenantView:
    """Getter half of the narrow API; setters are expressed as returned actions."""

    __slots__ = ("_api",)

    def __init__(self, api):
        self._api = api

    def get_solar_power(self):
        return self._api.get_solar_power()

    def get_grid_power(self):
        return self._api.get_grid_power()

    def get_grid_carbon(self):
        return self._api.get_grid_carbon()

    def get_battery_discharge_rate(self):
        return self._api.get_battery_discharge_rate()

    def get_battery_charge_level(self):
        return self._api.get_battery_charge_level()

    def get_container_powercap(self, cid):
        return self._api.get_container_powercap(cid)

    def get_container_power(self, cid):
        return self._api.get_container_power(cid)


class LedgerView:
    """Monitoring-library queries over this tenant's recorded history."""

    def __init__(self, store, ledger, tenant: str, tick: int):
        self._store = store
        self._ledger = ledger
        self._tenant = tenant
        self._tick = tick

    def app_power(self) -> float:
        """Tenant power in the previous tick (0 before the first tick)."""
        return self._store.app_power(self._tenant, self._tick - 1) if self._tick > 0 else 0.0

    def app_energy(self, t1, t2) -> float:
        return self._store.interval(self._tenant, t1, t2).energy

    def app_carbon(self, t1, t2) -> float:
        return self._store.interval(self._tenant, t1, t2).carbon

    def container_energy(self, cid, t1, t2) -> float:
        return self._store.interval(self._tenant, t1, t2, container=cid).energy

    def container_carbon(self, cid, t1, t2) -> float:
        return self._store.interval(self._tenant, t1, t2, container=cid).carbon

    @property
    def cumulative_carbon(self) -> float:
        return self._ledger.cumulative_carbon

    @property
    def credits(self) -> float:
        return self._ledger.credits

    @property
    def carbon_rate(self):
        return self._ledger.target_rate

    def budget_status(self, budget: float | None = None, horizon_s: float | None = None) -> BudgetStatus:
        b = self._ledger.budget if budget is None else budget
        h = self._ledger.horizon_s if horizon_s is None else horizon_s
        return budget_status(b, h, self._ledger.cumulative_carbon, self._ledger.elapsed_s, self._ledger.tenant)


def _frozen(arr) -> np.ndarray:
    view = np.asarray(arr).view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class PolicyContext:
    tick: int
    time_s: float
    delta_t: float
    horizon_ticks: int
    api: TenantView
    ledger: LedgerView
    battery: BatteryView
    containers: tuple[ContainerView, ...]
    telemetry: Mapping[str, Any]
    intensity_history: np.ndarray  # ticks 0..tick inclusive
    intensity_trace: np.ndarray  # whole run, for full-trace thresholds
    power_model: Any
    workload_model: Any = None
    base_workers: int = 0
    worker_role: str = "worker"
    events: tuple = ()
    config: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def build(cls, **kw) -> "PolicyContext":
        kw["telemetry"] = MappingProxyType(dict(kw.get("telemetry", {})))
        kw["config"] = MappingProxyType(dict(kw.get("config", {})))
        kw["intensity_history"] = _frozen(kw["intensity_history"])
        kw["intensity_trace"] = _frozen(kw["intensity_trace"])
        return cls(**kw)

    @property
    def solar(self) -> float:
        return self.api.get_solar_power()

    @property
    def intensity(self) -> float:
        return self.api.get_grid_carbon()

    @property
    def arrival_rate(self) -> float:
        return float(self.telemetry.get("arrival_rate_now", 0.0))

    @property
    def workers(self) -> int:
        return sum(1 for c in self.containers if c.role == self.worker_role)

    @property
    def done(self) -> bool:
        return bool(self.telemetry.get("done", False))

    @property
    def dt_h(self) -> float:
        return self.delta_t / 3600.0

    def carbon_rate_of(self, watts: float) -> float:
        """g/s emitted by ``watts`` of grid power at the current intensity."""
        return watts / 1000.0 * self.intensity / 3600.0
