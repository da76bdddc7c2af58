"""Tenants, their virtual energy systems, and the multiplexer onto one physical system."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .dispatch import (
    DEFAULT_CAPACITY_WH,
    DEFAULT_CHARGE_C,
    DEFAULT_DISCHARGE_C,
    DEFAULT_FLOOR_FRACTION,
    LEVEL_TOL,
    DispatchResult,
    ExcessSolarPolicy,
    SolarShare,
    VirtualBattery,
    dispatch_tick,
)
from .errors import (
    AggregateLimitViolation,
    DuplicateRegistration,
    InfeasibleShares,
    InvariantViolation,
    NegativeValue,
    UnknownContainer,
    UnknownTenant,
)
from .workloads.power import ContainerIds, ContainerState, ContainerStatus, PowerModel

SYSTEM_TENANT = "system"
FLOW_TOL = 1e-9


@dataclass
class PhysicalEnergySystem:
    battery_capacity: float = DEFAULT_CAPACITY_WH
    battery_phys_charge_max: float = DEFAULT_CHARGE_C * DEFAULT_CAPACITY_WH
    battery_phys_discharge_max: float = DEFAULT_DISCHARGE_C * DEFAULT_CAPACITY_WH
    floor_fraction: float = DEFAULT_FLOOR_FRACTION
    # nameplate peak of the array; sizes each tenant's solar reserve
    solar_rated: float = 0.0
    # the ecovisor's own draw, billed to the "system" tenant
    baseline_power: float = 5.0
    efficiency: float = 1.0

    def __post_init__(self):
        vals = (self.battery_capacity, self.battery_phys_charge_max, self.battery_phys_discharge_max, self.solar_rated, self.baseline_power)
        if min(vals) < 0:
            raise NegativeValue("physical energy system parameters must be >= 0")


@dataclass
class VirtualEnergySystem:
    battery: VirtualBattery
    solar: SolarShare
    excess_policy: ExcessSolarPolicy = ExcessSolarPolicy.CURTAIL
    exported_wh: float = 0.0
    curtailed_wh: float = 0.0
    pooled_out_wh: float = 0.0
    pooled_in_wh: float = 0.0

    @classmethod
    def from_shares(
        cls,
        physical: PhysicalEnergySystem,
        *,
        battery_fraction: float = 0.0,
        solar_fraction: float = 0.0,
        excess_policy=ExcessSolarPolicy.CURTAIL,
        delta_t: float = 60.0,
        level: float | None = None,
        charge_rate: float = 0.0,
        max_discharge: float | None = None,
        reserve: bool = True,
    ) -> "VirtualEnergySystem":
        """Carve a static slice of the physical battery and array for one tenant."""
        if not 0.0 <= battery_fraction <= 1.0:
            raise InfeasibleShares(f"battery fraction {battery_fraction} outside [0, 1]")
        share = SolarShare(solar_fraction, solar_fraction * physical.solar_rated)
        cap = battery_fraction * physical.battery_capacity
        floor = physical.floor_fraction * cap
        discharge = battery_fraction * physical.battery_phys_discharge_max
        battery = VirtualBattery(
            capacity=cap,
            level=floor if level is None else level,
            floor=floor,
            reserve=share.reserve_wh(delta_t) if reserve else 0.0,
            charge_rate=charge_rate,
            max_discharge=discharge if max_discharge is None else max_discharge,
            phys_max_charge=battery_fraction * physical.battery_phys_charge_max,
            phys_max_discharge=discharge,
            efficiency=physical.efficiency,
        )
        return cls(battery, share, ExcessSolarPolicy.parse(excess_policy))


class Tenant:
    """One application: its containers, virtual energy system and workload."""

    def __init__(self, tenant_id: str, ves: VirtualEnergySystem, workload=None, power_model: PowerModel | None = None):
        self.id = tenant_id
        self.ves = ves
        self.workload = workload
        self.power_model = power_model or (workload.power_model if workload is not None else PowerModel())
        self.containers: dict[str, ContainerState] = {}
        self.pinned: set[str] = set()
        self.ids = ContainerIds(tenant_id)
        self.suspended = False
        self.arrival_rate = 0.0
        self.solar_now = 0.0
        self.intensity_now = 0.0
        self.last_result: DispatchResult | None = None
        self.callback = None
        self.ledger = None

    @property
    def battery(self) -> VirtualBattery:
        return self.ves.battery

    def container(self, cid: str) -> ContainerState:
        try:
            return self.containers[cid]
        except KeyError:
            raise UnknownContainer(f"tenant {self.id!r} has no container {cid!r}") from None

    def provision(self, role: str = "worker", fixed_power: float | None = None, pinned: bool = False, power_model=None) -> str:
        cid = self.ids.next(role)
        status = ContainerStatus.SUSPENDED if self.suspended and not pinned else ContainerStatus.RUNNING
        self.containers[cid] = ContainerState(
            id=cid,
            tenant_id=self.id,
            power_model=power_model or self.power_model,
            role=role,
            status=status,
            fixed_power=fixed_power,
        )
        if pinned:
            self.pinned.add(cid)
        return cid

    def deprovision(self, cid: str):
        self.container(cid)
        del self.containers[cid]
        self.pinned.discard(cid)

    def suspend_all(self):
        self.suspended = True
        for cid, c in self.containers.items():
            if cid not in self.pinned:
                c.status = ContainerStatus.SUSPENDED

    def resume_all(self):
        self.suspended = False
        for c in self.containers.values():
            c.status = ContainerStatus.RUNNING

    def demand(self) -> float:
        return math.fsum(c.power for c in self.containers.values())


@dataclass(frozen=True)
class PhysicalRecord:
    tick: int
    solar: float
    intensity: float
    solar_allocated: float
    solar_unallocated: float
    battery_discharge: float
    battery_charge: float
    pool_offered: float
    pool_absorbed: float
    system_power: float
    system_carbon: float


@dataclass(frozen=True)
class MultiplexResult:
    results: dict[str, DispatchResult]
    physical: PhysicalRecord


def _water_fill(amount: float, capacities: list[float]) -> list[float]:
    """Split ``amount`` in equal shares, never exceeding any capacity."""
    alloc = [0.0] * len(capacities)
    left = amount
    open_idx = [i for i, c in enumerate(capacities) if c > 0]
    while left > FLOW_TOL and open_idx:
        share = left / len(open_idx)
        still = []
        for i in open_idx:
            take = min(share, capacities[i] - alloc[i])
            alloc[i] += take
            left -= take
            if capacities[i] - alloc[i] > FLOW_TOL:
                still.append(i)
        if len(still) == len(open_idx):
            break
        open_idx = still
    return alloc


class Ecovisor:
    """Owns the tenants and mediates every access to the energy system."""

    def __init__(self, physical: PhysicalEnergySystem | None = None, delta_t: float = 60.0):
        self.physical = physical or PhysicalEnergySystem()
        self.delta_t = float(delta_t)
        self.tenants: dict[str, Tenant] = {}
        self.tick = -1
        self.physical_solar = 0.0
        self.intensity = 0.0

    # ------------------------------------------------------------ tenancy
    def add_tenant(self, tenant_id: str, ves: VirtualEnergySystem, workload=None, power_model=None) -> Tenant:
        if tenant_id in self.tenants or tenant_id == SYSTEM_TENANT:
            raise DuplicateRegistration(f"tenant {tenant_id!r} already exists")
        tenant = Tenant(tenant_id, ves, workload, power_model)
        self.tenants[tenant_id] = tenant
        try:
            self.validate_shares()
        except InfeasibleShares:
            del self.tenants[tenant_id]
            raise
        return tenant

    def validate_shares(self):
        p = self.physical
        vs = [t.ves for t in self.tenants.values()]
        checks = [
            ("solar fractions", sum(v.solar.fraction for v in vs), 1.0),
            ("battery capacity", sum(v.battery.capacity for v in vs), p.battery_capacity),
            ("battery charge rate", sum(v.battery.phys_max_charge for v in vs), p.battery_phys_charge_max),
            ("battery discharge rate", sum(v.battery.phys_max_discharge for v in vs), p.battery_phys_discharge_max),
        ]
        for name, total, limit in checks:
            if total > limit * (1 + 1e-12) + 1e-12:
                raise InfeasibleShares(f"sum of tenant {name} {total} exceeds physical {limit}")

    def tenant(self, tenant_id: str) -> Tenant:
        try:
            return self.tenants[tenant_id]
        except KeyError:
            raise UnknownTenant(f"unknown tenant {tenant_id!r}") from None

    def register_tick(self, tenant_id: str, callback):
        t = self.tenant(tenant_id)
        if t.callback is not None:
            raise DuplicateRegistration(f"tenant {tenant_id!r} already has a tick callback")
        t.callback = callback
        return (tenant_id, id(callback))

    def unregister_tick(self, handle):
        self.tenant(handle[0]).callback = None

    def provision_container(self, tenant_id: str, role: str = "worker", power_model=None) -> str:
        return self.tenant(tenant_id).provision(role, power_model=power_model)

    def deprovision_container(self, tenant_id: str, cid: str) -> bool:
        t = self.tenant(tenant_id)
        t.container(cid)
        if t.workload is not None and t.containers[cid].role == t.workload.worker_role:
            # route through the workload so a killed worker's in-flight work is lost
            t.workload.on_kill(t, [cid])
        t.deprovision(cid)
        return True

    # ----------------------------------------------------------- tenant API
    def set_container_powercap(self, tenant_id: str, cid: str, watts: float) -> float:
        if watts < 0 or math.isnan(watts):
            raise NegativeValue(f"power cap must be >= 0 W, got {watts}")
        self.tenant(tenant_id).container(cid).power_cap = float(watts)
        return float(watts)

    def set_battery_charge_rate(self, tenant_id: str, watts: float) -> float:
        return self.tenant(tenant_id).battery.set_charge_rate(watts)

    def set_battery_max_discharge(self, tenant_id: str, watts: float) -> float:
        return self.tenant(tenant_id).battery.set_max_discharge(watts)

    def get_solar_power(self, tenant_id: str) -> float:
        return self.tenant(tenant_id).solar_now

    def get_grid_power(self, tenant_id: str) -> float:
        r = self.tenant(tenant_id).last_result
        return r.grid_power if r is not None else 0.0

    def get_grid_carbon(self, tenant_id: str) -> float:
        self.tenant(tenant_id)
        return self.intensity

    def get_battery_discharge_rate(self, tenant_id: str) -> float:
        r = self.tenant(tenant_id).last_result
        return r.battery_to_load if r is not None else 0.0

    def get_battery_charge_level(self, tenant_id: str) -> float:
        return self.tenant(tenant_id).battery.level

    def get_container_powercap(self, tenant_id: str, cid: str) -> float:
        return self.tenant(tenant_id).container(cid).power_cap

    def get_container_power(self, tenant_id: str, cid: str) -> float:
        return self.tenant(tenant_id).container(cid).power

    def api(self, tenant_id: str) -> "TenantAPI":
        self.tenant(tenant_id)
        return TenantAPI(self, tenant_id)

    # ------------------------------------------------------------ per tick
    def begin_tick(self, tick: int, physical_solar: float, intensity: float, arrivals: dict[str, float] | None = None):
        if physical_solar < 0 or intensity < 0:
            raise NegativeValue("trace sample is negative")
        self.tick = tick
        self.physical_solar = float(physical_solar)
        self.intensity = float(intensity)
        arrivals = arrivals or {}
        for tid, t in self.tenants.items():
            t.solar_now = t.ves.solar.fraction * self.physical_solar
            t.intensity_now = self.intensity
            t.arrival_rate = float(arrivals.get(tid, 0.0))

    def multiplex_tick(self) -> MultiplexResult:
        """Dispatch every tenant, redistribute the Reclaim pool, check aggregates."""
        dt_h = self.delta_t / 3600.0
        results: dict[str, DispatchResult] = {}
        for tid, t in self.tenants.items():
            try:
                results[tid] = dispatch_tick(
                    t.demand(), t.solar_now, self.intensity, t.battery, t.ves.excess_policy, self.delta_t
                )
            except InvariantViolation as exc:
                if exc.tick is not None:
                    raise
                raise type(exc)(str(exc), tick=self.tick, tenant=tid) from exc

        pool_offered, pool_absorbed = self._reclaim(results, dt_h)

        for tid, t in self.tenants.items():
            r = results[tid]
            t.battery.level = r.battery_level_after
            t.battery.check()
            t.last_result = r
            if r.excess_sink is ExcessSolarPolicy.NET_METER:
                t.ves.exported_wh += r.excess_routed * dt_h
            elif r.excess_sink is ExcessSolarPolicy.CURTAIL:
                t.ves.curtailed_wh += r.excess_routed * dt_h

        discharge = math.fsum(r.battery_to_load for r in results.values())
        charge = math.fsum(r.battery_charge for r in results.values())
        allocated = math.fsum(r.solar_to_load + r.charge_from_solar + r.excess_routed for r in results.values())
        p = self.physical
        if discharge > p.battery_phys_discharge_max + FLOW_TOL:
            raise AggregateLimitViolation(f"aggregate discharge {discharge} W > {p.battery_phys_discharge_max} W", tick=self.tick)
        if charge > p.battery_phys_charge_max + FLOW_TOL:
            raise AggregateLimitViolation(f"aggregate charge {charge} W > {p.battery_phys_charge_max} W", tick=self.tick)
        if allocated > self.physical_solar * (1 + 1e-12) + FLOW_TOL:
            raise AggregateLimitViolation(f"allocated solar {allocated} W > physical {self.physical_solar} W", tick=self.tick)
        stored = math.fsum(t.battery.level for t in self.tenants.values())
        if stored > p.battery_capacity + LEVEL_TOL:
            raise AggregateLimitViolation(f"stored energy {stored} Wh > capacity {p.battery_capacity} Wh", tick=self.tick)

        system_carbon = p.baseline_power * dt_h / 1000.0 * self.intensity
        record = PhysicalRecord(
            tick=self.tick,
            solar=self.physical_solar,
            intensity=self.intensity,
            solar_allocated=allocated,
            solar_unallocated=max(0.0, self.physical_solar - allocated),
            battery_discharge=discharge,
            battery_charge=charge,
            pool_offered=pool_offered,
            pool_absorbed=pool_absorbed,
            system_power=p.baseline_power,
            system_carbon=system_carbon,
        )
        return MultiplexResult(results, record)

    def _reclaim(self, results: dict[str, DispatchResult], dt_h: float) -> tuple[float, float]:
        donors = [tid for tid, t in self.tenants.items()
                  if t.ves.excess_policy is ExcessSolarPolicy.RECLAIM and results[tid].excess_routed > 0]
        offered = math.fsum(results[tid].excess_routed for tid in donors)
        if offered <= 0:
            return 0.0, 0.0
        receivers = sorted(tid for tid in self.tenants if tid not in donors)
        room = []
        for tid in receivers:
            b, r = self.tenants[tid].battery, results[tid]
            if r.battery_to_load > 0:
                room.append(0.0)
                continue
            headroom = max(0.0, b.usable_top - r.battery_level_after) / (dt_h * b.efficiency)
            rate_left = max(0.0, b.phys_max_charge - r.charge_from_solar - r.charge_from_grid)
            room.append(min(headroom, rate_left))
        alloc = _water_fill(offered, room)
        absorbed = math.fsum(alloc)
        for tid, w in zip(receivers, alloc):
            if w <= 0:
                continue
            r = results[tid]
            b = self.tenants[tid].battery
            level = min(b.capacity, r.battery_level_after + w * b.efficiency * dt_h)
            results[tid] = replace(r, charge_from_pool=w, battery_level_after=level)
            self.tenants[tid].ves.pooled_in_wh += w * dt_h
        # donors keep their excess_routed (solar balance stays per tenant); the
        # unabsorbed remainder is curtailed
        for tid in donors:
            self.tenants[tid].ves.pooled_out_wh += results[tid].excess_routed * dt_h
        leftover = offered - absorbed
        if leftover > 0:
            for tid in donors:
                share = results[tid].excess_routed / offered
                self.tenants[tid].ves.curtailed_wh += leftover * share * dt_h
        return offered, absorbed


class TenantAPI:
    """The eleven narrow calls, bound to a single tenant."""

    def __init__(self, ecovisor: Ecovisor, tenant_id: str):
        self._e = ecovisor
        self.tenant_id = tenant_id

    def set_container_powercap(self, cid, watts):
        return self._e.set_container_powercap(self.tenant_id, cid, watts)

    def set_battery_charge_rate(self, watts):
        return self._e.set_battery_charge_rate(self.tenant_id, watts)

    def set_battery_max_discharge(self, watts):
        return self._e.set_battery_max_discharge(self.tenant_id, watts)

    def get_solar_power(self):
        return self._e.get_solar_power(self.tenant_id)

    def get_grid_power(self):
        return self._e.get_grid_power(self.tenant_id)

    def get_grid_carbon(self):
        return self._e.get_grid_carbon(self.tenant_id)

    def get_battery_discharge_rate(self):
        return self._e.get_battery_discharge_rate(self.tenant_id)

    def get_battery_charge_level(self):
        return self._e.get_battery_charge_level(self.tenant_id)

    def get_container_powercap(self, cid):
        return self._e.get_container_powercap(self.tenant_id, cid)

    def get_container_power(self, cid):
        return self._e.get_container_power(self.tenant_id, cid)

    def tick(self, callback):
        return self._e.register_tick(self.tenant_id, callback)
