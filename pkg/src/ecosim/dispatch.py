"""Per-tenant virtual battery state and the per-tick energy dispatch.

Units are fixed everywhere: power in W, energy in Wh, carbon in g,
carbon intensity in g/kWh and time in seconds.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import BatteryInvariantViolation, NegativeInput, NegativeRate

LEVEL_TOL = 1e-9

# Prototype battery bank: 1440 Wh, 0.25C charge, 1C discharge, 30% SoC is "empty".
DEFAULT_CAPACITY_WH = 1440.0
DEFAULT_CHARGE_C = 0.25
DEFAULT_DISCHARGE_C = 1.0
DEFAULT_FLOOR_FRACTION = 0.3


class ExcessSolarPolicy(str, enum.Enum):
    CURTAIL = "curtail"
    NET_METER = "net_meter"
    RECLAIM = "reclaim"

    @classmethod
    def parse(cls, value) -> "ExcessSolarPolicy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"netmeter": "net_meter"}
        return cls(aliases.get(key, key))


@dataclass
class VirtualBattery:
    capacity: float = 0.0
    level: float = 0.0
    floor: float = 0.0
    reserve: float = 0.0
    charge_rate: float = 0.0
    max_discharge: float = 0.0
    phys_max_charge: float = 0.0
    phys_max_discharge: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        if min(self.capacity, self.floor, self.reserve, self.phys_max_charge, self.phys_max_discharge) < 0:
            raise NegativeInput("battery parameters must be non-negative")
        if self.charge_rate < 0 or self.max_discharge < 0:
            raise NegativeRate("battery rate settings must be non-negative")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if self.floor > self.capacity:
            raise ValueError("battery floor exceeds capacity")
        # a reserve larger than the usable range would make the battery unchargeable
        self.reserve = min(self.reserve, self.capacity - self.floor)
        self.check()

    @classmethod
    def from_capacity(
        cls,
        capacity: float = DEFAULT_CAPACITY_WH,
        *,
        level: float | None = None,
        floor_fraction: float = DEFAULT_FLOOR_FRACTION,
        charge_c: float = DEFAULT_CHARGE_C,
        discharge_c: float = DEFAULT_DISCHARGE_C,
        reserve: float = 0.0,
        charge_rate: float = 0.0,
        max_discharge: float | None = None,
        efficiency: float = 1.0,
    ) -> "VirtualBattery":
        """Battery sized by C-rates; defaults reproduce the prototype bank."""
        floor = floor_fraction * capacity
        phys_discharge = discharge_c * capacity
        return cls(
            capacity=capacity,
            level=floor if level is None else level,
            floor=floor,
            reserve=reserve,
            charge_rate=charge_rate,
            max_discharge=phys_discharge if max_discharge is None else max_discharge,
            phys_max_charge=charge_c * capacity,
            phys_max_discharge=phys_discharge,
            efficiency=efficiency,
        )

    @property
    def usable_top(self) -> float:
        """Highest level charging may reach (capacity minus the solar reserve)."""
        return self.capacity - self.reserve

    @property
    def is_full(self) -> bool:
        return self.level >= self.usable_top - LEVEL_TOL

    @property
    def is_empty(self) -> bool:
        return self.level <= self.floor + LEVEL_TOL

    def check(self):
        if not (self.floor - LEVEL_TOL <= self.level <= self.capacity + LEVEL_TOL):
            raise BatteryInvariantViolation(
                f"battery level {self.level!r} Wh outside [{self.floor}, {self.capacity}]"
            )

    def set_charge_rate(self, watts: float) -> float:
        if watts < 0 or math.isnan(watts):
            raise NegativeRate(f"charge rate must be >= 0 W, got {watts}")
        self.charge_rate = float(watts)
        return self.charge_rate

    def set_max_discharge(self, watts: float) -> float:
        if watts < 0 or math.isnan(watts):
            raise NegativeRate(f"max discharge must be >= 0 W, got {watts}")
        self.max_discharge = float(watts)
        return self.max_discharge

    def copy(self) -> "VirtualBattery":
        return replace(self)


@dataclass(frozen=True)
class SolarShare:
    fraction: float = 0.0
    rated_peak: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"solar fraction must lie in [0, 1], got {self.fraction}")
        if self.rated_peak < 0:
            raise NegativeInput("rated_peak must be >= 0")

    def reserve_wh(self, delta_t: float) -> float:
        """Battery headroom withheld so a full tick of peak solar stays storable."""
        return self.rated_peak * delta_t / 3600.0


@dataclass(frozen=True)
class DispatchResult:
    demand: float
    solar: float
    solar_to_load: float
    battery_to_load: float
    grid_to_load: float
    charge_from_solar: float
    charge_from_grid: float
    excess_routed: float
    excess_sink: ExcessSolarPolicy
    carbon_g: float
    battery_level_after: float
    # Reclaim-pool energy absorbed from other tenants (set by the multiplexer)
    charge_from_pool: float = 0.0

    @property
    def grid_power(self) -> float:
        return self.grid_to_load + self.charge_from_grid

    @property
    def battery_charge(self) -> float:
        return self.charge_from_solar + self.charge_from_grid + self.charge_from_pool


def dispatch_tick(
    demand: float,
    solar: float,
    intensity: float,
    battery: VirtualBattery,
    excess_policy: ExcessSolarPolicy = ExcessSolarPolicy.CURTAIL,
    delta_t: float = 60.0,
) -> DispatchResult:
    """Solar-first dispatch of one tick; the battery argument is not mutated.

    Solar feeds the load, then the battery (automatic, not gated by the
    charge-rate setting); leftover solar goes to the excess sink. A deficit
    is served from the battery up to the discharge ceilings and then from
    the grid. Grid charging tops solar charging up to the configured rate,
    but only in ticks where the battery is not discharging.
    """
    if demand < 0 or solar < 0 or intensity < 0:
        raise NegativeInput(f"negative dispatch input: demand={demand}, solar={solar}, intensity={intensity}")
    if delta_t <= 0:
        raise NegativeInput("delta_t must be positive")
    dt_h = delta_t / 3600.0
    b = battery

    solar_to_load = min(demand, solar)
    excess = solar - solar_to_load
    # headroom expressed as input power so the top is reached exactly when efficiency < 1
    headroom_w = max(0.0, b.capacity - b.reserve - b.level) / (dt_h * b.efficiency)
    charge_from_solar = min(excess, b.phys_max_charge, headroom_w)
    excess_routed = excess - charge_from_solar

    deficit = demand - solar_to_load
    avail_discharge = max(0.0, min(b.max_discharge, b.phys_max_discharge, (b.level - b.floor) / dt_h))
    battery_to_load = min(deficit, avail_discharge)
    grid_to_load = deficit - battery_to_load

    if battery_to_load > 0.0:
        charge_from_grid = 0.0
    else:
        ceiling = min(b.phys_max_charge - charge_from_solar, headroom_w - charge_from_solar)
        charge_from_grid = min(max(b.charge_rate - charge_from_solar, 0.0), max(ceiling, 0.0))

    level = b.level + (charge_from_solar + charge_from_grid) * b.efficiency * dt_h - battery_to_load * dt_h
    if level < b.floor and b.floor - level <= LEVEL_TOL:
        level = b.floor
    elif level > b.capacity and level - b.capacity <= LEVEL_TOL:
        level = b.capacity
    if not (b.floor <= level <= b.capacity):
        raise BatteryInvariantViolation(f"post-dispatch level {level!r} Wh outside [{b.floor}, {b.capacity}]")

    carbon = (grid_to_load + charge_from_grid) * dt_h / 1000.0 * intensity
    return DispatchResult(
        demand=demand,
        solar=solar,
        solar_to_load=solar_to_load,
        battery_to_load=battery_to_load,
        grid_to_load=grid_to_load,
        charge_from_solar=charge_from_solar,
        charge_from_grid=charge_from_grid,
        excess_routed=excess_routed,
        excess_sink=ExcessSolarPolicy.parse(excess_policy),
        carbon_g=carbon,
        battery_level_after=level,
    )


def ticks_to_fill(battery: VirtualBattery, rate: float, delta_t: float) -> int:
    """Number of grid-only ticks at ``rate`` until the battery reports full."""
    b = battery.copy()
    b.set_charge_rate(rate)
    n = 0
    while not b.is_full:
        res = dispatch_tick(0.0, 0.0, 0.0, b, delta_t=delta_t)
        if res.charge_from_grid <= 0.0:
            raise ValueError("battery cannot charge at this rate")
        b.level = res.battery_level_after
        n += 1
    return n
