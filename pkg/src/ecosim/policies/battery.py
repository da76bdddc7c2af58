"""Zero-carbon policies that lean on the virtual battery to smooth solar."""
from __future__ import annotations

import math

from ..errors import ConfigError
from ..workloads.interactive import service_power, workers_for_slo
from .base import Policy
from .context import ResumeAll, SetMaxDischarge, SetWorkerCount, SuspendAll

_EPS = 1e-9


def _fit(watts: float, per_container: float) -> int:
    return max(0, math.floor(watts / per_container + _EPS))


class BatteryAwareBatch(Policy):
    """Run a batch job on solar plus battery only.

    static: a fixed worker count sized to ``min_power``, shrunk only when
    solar plus battery can no longer carry it (e.g. the battery hits its
    floor at night). dynamic: additionally adds one worker per tick while the
    battery is full and solar exceeds demand, and sheds workers once solar
    plus the battery fall short. Shed workers lose their uncheckpointed work.
    """

    name = "battery_aware"

    def __init__(self, min_power: float, mode: str = "dynamic", per_container_power: float | None = None, max_workers: int | None = None):
        if mode not in ("static", "dynamic"):
            raise ConfigError(f"battery policy mode must be static or dynamic, got {mode!r}")
        if min_power < 0:
            raise ConfigError("min_power must be >= 0")
        self.min_power = float(min_power)
        self.mode = mode
        self.per_container_power = per_container_power
        self.max_workers = max_workers

    def params(self):
        return {"mode": self.mode, "min_power": self.min_power}

    def __call__(self, ctx):
        if ctx.done:
            return []
        pc = self.per_container_power or ctx.power_model.p_max
        solar = ctx.solar
        supply = solar + ctx.battery.available_discharge
        base = _fit(min(self.min_power, supply), pc)
        if self.mode == "static":
            n = base
        else:
            n = ctx.workers
            if ctx.battery.is_full and solar > n * pc + _EPS:
                n += 1
            elif supply < n * pc - _EPS:
                n = _fit(supply, pc)
            n = max(n, base)
            if self.max_workers is not None:
                n = min(n, self.max_workers)
        return [SetMaxDischarge(max(0.0, n * pc - solar)), SetWorkerCount(n)]


class BatteryAwareService(Policy):
    """Solar-plus-battery web service; suspends when idle at night.

    static: fixed worker count floor(min_power / p_max) regardless of load.
    dynamic: the SLO-sizing count, shrunk to what solar plus battery can power.
    """

    name = "battery_aware_service"

    def __init__(self, min_power: float, mode: str = "dynamic", max_workers: int | None = None):
        if mode not in ("static", "dynamic"):
            raise ConfigError(f"battery policy mode must be static or dynamic, got {mode!r}")
        self.min_power = float(min_power)
        self.mode = mode
        self.max_workers = max_workers

    def params(self):
        return {"mode": self.mode, "min_power": self.min_power}

    def __call__(self, ctx):
        model, pm = ctx.workload_model, ctx.power_model
        lam = ctx.arrival_rate
        solar = ctx.solar
        if lam <= 0 and solar <= 0:
            return [SuspendAll()]
        supply = solar + ctx.battery.available_discharge
        if self.mode == "static":
            n = _fit(self.min_power, pm.p_max)
        else:
            n = workers_for_slo(model, lam)
            if self.max_workers is not None:
                n = min(n, self.max_workers)
        while n > 0 and service_power(pm, model, n, lam) > supply + _EPS:
            n -= 1
        draw = service_power(pm, model, n, lam)
        return [ResumeAll(), SetMaxDischarge(max(0.0, draw - solar)), SetWorkerCount(n)]
