"""Carbon-rate limiting and flexible carbon budgeting for interactive services."""
from __future__ import annotations

import math

from ..errors import ConfigError
from ..workloads.interactive import service_power, workers_for_slo
from .base import Policy
from .context import SetWorkerCount

# keeps float rounding from nudging the ledger a hair over its budget
_SAFETY = 1.0 + 1e-9


class RateLimitScaler(Policy):
    """Hold the measured carbon rate at or below ``target_rate`` (g/s) at all times."""

    name = "rate_limit"

    def __init__(self, target_rate: float, min_workers: int = 1, max_workers: int | None = None, max_step: int | None = 4):
        if target_rate < 0:
            raise ConfigError("target carbon rate must be >= 0")
        self.target_rate = float(target_rate)
        self.min_workers = min_workers
        self.max_workers = max_workers
        self.max_step = max_step

    def params(self):
        return {"rate": self.target_rate}

    def delta(self, app_power: float, per_container_power: float, intensity: float) -> int:
        app_rate = app_power / 1000.0 * intensity / 3600.0
        per_rate = per_container_power / 1000.0 * intensity / 3600.0
        if per_rate <= 0:
            return self.max_step if self.max_step is not None else 1
        d = math.floor((self.target_rate - app_rate) / per_rate + 1e-9)
        if self.max_step is not None:
            d = max(-self.max_step, min(self.max_step, d))
        return d

    def __call__(self, ctx):
        n = ctx.workers
        app_power = ctx.ledger.app_power()
        per_c = app_power / n if n > 0 and app_power > 0 else ctx.power_model.p_max
        target = n + self.delta(app_power, per_c, ctx.intensity)
        hi = self.max_workers if self.max_workers is not None else target
        return [SetWorkerCount(max(self.min_workers, min(hi, target)))]


class CarbonBudgetController(Policy):
    """Meet the SLO while the even-spend envelope plus banked credits allow it.

    Every tick the controller asks for the SLO-sizing worker count. It runs
    it when the projected tick carbon keeps cumulative emissions inside the
    even-spend envelope at the end of the tick (that slack is the banked
    credit plus one tick of allowance). Otherwise it runs the largest count
    whose carbon fits the even spend of what is left.
    """

    name = "carbon_budget"

    def __init__(self, budget: float, horizon_s: float | None = None, min_workers: int = 1, max_workers: int | None = None):
        if budget < 0:
            raise ConfigError("carbon budget must be >= 0")
        self.budget = float(budget)
        self.horizon_s = horizon_s
        self.min_workers = min_workers
        self.max_workers = max_workers
        self.last_mode = ""

    def params(self):
        return {"budget": self.budget}

    def __call__(self, ctx):
        model, pm = ctx.workload_model, ctx.power_model
        horizon = self.horizon_s if self.horizon_s is not None else ctx.horizon_ticks * ctx.delta_t
        status = ctx.ledger.budget_status(self.budget, horizon)
        lam = ctx.arrival_rate
        if status.remaining <= 0:
            self.last_mode = "exhausted"
            return [SetWorkerCount(self.min_workers)]
        n_slo = workers_for_slo(model, lam)
        if self.max_workers is not None:
            n_slo = min(n_slo, self.max_workers)
        n_slo = max(n_slo, self.min_workers)

        def tick_carbon(n):
            return service_power(pm, model, n, lam) * ctx.dt_h / 1000.0 * ctx.intensity * _SAFETY

        spent = ctx.ledger.cumulative_carbon
        envelope_next = self.budget / horizon * (ctx.tick + 1) * ctx.delta_t
        slack = min(envelope_next - spent, status.remaining)
        if tick_carbon(n_slo) <= slack:
            self.last_mode = "slo"
            return [SetWorkerCount(n_slo)]
        limit = min(status.allowed_rate_now * ctx.delta_t, status.remaining)
        n = n_slo
        while n > self.min_workers and tick_carbon(n) > limit:
            n -= 1
        self.last_mode = "capped"
        return [SetWorkerCount(n)]
