"""Interactive services: M/M/1-per-worker tail latency and SLO sizing."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .base import Workload
from .power import PowerModel
from ..errors import SloInfeasible


@dataclass(frozen=True)
class InteractiveServiceModel:
    service_rate: float  # requests/s per worker (mu)
    workers: int = 1
    slo_latency: float = 0.06
    slo_percentile: float = 0.95

    def __post_init__(self):
        if self.service_rate <= 0:
            raise ValueError("service_rate must be > 0")
        if not 0.0 < self.slo_percentile < 1.0:
            raise ValueError("slo_percentile must lie in (0, 1)")
        if self.slo_latency <= 0:
            raise ValueError("slo_latency must be > 0")

    def with_workers(self, c: int) -> "InteractiveServiceModel":
        return replace(self, workers=c)


def latency_percentile(mu: float, workers: int, arrival_rate: float, p: float = 0.95) -> float:
    """p-quantile of the M/M/1 sojourn time with load split evenly over workers."""
    if arrival_rate < 0:
        raise ValueError("arrival rate must be >= 0")
    if workers <= 0:
        return math.inf
    per_worker = arrival_rate / workers
    if per_worker >= mu:
        return math.inf
    return -math.log1p(-p) / (mu - per_worker)


def service_latency(model: InteractiveServiceModel, arrival_rate: float) -> float:
    return latency_percentile(model.service_rate, model.workers, arrival_rate, model.slo_percentile)


def workers_for_slo(model: InteractiveServiceModel, arrival_rate: float) -> int:
    """Smallest worker count whose percentile latency meets the SLO."""
    if arrival_rate < 0:
        raise ValueError("arrival rate must be >= 0")
    headroom = model.service_rate - (-math.log1p(-model.slo_percentile)) / model.slo_latency
    if headroom <= 0:
        raise SloInfeasible(
            f"a single idle worker at mu={model.service_rate}/s cannot meet "
            f"p{model.slo_percentile * 100:g} <= {model.slo_latency}s"
        )
    c = max(1, math.ceil(arrival_rate / headroom))
    # guard against ceil() landing one short through rounding
    while latency_percentile(model.service_rate, c, arrival_rate, model.slo_percentile) > model.slo_latency:
        c += 1
    return c


def service_power(power_model: PowerModel, model: InteractiveServiceModel, workers: int, arrival_rate: float) -> float:
    """Aggregate power of ``workers`` uncapped containers serving ``arrival_rate``."""
    if workers <= 0:
        return 0.0
    rho = min(1.0, arrival_rate / (workers * model.service_rate))
    return workers * power_model.power(rho)


class ServiceWorkload(Workload):
    kind = "interactive"

    def __init__(self, model: InteractiveServiceModel, power_model: PowerModel | None = None, initial_workers=None):
        super().__init__(power_model, model.workers if initial_workers is None else initial_workers)
        self.model = model
        self.latency = math.nan
        self.violation = False
        self.violations = 0
        self.arrival_rate = 0.0
        self.latencies: list[float] = []

    def wants(self, tenant, tick):
        lam = tenant.arrival_rate
        running = [c for c in self.workers(tenant) if c.running]
        if not running:
            return {}
        rho = min(1.0, lam / (len(running) * self.model.service_rate))
        return {c.id: rho for c in running}

    def advance(self, tenant, tick, delta_t, rng):
        lam = tenant.arrival_rate
        self.arrival_rate = lam
        running = [c for c in self.workers(tenant) if c.running]
        if running:
            # a power cap throttles the CPU and with it the per-worker service rate
            cap_util = sum(c.power_model.cap_to_util(c.power_cap) for c in running) / len(running)
            mu_eff = self.model.service_rate * cap_util
            if mu_eff <= 0:
                self.latency = math.inf
            else:
                self.latency = latency_percentile(mu_eff, len(running), lam, self.model.slo_percentile)
        else:
            self.latency = math.inf if lam > 0 else math.nan
        self.violation = lam > 0 and not (self.latency <= self.model.slo_latency)
        self.violations += int(self.violation)
        self.latencies.append(self.latency)
        if math.isfinite(self.latency):
            self.work_done += lam * delta_t

    def telemetry(self):
        return {
            "done": False,
            "arrival_rate": self.arrival_rate,
            "latency": self.latency,
            "slo_violation": self.violation,
            "work_done": self.work_done,
        }
