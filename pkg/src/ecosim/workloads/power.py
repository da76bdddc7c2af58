"""Linear per-container power model and power-cap enforcement."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

# Microserver figures: 1.35 W idle, 5 W at 100% CPU, 10 W with the GPU busy.
P_IDLE = 1.35
P_MAX = 5.0
P_MAX_GPU = 10.0


@dataclass(frozen=True)
class PowerModel:
    p_idle: float = P_IDLE
    p_max: float = P_MAX

    def __post_init__(self):
        if not 0.0 <= self.p_idle < self.p_max:
            raise ValueError(f"need 0 <= p_idle < p_max, got {self.p_idle}, {self.p_max}")

    @property
    def dynamic_range(self) -> float:
        return self.p_max - self.p_idle

    def power(self, utilization: float) -> float:
        u = min(max(utilization, 0.0), 1.0)
        return self.p_idle + self.dynamic_range * u

    def cap_to_util(self, cap: float) -> float:
        if math.isinf(cap):
            return 1.0
        return min(max((cap - self.p_idle) / self.dynamic_range, 0.0), 1.0)

    def util_for_power(self, watts: float) -> float:
        return self.cap_to_util(watts)


GPU_POWER_MODEL = PowerModel(P_IDLE, P_MAX_GPU)


class ContainerStatus(str, enum.Enum):
    RUNNING = "running"
    SUSPENDED = "suspended"


@dataclass
class ContainerState:
    id: str
    tenant_id: str
    power_model: PowerModel = field(default_factory=PowerModel)
    power_cap: float = math.inf
    utilization: float = 0.0
    status: ContainerStatus = ContainerStatus.RUNNING
    role: str = "worker"
    # power drawn in the most recent tick (W)
    power: float = 0.0
    # optional direct power draw that bypasses the utilization model
    fixed_power: float | None = None

    @property
    def running(self) -> bool:
        return self.status is ContainerStatus.RUNNING

    def effective_utilization(self, wanted: float) -> float:
        return min(min(max(wanted, 0.0), 1.0), self.power_model.cap_to_util(self.power_cap))

    def draw(self, wanted: float) -> float:
        """Apply one tick of demand; records and returns the container's power."""
        if not self.running:
            self.utilization = 0.0
            self.power = 0.0
        elif self.fixed_power is not None:
            self.utilization = 1.0
            self.power = self.fixed_power if math.isinf(self.power_cap) else min(self.fixed_power, self.power_cap)
        else:
            self.utilization = self.effective_utilization(wanted)
            self.power = self.power_model.power(self.utilization)
        return self.power


def cap_to_util(model: PowerModel, power_cap: float) -> float:
    return model.cap_to_util(power_cap)


def container_power(model: PowerModel, utilization: float, power_cap: float = math.inf) -> float:
    """Power of a running container whose utilization is limited by its cap.

    A cap below idle power pins the container at p_idle: a running container
    cannot draw less than idle.
    """
    u = min(max(utilization, 0.0), 1.0)
    return model.power(min(u, model.cap_to_util(power_cap)))


class ContainerIds:
    """Per-tenant id source so that tenants never perturb each other's ids."""

    def __init__(self, tenant_id: str):
        self.tenant_id = tenant_id
        self._counter = itertools.count()

    def next(self, role: str = "worker") -> str:
        return f"{self.tenant_id}.{role[0]}{next(self._counter)}"
