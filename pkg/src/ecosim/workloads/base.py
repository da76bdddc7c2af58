"""Runtime contract between workload models and the tick loop."""
from __future__ import annotations

from .power import PowerModel
from ..errors import ConfigError


class Workload:
    """Base class: a workload drives the containers of exactly one tenant.

    The tenant object handed to the hooks exposes ``containers`` (ordered
    mapping id -> ContainerState), ``provision(role, ...)``,
    ``deprovision(cid)``, ``suspended`` and ``arrival_rate``.
    """

    kind = "workload"
    worker_role = "worker"

    def __init__(self, power_model: PowerModel | None = None, initial_workers: int = 0):
        self.power_model = power_model or PowerModel()
        self.initial_workers = initial_workers
        self.done = False
        self.completion_tick: int | None = None
        # ticks the job occupied; a job finishing during tick t ran t + 1 ticks
        self.runtime_ticks: int | None = None
        self.work_done = 0.0
        self.lost_work = 0.0

    # -- lifecycle ----------------------------------------------------------
    def setup(self, tenant, rng=None):
        if self.initial_workers:
            self.set_worker_count(tenant, self.initial_workers)

    def workers(self, tenant) -> list:
        return [c for c in tenant.containers.values() if c.role == self.worker_role]

    def set_worker_count(self, tenant, n: int):
        if n < 0:
            raise ConfigError(f"worker count must be >= 0, got {n}")
        current = self.workers(tenant)
        if n > len(current):
            for _ in range(n - len(current)):
                tenant.provision(self.worker_role)
        elif n < len(current):
            victims = [c.id for c in current[n:]]
            self.on_kill(tenant, victims)
            for cid in victims:
                tenant.deprovision(cid)

    def on_kill(self, tenant, cids: list[str]) -> float:
        return 0.0

    def spawn_replica(self, tenant, task):
        raise ConfigError(f"{self.kind} workload does not support replicas")

    # -- per tick -----------------------------------------------------------
    def prepare(self, tenant, tick: int):
        """Hook run before container demand is computed."""

    def wants(self, tenant, tick: int) -> dict[str, float]:
        return {c.id: 1.0 for c in tenant.containers.values()}

    def advance(self, tenant, tick: int, delta_t: float, rng):
        """Consume the utilization actually granted this tick."""

    def finish(self, tenant, tick: int):
        self.done = True
        self.completion_tick = tick
        self.runtime_ticks = tick + 1
        for cid in list(tenant.containers):
            tenant.deprovision(cid)

    def telemetry(self) -> dict:
        return {"done": self.done, "work_done": self.work_done}

    @property
    def total_work(self) -> float:
        return float("nan")


class ConstantLoad(Workload):
    """Fixed power draw from a single container (test and calibration load)."""

    kind = "constant"

    def __init__(self, watts: float, power_model: PowerModel | None = None):
        super().__init__(power_model, 0)
        if watts < 0:
            raise ConfigError("constant load must be >= 0 W")
        self.watts = float(watts)

    def setup(self, tenant, rng=None):
        if self.watts > 0:
            tenant.provision("load", fixed_power=self.watts)

    def advance(self, tenant, tick, delta_t, rng):
        self.work_done += sum(c.power for c in tenant.containers.values()) * delta_t / 3600.0
