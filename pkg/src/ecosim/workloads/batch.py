"""Batch jobs: USL speedup, checkpointing, worker kills and stragglers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .base import Workload
from .power import PowerModel
from ..errors import OverKill


def usl_speedup(n: float, alpha: float = 0.0, beta: float = 0.0, n_sat: float | None = None) -> float:
    """Universal Scalability Law speedup, flat beyond ``n_sat`` workers."""
    if n <= 0:
        return 0.0
    if n_sat is not None and n > n_sat:
        n = n_sat
    return n / (1.0 + alpha * (n - 1) + beta * n * (n - 1))


@dataclass(frozen=True)
class BatchJobModel:
    total_work: float
    workers: int = 4
    speedup_alpha: float = 0.0
    speedup_beta: float = 0.0
    unit_rate: float = 1.0
    checkpoint_interval: float = math.inf
    in_progress_loss: float = 1.0
    straggler_prob: float = 0.0
    straggler_slowdown: float = 1.0
    n_sat: float | None = None
    # always-on job master / queue server (W); 0 disables it
    coordinator_power: float = 0.0

    def __post_init__(self):
        if self.total_work < 0 or self.workers < 0 or self.unit_rate < 0:
            raise ValueError("batch job sizes must be non-negative")
        if not 0.0 <= self.straggler_prob <= 1.0:
            raise ValueError("straggler_prob must lie in [0, 1]")
        if self.straggler_slowdown < 1.0:
            raise ValueError("straggler_slowdown must be >= 1")
        if not 0.0 <= self.in_progress_loss <= 1.0:
            raise ValueError("in_progress_loss must lie in [0, 1]")
        if self.checkpoint_interval < 1:
            raise ValueError("checkpoint_interval must be >= 1 tick")

    def speedup(self, n: float) -> float:
        return usl_speedup(n, self.speedup_alpha, self.speedup_beta, self.n_sat)


@dataclass
class BatchJob:
    """Mutable progress state of a running batch job."""

    model: BatchJobModel
    progress: float = 0.0
    uncheckpointed: list[float] = field(default_factory=list)
    ticks_since_checkpoint: int = 0
    lost: float = 0.0

    @property
    def remaining(self) -> float:
        return max(0.0, self.model.total_work - self.progress)

    @property
    def complete(self) -> bool:
        return self.progress >= self.model.total_work

    def add_workers(self, count: int):
        self.uncheckpointed.extend([0.0] * count)


@dataclass(frozen=True)
class StepResult:
    delta: float
    uncheckpointed: tuple[float, ...]
    stragglers: int = 0


def batch_step(job: BatchJob, active_workers: int, mean_utilization: float, rng=None) -> StepResult:
    """Advance ``job`` by one tick of ``active_workers`` at ``mean_utilization``."""
    m = job.model
    if active_workers < 0:
        raise ValueError("active_workers must be >= 0")
    if len(job.uncheckpointed) < active_workers:
        job.add_workers(active_workers - len(job.uncheckpointed))
    if active_workers == 0:
        return StepResult(0.0, tuple(job.uncheckpointed))

    u = min(max(mean_utilization, 0.0), 1.0)
    shares = [1.0] * active_workers
    n_strag = 0
    if m.straggler_prob > 0.0 and m.straggler_slowdown > 1.0 and rng is not None:
        draws = rng.random(active_workers)
        for i, d in enumerate(draws):
            if d < m.straggler_prob:
                shares[i] = 1.0 / m.straggler_slowdown
                n_strag += 1
    nominal = m.speedup(active_workers) * u * m.unit_rate
    delta = nominal * sum(shares) / active_workers
    finishing = delta >= job.remaining
    delta = min(delta, job.remaining)

    total_share = sum(shares)
    for i in range(active_workers):
        job.uncheckpointed[i] += delta * shares[i] / total_share
    job.progress = m.total_work if finishing else job.progress + delta
    job.ticks_since_checkpoint += 1
    if job.ticks_since_checkpoint >= m.checkpoint_interval:
        job.uncheckpointed = [0.0] * len(job.uncheckpointed)
        job.ticks_since_checkpoint = 0
    return StepResult(delta, tuple(job.uncheckpointed), n_strag)


def kill_workers(job: BatchJob, count: int) -> float:
    """Terminate the ``count`` most recently added workers; returns work lost."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count > len(job.uncheckpointed):
        raise OverKill(f"cannot kill {count} of {len(job.uncheckpointed)} workers")
    if count == 0:
        return 0.0
    victims = job.uncheckpointed[-count:]
    del job.uncheckpointed[-count:]
    lost = job.model.in_progress_loss * sum(victims)
    job.progress = max(0.0, job.progress - lost)
    job.lost += lost
    return lost


class BatchWorkload(Workload):
    kind = "batch"

    def __init__(self, model: BatchJobModel, power_model: PowerModel | None = None, initial_workers=None):
        super().__init__(power_model, model.workers if initial_workers is None else initial_workers)
        self.model = model
        self.job = BatchJob(model)
        self.last_step: StepResult | None = None

    @property
    def total_work(self) -> float:
        return self.model.total_work

    def setup(self, tenant, rng=None):
        if self.model.total_work <= 0:
            self.done = True
            self.completion_tick = 0
            self.runtime_ticks = 0
            return
        if self.model.coordinator_power > 0:
            tenant.provision("coordinator", fixed_power=self.model.coordinator_power, pinned=True)
        super().setup(tenant, rng)

    def set_worker_count(self, tenant, n):
        if self.done:
            return
        before = len(self.workers(tenant))
        super().set_worker_count(tenant, n)
        if n > before:
            self.job.add_workers(n - before)

    def on_kill(self, tenant, cids):
        lost = kill_workers(self.job, len(cids))
        self.lost_work += lost
        return lost

    def wants(self, tenant, tick):
        return {c.id: 1.0 for c in tenant.containers.values()}

    def advance(self, tenant, tick, delta_t, rng):
        if self.done:
            return
        running = [c for c in self.workers(tenant) if c.running]
        mean_u = sum(c.utilization for c in running) / len(running) if running else 0.0
        self.last_step = batch_step(self.job, len(running), mean_u, rng)
        self.work_done = self.job.progress
        if self.job.complete:
            self.finish(tenant, tick)

    def telemetry(self):
        return {
            "done": self.done,
            "work_done": self.job.progress,
            "progress": self.job.progress / self.model.total_work if self.model.total_work else 1.0,
            "remaining": self.job.remaining,
            "lost_work": self.job.lost,
        }
