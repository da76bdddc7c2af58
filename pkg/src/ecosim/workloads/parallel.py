"""Barrier-synchronised parallel jobs used by the solar power-cap experiments."""
from __future__ import annotations

import math
import statistics

import numpy as np

from .base import Workload
from .power import PowerModel

EPS = 1e-12


def replica_outcome(original_remaining: float, replica_duration: float) -> float:
    """Remaining time of a task once a replica races the original copy."""
    if original_remaining < 0 or replica_duration < 0:
        raise ValueError("durations must be >= 0")
    return min(original_remaining, replica_duration)


class PhaseParallelJob(Workload):
    """Fixed set of nodes that synchronise at the end of every phase.

    Each node gets an unequal share of work per phase. A node that finishes
    early idles (still running, at idle power) until the barrier releases.
    """

    kind = "phase_parallel"
    worker_role = "node"

    def __init__(
        self,
        nodes: int = 10,
        phases: int = 20,
        phase_work: float = 10.0,
        imbalance: float = 0.5,
        unit_rate: float = 1.0,
        power_model: PowerModel | None = None,
    ):
        super().__init__(power_model, 0)
        if nodes <= 0 or phases <= 0 or phase_work <= 0:
            raise ValueError("nodes, phases and phase_work must be positive")
        if not 0.0 <= imbalance < 1.0:
            raise ValueError("imbalance must lie in [0, 1)")
        self.nodes = nodes
        self.phases = phases
        self.phase_work = phase_work
        self.imbalance = imbalance
        self.unit_rate = unit_rate
        self.work = None
        self.phase = 0
        self.remaining: dict[str, float] = {}

    @property
    def total_work(self) -> float:
        return float(self.work.sum()) if self.work is not None else math.nan

    def setup(self, tenant, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        lo, hi = 1.0 - self.imbalance, 1.0 + self.imbalance
        self.work = self.phase_work * rng.uniform(lo, hi, size=(self.phases, self.nodes))
        ids = [tenant.provision(self.worker_role) for _ in range(self.nodes)]
        self.remaining = {cid: float(self.work[0, i]) for i, cid in enumerate(ids)}

    def set_worker_count(self, tenant, n):
        # node set is fixed by the job; only caps and suspension apply
        return

    def node_wants(self) -> dict[str, float]:
        return {cid: min(1.0, r / self.unit_rate) if r > EPS else 0.0 for cid, r in self.remaining.items()}

    def wants(self, tenant, tick):
        return self.node_wants()

    def advance(self, tenant, tick, delta_t, rng):
        if self.done:
            return
        for cid, c in tenant.containers.items():
            if cid not in self.remaining or not c.running:
                continue
            step = min(self.remaining[cid], c.utilization * self.unit_rate)
            self.remaining[cid] -= step
            self.work_done += step
        if all(r <= EPS for r in self.remaining.values()):
            self.phase += 1
            if self.phase >= self.phases:
                self.finish(tenant, tick)
                return
            for i, cid in enumerate(self.remaining):
                self.remaining[cid] = float(self.work[self.phase, i])

    def telemetry(self):
        return {
            "done": self.done,
            "work_done": self.work_done,
            "phase": self.phase,
            "node_wants": self.node_wants() if not self.done else {},
        }


class StragglerJob(Workload):
    """Waves of equal tasks; some copies straggle (I/O bound, slowed by m).

    A straggling copy is I/O bound: it sits near idle power (utilization
    ``straggler_util``) and progresses m times slower. Replicas race the
    original; the first copy to finish wins and every other copy of that task
    is torn down in the same tick.
    """

    kind = "straggler"
    worker_role = "task"
    MAX_REPLICAS = 16

    def __init__(
        self,
        tasks: int = 10,
        waves: int = 20,
        task_work: float = 10.0,
        straggler_prob: float = 0.2,
        straggler_slowdown: float = 4.0,
        replica_straggle: bool = True,
        launch_latency: int = 0,
        unit_rate: float = 1.0,
        straggler_util: float = 0.0,
        power_model: PowerModel | None = None,
    ):
        super().__init__(power_model, 0)
        if straggler_slowdown < 1.0:
            raise ValueError("straggler_slowdown must be >= 1")
        if not 0.0 <= straggler_util <= 1.0:
            raise ValueError("straggler_util must lie in [0, 1]")
        self.tasks = tasks
        self.waves = waves
        self.task_work = task_work
        self.straggler_prob = straggler_prob
        self.straggler_slowdown = straggler_slowdown
        self.replica_straggle = replica_straggle
        self.launch_latency = launch_latency
        self.unit_rate = unit_rate
        self.straggler_util = straggler_util
        self.wave = 0
        self.wave_started = False
        self.copies: dict[str, dict] = {}
        self.task_progress: list[float] = []
        self.task_done: list[bool] = []
        self.replicas: list[int] = []
        self.replicas_spawned = 0
        self._tick = 0

    @property
    def total_work(self) -> float:
        return self.tasks * self.waves * self.task_work

    def setup(self, tenant, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        m, q = self.straggler_slowdown, self.straggler_prob
        self.orig_slow = np.where(rng.random((self.waves, self.tasks)) < q, m, 1.0)
        self.replica_slow = np.where(rng.random((self.waves, self.tasks, self.MAX_REPLICAS)) < q, m, 1.0)
        if not self.replica_straggle:
            self.replica_slow[:] = 1.0

    def set_worker_count(self, tenant, n):
        return

    def _start_wave(self, tenant, tick):
        self.task_progress = [0.0] * self.tasks
        self.task_done = [False] * self.tasks
        self.replicas = [0] * self.tasks
        for i in range(self.tasks):
            self._launch(tenant, i, float(self.orig_slow[self.wave, i]), tick, launch=0)
        self.wave_started = True

    def _launch(self, tenant, task, slowdown, tick, launch):
        cid = tenant.provision(self.worker_role if launch == 0 else "replica")
        self.copies[cid] = {"task": task, "slowdown": slowdown, "start": tick, "launch": launch, "progress": 0.0}
        return cid

    def spawn_replica(self, tenant, task):
        if self.done or not self.wave_started or self.task_done[task]:
            return None
        j = self.replicas[task]
        if j >= self.MAX_REPLICAS:
            return None
        self.replicas[task] += 1
        self.replicas_spawned += 1
        return self._launch(tenant, task, float(self.replica_slow[self.wave, task, j]), self._tick, self.launch_latency)

    def prepare(self, tenant, tick):
        self._tick = tick
        if not self.done and not self.wave_started:
            self._start_wave(tenant, tick)

    def _want(self, cp) -> float:
        return 1.0 if cp["slowdown"] <= 1.0 else self.straggler_util

    def wants(self, tenant, tick):
        out = {}
        for cid, cp in self.copies.items():
            out[cid] = 0.0 if tick < cp["start"] + cp["launch"] else self._want(cp)
        return out

    def advance(self, tenant, tick, delta_t, rng):
        if self.done:
            return
        for cid, cp in self.copies.items():
            c = tenant.containers.get(cid)
            if c is None or not c.running or tick < cp["start"] + cp["launch"]:
                continue
            want = self._want(cp)
            # a cap below the wanted utilization throttles progress proportionally
            throttle = min(1.0, c.utilization / want) if want > 0 else 1.0
            rate = self.unit_rate / cp["slowdown"] * throttle
            cp["progress"] = min(self.task_work, cp["progress"] + rate)
            t = cp["task"]
            self.task_progress[t] = max(self.task_progress[t], cp["progress"])
        for t in range(self.tasks):
            if not self.task_done[t] and self.task_progress[t] >= self.task_work - EPS:
                self.task_done[t] = True
                self.work_done += self.task_work
                for cid in [k for k, cp in self.copies.items() if cp["task"] == t]:
                    del self.copies[cid]
                    tenant.deprovision(cid)
        if all(self.task_done):
            self.wave += 1
            self.wave_started = False
            if self.wave >= self.waves:
                self.finish(tenant, tick)

    def stragglers(self, theta: float) -> list[int]:
        """Unfinished tasks whose progress trails ``theta`` x the wave median."""
        if not self.wave_started or self.done:
            return []
        med = statistics.median(self.task_progress)
        if med <= 0:
            return []
        return [t for t in range(self.tasks) if not self.task_done[t] and self.task_progress[t] < theta * med]

    def telemetry(self):
        return {
            "done": self.done,
            "work_done": self.work_done,
            "wave": self.wave,
            "task_progress": list(self.task_progress),
            "task_done": list(self.task_done),
            "replicas": list(self.replicas),
            "replicas_spawned": self.replicas_spawned,
        }
