"""Speculative replicas for slow tasks, paid for with excess solar."""
from __future__ import annotations

import math
import statistics

from .base import Policy
from .context import SpawnReplica


class StragglerMitigation(Policy):
    """Replicate tasks trailing ``theta`` x the median progress of their wave.

    Only excess power (solar beyond last tick's demand, with the battery full
    when the tenant has one) funds replicas, one p_max-sized slot each. A
    straggler gets at most one new replica per tick and ``max_replicas`` in
    total; the longest-flagged stragglers are served first.
    """

    name = "straggler"

    def __init__(self, max_replicas: int = 1, theta: float = 0.5, per_replica_power: float | None = None):
        self.max_replicas = int(max_replicas)
        self.theta = theta
        self.per_replica_power = per_replica_power
        self.flagged_since: dict[tuple[int, int], int] = {}

    def params(self):
        return {"replicas": self.max_replicas}

    def stragglers(self, ctx) -> list[int]:
        tel = ctx.telemetry
        progress = tel.get("task_progress") or []
        done = tel.get("task_done") or []
        if not progress:
            return []
        med = statistics.median(progress)
        if med <= 0:
            return []
        wave = tel.get("wave", 0)
        slow = [t for t, p in enumerate(progress) if not done[t] and p < self.theta * med]
        for t in slow:
            self.flagged_since.setdefault((wave, t), ctx.tick)
        return sorted(slow, key=lambda t: (self.flagged_since[(wave, t)], t))

    def __call__(self, ctx):
        if ctx.done or self.max_replicas <= 0:
            return []
        slow = self.stragglers(ctx)
        if not slow:
            return []
        if ctx.battery.capacity > 0 and not ctx.battery.is_full:
            return []
        excess = ctx.solar - ctx.ledger.app_power()
        per = self.per_replica_power or ctx.power_model.p_max
        slots = max(0, math.floor(excess / per + 1e-9))
        replicas = ctx.telemetry.get("replicas") or []
        out = []
        for t in slow:
            if slots <= 0:
                break
            if replicas[t] < self.max_replicas:
                out.append(SpawnReplica(t))
                slots -= 1
        return out
