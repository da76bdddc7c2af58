"""Splitting a limited solar supply across the nodes of a parallel job."""
from __future__ import annotations

import math

from ..errors import ConfigError, InsufficientPower
from .base import Policy
from .context import ResumeAll, SetPowerCap, SuspendAll


def balance_power_caps(node_wants: dict[str, float], available: float, power_model, mode: str = "dynamic") -> dict[str, float]:
    """Per-node power caps whose sum never exceeds ``available`` watts.

    static: an even split. dynamic: every node gets idle power, then the
    remainder goes to nodes in proportion to their unmet (above-idle) need,
    never beyond the power their utilization want implies. Whatever no node
    can use stays unallocated.
    """
    n = len(node_wants)
    if n == 0:
        return {}
    floor = n * power_model.p_idle
    if available < floor - 1e-12:
        raise InsufficientPower(f"{available} W cannot keep {n} nodes at idle ({floor} W)")
    if mode == "static":
        return {cid: available / n for cid in node_wants}
    if mode != "dynamic":
        raise ConfigError(f"unknown cap balancing mode {mode!r}")
    need = {cid: power_model.power(u) - power_model.p_idle for cid, u in node_wants.items()}
    spare = max(0.0, available - floor)
    total = math.fsum(need.values())
    scale = 1.0 if total <= spare else spare / total
    caps = {cid: power_model.p_idle + need[cid] * scale for cid in node_wants}
    # trim rounding so the sum stays inside the supply
    over = math.fsum(caps.values()) - available
    if over > 0:
        biggest = max(caps, key=caps.get)
        caps[biggest] -= over
    return caps


class CapBalancer(Policy):
    name = "cap_balance"

    def __init__(self, mode: str = "dynamic", role: str = "node"):
        if mode not in ("static", "dynamic"):
            raise ConfigError(f"cap mode must be static or dynamic, got {mode!r}")
        self.mode = mode
        self.role = role
        self.last_caps: dict[str, float] = {}

    def params(self):
        return {"mode": self.mode}

    def __call__(self, ctx):
        if ctx.done:
            return []
        nodes = [c.id for c in ctx.containers if c.role == self.role]
        if not nodes:
            return []
        supply = ctx.solar
        pm = ctx.power_model
        if supply < len(nodes) * pm.p_idle:
            self.last_caps = {}
            return [SuspendAll()]
        wants = ctx.telemetry.get("node_wants", {})
        caps = balance_power_caps({cid: wants.get(cid, 1.0) for cid in nodes}, supply, pm, self.mode)
        self.last_caps = caps
        return [ResumeAll()] + [SetPowerCap(cid, w) for cid, w in caps.items()]
