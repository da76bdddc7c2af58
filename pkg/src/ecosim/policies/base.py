"""Shared policy plumbing and the grid-carbon batch policies."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..accounting import percentile
from ..errors import ConfigError
from .context import PolicyContext, ResumeAll, SetWorkerCount, SuspendAll


class Policy:
    """A stateful tick callback: ``policy(ctx) -> list of actions``."""

    name = "policy"

    def __call__(self, ctx: PolicyContext) -> list:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def label(self) -> str:
        p = self.params()
        return self.name if not p else f"{self.name}({', '.join(f'{k}={v}' for k, v in p.items())})"


class NoOp(Policy):
    name = "noop"

    def __call__(self, ctx):
        return []


@dataclass(frozen=True)
class ThresholdConfig:
    """Carbon-intensity threshold: a percentile of the full trace or a trailing window.

    ``mode='full'`` is oracle knowledge of the upcoming trace, fixed at tick 0
    over the first ``window_s`` seconds (all of it when None). ``mode='trailing'``
    recomputes every tick over the last ``window_s`` seconds seen so far.
    ``value`` pins a fixed threshold and bypasses both.
    """

    percentile: float = 30.0
    window_s: float | None = None
    mode: str = "full"
    value: float | None = None

    def __post_init__(self):
        if self.mode not in ("full", "trailing"):
            raise ConfigError(f"threshold mode must be 'full' or 'trailing', got {self.mode!r}")
        if not 0.0 <= self.percentile <= 100.0:
            raise ConfigError("threshold percentile must lie in [0, 100]")


class ThresholdTracker:
    def __init__(self, cfg: ThresholdConfig):
        self.cfg = cfg
        self.fixed: float | None = cfg.value

    def current(self, ctx: PolicyContext) -> float:
        if self.fixed is not None:
            return self.fixed
        cfg = self.cfg
        n = None if cfg.window_s is None else max(1, int(round(cfg.window_s / ctx.delta_t)))
        if cfg.mode == "full":
            series = ctx.intensity_trace if n is None else ctx.intensity_trace[:n]
            self.fixed = percentile(series, cfg.percentile)
            return self.fixed
        hist = ctx.intensity_history
        return percentile(hist if n is None else hist[-n:], cfg.percentile)


class CarbonAgnostic(Policy):
    name = "agnostic"

    def __init__(self, base_n: int | None = None):
        self.base_n = base_n

    def params(self):
        return {} if self.base_n is None else {"n": self.base_n}

    def __call__(self, ctx):
        n = ctx.base_workers if self.base_n is None else self.base_n
        return [SetWorkerCount(n)]


class WaitAndScale(Policy):
    """Suspend above the threshold; run ``k`` x the base worker count below it."""

    name = "wait_and_scale"

    def __init__(self, threshold: ThresholdConfig | None = None, k: int = 2, base_n: int | None = None):
        if k < 1 or int(k) != k:
            raise ConfigError(f"scale factor k must be an integer >= 1, got {k}")
        self.threshold = threshold or ThresholdConfig()
        self.k = int(k)
        self.base_n = base_n
        self._tracker = ThresholdTracker(self.threshold)
        self.last_threshold = math.nan

    def params(self):
        return {"k": self.k}

    def __call__(self, ctx):
        thr = self._tracker.current(ctx)
        self.last_threshold = thr
        if ctx.intensity > thr:
            return [SuspendAll()]
        base = ctx.base_workers if self.base_n is None else self.base_n
        return [ResumeAll(), SetWorkerCount(self.k * base)]


class SuspendResume(WaitAndScale):
    name = "suspend_resume"

    def __init__(self, threshold: ThresholdConfig | None = None, base_n: int | None = None):
        super().__init__(threshold, k=1, base_n=base_n)

    def params(self):
        return {}
