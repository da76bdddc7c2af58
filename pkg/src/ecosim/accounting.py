"""Power/energy/carbon sample store plus the monitoring library built on it."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetNotSet, EmptyWindow, OutOfRange, UnknownContainer, UnknownTenant

CSV_COLUMNS = (
    "tick",
    "time_s",
    "tenant",
    "container",
    "power_w",
    "energy_wh",
    "carbon_g",
    "intensity_g_per_kwh",
    "solar_w",
    "battery_wh",
)


@dataclass(frozen=True, slots=True)
class Sample:
    tick: int
    time_s: float
    tenant: str
    container: str  # "" marks the tenant-level row (grid charging, battery state)
    power: float
    energy: float
    carbon: float
    intensity: float
    solar: float
    battery_level: float

    def row(self) -> list[str]:
        return [
            str(self.tick),
            fmt_num(self.time_s),
            self.tenant,
            self.container,
            repr(float(self.power)),
            repr(float(self.energy)),
            repr(float(self.carbon)),
            repr(float(self.intensity)),
            repr(float(self.solar)),
            repr(float(self.battery_level)),
        ]


def fmt_num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class IntervalResult:
    energy: float = 0.0
    carbon: float = 0.0
    mean_power: float = 0.0
    t1: float = 0.0
    t2: float = 0.0
    # True when the requested bounds were not tick-aligned and got widened
    snapped: bool = False


class TimeSeriesStore:
    """Append-only in-memory store, one sample per container (and tenant) per tick."""

    def __init__(self, delta_t: float = 60.0, start_time: float = 0.0):
        self.delta_t = float(delta_t)
        self.start_time = float(start_time)
        self.samples: list[Sample] = []
        self.n_ticks = 0
        # tenant -> [power, energy, carbon] per tick
        self._tenant: dict[str, list[list[float]]] = {}
        # (tenant, container) -> {tick: (power, energy, carbon)}
        self._container: dict[tuple[str, str], dict[int, tuple[float, float, float]]] = {}

    @property
    def dt_h(self) -> float:
        return self.delta_t / 3600.0

    def register_tenant(self, tenant: str):
        self._tenant.setdefault(tenant, [[], [], []])

    @property
    def tenants(self) -> list[str]:
        return list(self._tenant)

    def _pad(self, series, length):
        for col in series:
            if len(col) < length:
                col.extend([0.0] * (length - len(col)))

    def append(self, sample: Sample):
        if sample.tick < self.n_ticks - 1:
            raise ValueError("store is append-only; tick precedes the last recorded tick")
        self.samples.append(sample)
        series = self._tenant.setdefault(sample.tenant, [[], [], []])
        self._pad(series, sample.tick + 1)
        series[0][sample.tick] += sample.power
        series[1][sample.tick] += sample.energy
        series[2][sample.tick] += sample.carbon
        if sample.container:
            self._container.setdefault((sample.tenant, sample.container), {})[sample.tick] = (
                sample.power,
                sample.energy,
                sample.carbon,
            )
        self.n_ticks = max(self.n_ticks, sample.tick + 1)

    def end_tick(self, tick: int):
        self.n_ticks = max(self.n_ticks, tick + 1)
        for series in self._tenant.values():
            self._pad(series, self.n_ticks)

    # ---------------------------------------------------------------- queries
    def _tick_range(self, t1: float, t2: float) -> tuple[int, int, bool]:
        if t2 < t1:
            raise OutOfRange(f"interval end {t2} precedes start {t1}")
        a = (t1 - self.start_time) / self.delta_t
        b = (t2 - self.start_time) / self.delta_t
        k1, k2 = math.floor(a + 1e-9), math.ceil(b - 1e-9)
        if k1 < 0 or k2 > self.n_ticks:
            raise OutOfRange(f"[{t1}, {t2}) lies outside the recorded ticks [0, {self.n_ticks})")
        snapped = abs(a - round(a)) > 1e-9 or abs(b - round(b)) > 1e-9
        return k1, max(k1, k2), snapped

    def _result(self, energy, carbon, k1, k2, snapped) -> IntervalResult:
        hours = (k2 - k1) * self.dt_h
        return IntervalResult(
            energy=energy,
            carbon=carbon,
            mean_power=energy / hours if hours > 0 else 0.0,
            t1=self.start_time + k1 * self.delta_t,
            t2=self.start_time + k2 * self.delta_t,
            snapped=snapped,
        )

    def interval(self, tenant: str, t1: float, t2: float, container: str | None = None) -> IntervalResult:
        """Energy, carbon and mean power of a tenant or one container over [t1, t2)."""
        if tenant not in self._tenant:
            raise UnknownTenant(tenant)
        k1, k2, snapped = self._tick_range(t1, t2)
        if container is None:
            series = self._tenant[tenant]
            e = math.fsum(series[1][k1:k2])
            c = math.fsum(series[2][k1:k2])
        else:
            rows = self._container.get((tenant, container))
            if rows is None:
                raise UnknownContainer(container)
            picked = [v for k, v in rows.items() if k1 <= k < k2]
            e = math.fsum(v[1] for v in picked)
            c = math.fsum(v[2] for v in picked)
        return self._result(e, c, k1, k2, snapped)

    def interval_ticks(self, tenant: str, k1: int, k2: int, container: str | None = None) -> IntervalResult:
        t = self.start_time
        return self.interval(tenant, t + k1 * self.delta_t, t + k2 * self.delta_t, container)

    def containers(self, tenant: str) -> list[str]:
        return [cid for (tid, cid) in self._container if tid == tenant]

    def tenant_series(self, tenant: str) -> dict[str, np.ndarray]:
        if tenant not in self._tenant:
            raise UnknownTenant(tenant)
        p, e, c = (np.array(col, dtype=float) for col in self._tenant[tenant])
        return {"power": p, "energy": e, "carbon": c}

    def app_power(self, tenant: str, tick: int | None = None) -> float:
        """Tenant power (W) at ``tick``, default the most recent recorded tick."""
        if tenant not in self._tenant:
            raise UnknownTenant(tenant)
        col = self._tenant[tenant][0]
        k = len(col) - 1 if tick is None else tick
        return col[k] if 0 <= k < len(col) else 0.0

    def total(self, tenant: str) -> IntervalResult:
        return self.interval_ticks(tenant, 0, self.n_ticks)

    # ---------------------------------------------------------------- export
    def to_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for s in self.samples:
            writer.writerow(s.row())

    def dumps_csv(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def export_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            self.to_csv(fh)


# -------------------------------------------------------------------- ledger
def budget_from_rate(rate_g_per_s: float, horizon_s: float) -> float:
    return rate_g_per_s * horizon_s


@dataclass
class CarbonLedger:
    tenant: str
    delta_t: float = 60.0
    cumulative_carbon: float = 0.0
    target_rate: float | None = None  # g/s
    budget: float | None = None  # g over horizon_s
    horizon_s: float | None = None
    per_tick: list[float] = field(default_factory=list)

    def set_carbon_rate(self, rate: float):
        if rate < 0:
            raise ValueError("carbon rate must be >= 0")
        self.target_rate = float(rate)

    def set_carbon_budget(self, budget: float, horizon_s: float):
        if budget < 0 or horizon_s <= 0:
            raise ValueError("budget must be >= 0 and horizon > 0")
        self.budget = float(budget)
        self.horizon_s = float(horizon_s)

    def add(self, carbon: float):
        self.per_tick.append(carbon)
        self.cumulative_carbon += carbon

    @property
    def ticks(self) -> int:
        return len(self.per_tick)

    @property
    def elapsed_s(self) -> float:
        return self.ticks * self.delta_t

    @property
    def reference_rate(self) -> float | None:
        if self.target_rate is not None:
            return self.target_rate
        if self.budget is not None:
            return self.budget / self.horizon_s
        return None

    @property
    def credits(self) -> float:
        rate = self.reference_rate
        if rate is None:
            return 0.0
        return max(0.0, rate * self.elapsed_s - self.cumulative_carbon)


@dataclass(frozen=True)
class BudgetStatus:
    remaining: float
    allowed_rate_now: float
    credits: float
    envelope: float  # even-spend allowance up to now
    remaining_s: float


def budget_status(budget, horizon_s, spent: float, elapsed_s: float, tenant: str = "") -> BudgetStatus:
    if budget is None or horizon_s is None:
        raise BudgetNotSet(f"tenant {tenant!r} has no carbon budget")
    remaining = budget - spent
    remaining_s = horizon_s - elapsed_s
    allowed = remaining / remaining_s if remaining > 0 and remaining_s > 0 else 0.0
    envelope = budget / horizon_s * elapsed_s
    return BudgetStatus(
        remaining=remaining,
        allowed_rate_now=allowed,
        credits=max(0.0, envelope - spent),
        envelope=envelope,
        remaining_s=remaining_s,
    )


def budget_tracking(ledger: CarbonLedger, tick: int | None = None) -> BudgetStatus:
    """Budget position at the start of ``tick`` (default: after the last recorded tick)."""
    if tick is None:
        tick = ledger.ticks
    spent = ledger.cumulative_carbon if tick >= ledger.ticks else math.fsum(ledger.per_tick[:tick])
    return budget_status(ledger.budget, ledger.horizon_s, spent, tick * ledger.delta_t, ledger.tenant)


# ---------------------------------------------------------------- percentile
def percentile(series, p: float, window=None) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest sample (1-based).

    ``window`` selects the samples: None for all, an int for the last N,
    or a (start, stop) index pair.
    """
    data = np.asarray(series, dtype=float)
    if window is not None:
        if isinstance(window, (int, np.integer)):
            data = data[-int(window):] if window > 0 else data[:0]
        else:
            start, stop = window
            data = data[start:stop]
    if data.size == 0:
        raise EmptyWindow("percentile window holds no samples")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {p}")
    n = data.size
    rank = min(max(math.ceil(p * n / 100.0 - 1e-9), 1), n)
    return float(np.partition(data, rank - 1)[rank - 1])


# ------------------------------------------------------------- notifications
@dataclass(frozen=True)
class Event:
    tick: int
    kind: str  # solar_change | carbon_change | battery_full | battery_empty
    value: float
    previous: float | None = None


class Notifier:
    """Edge-triggered events with hysteresis equal to the relative threshold.

    A change event fires when a signal moves more than ``threshold`` (relative)
    away from the value at the previous event, which then becomes the new
    reference. Battery events fire once on entry into the full/empty state.
    """

    def __init__(self, solar_threshold: float = 0.1, carbon_threshold: float = 0.1):
        self.thresholds = {"solar_change": solar_threshold, "carbon_change": carbon_threshold}
        self._ref: dict[str, float | None] = {"solar_change": None, "carbon_change": None}
        self._state = {"battery_full": False, "battery_empty": False}
        self.history: list[Event] = []

    def _change(self, tick, kind, value, out):
        ref = self._ref[kind]
        if ref is None:
            self._ref[kind] = value
            return
        moved = value > 0 if ref == 0 else abs(value - ref) > self.thresholds[kind] * ref
        if moved:
            out.append(Event(tick, kind, value, ref))
            self._ref[kind] = value

    def _edge(self, tick, kind, active, value, out):
        if active and not self._state[kind]:
            out.append(Event(tick, kind, value))
        self._state[kind] = active

    def observe(self, tick: int, solar: float, intensity: float, battery=None) -> list[Event]:
        out: list[Event] = []
        self._change(tick, "solar_change", solar, out)
        self._change(tick, "carbon_change", intensity, out)
        if battery is not None and battery.capacity > 0:
            self._edge(tick, "battery_full", battery.is_full, battery.level, out)
            self._edge(tick, "battery_empty", battery.is_empty, battery.level, out)
        self.history.extend(out)
        return out
