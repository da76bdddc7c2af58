"""Carbon-intensity, solar and arrival traces: load, validate, resample, synthesise.

Canonical on-disk format is a two-column CSV::

    # kind: carbon_intensity
    # resolution: 300
    epoch_s,value
    0,212.5
    300,210.0

A trace is treated as piecewise constant: each sample holds for one native
resolution (or until the next sample, whichever comes first). Resampling to
the tick length averages that step function over every tick, which is a
plain mean for finer traces and a zero-order hold for coarser ones.
"""
from __future__ import annotations

import datetime as _dt
import enum
import io
import math
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import (
    CoverageGap,
    HttpError,
    InvalidSpec,
    NegativeValue,
    NonMonotonicTimestamp,
    ParseError,
    SchemaError,
    TraceGap,
)

_REL_TOL = 1e-9


class TraceKind(str, enum.Enum):
    CARBON_INTENSITY = "carbon_intensity"  # g/kWh
    SOLAR = "solar"  # W
    ARRIVALS = "arrivals"  # requests/s

    @classmethod
    def parse(cls, value) -> "TraceKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"carbon": "carbon_intensity", "intensity": "carbon_intensity", "load": "arrivals"}
        return cls(aliases.get(key, key))


@dataclass
class TraceSeries:
    kind: TraceKind
    times: np.ndarray
    values: np.ndarray
    resolution: float | None = None
    label: str = ""

    def __post_init__(self):
        self.kind = TraceKind.parse(self.kind)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if len(self.times) == 0:
            raise CoverageGap("trace has no samples")
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.times)):
            raise NegativeValue("trace contains non-finite samples")
        diffs = np.diff(self.times)
        if np.any(diffs <= 0):
            i = int(np.argmax(diffs <= 0)) + 1
            raise NonMonotonicTimestamp(f"timestamp {self.times[i]!r} does not increase (sample {i})")
        if np.any(self.values < 0):
            i = int(np.argmax(self.values < 0))
            raise NegativeValue(f"negative value {self.values[i]!r} at t={self.times[i]!r}")
        if self.resolution is None:
            if len(self.times) < 2:
                raise CoverageGap("a single-sample trace needs an explicit resolution")
            self.resolution = float(diffs.min())
        if self.resolution <= 0:
            raise InvalidSpec("resolution must be positive")

    def __len__(self):
        return len(self.times)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1] + self.resolution)

    def _segments(self):
        starts = self.times
        nxt = np.append(self.times[1:], np.inf)
        ends = np.minimum(self.times + self.resolution, nxt)
        return starts, ends

    def _cumulative(self, x: np.ndarray):
        starts, ends = self._segments()
        lengths = ends - starts
        value_pre = np.concatenate([[0.0], np.cumsum(self.values * lengths)])
        cover_pre = np.concatenate([[0.0], np.cumsum(lengths)])
        idx = np.searchsorted(starts, x, side="right") - 1
        inside = idx >= 0
        j = np.clip(idx, 0, len(starts) - 1)
        part = np.where(inside, np.clip(x - starts[j], 0.0, lengths[j]), 0.0)
        val = np.where(inside, value_pre[j] + self.values[j] * part, 0.0)
        cov = np.where(inside, cover_pre[j] + part, 0.0)
        return val, cov

    def resample(self, start: float, delta_t: float, n_ticks: int) -> np.ndarray:
        """Mean value over each tick [start + k*dt, start + (k+1)*dt)."""
        if n_ticks == 0:
            return np.zeros(0)
        edges = start + delta_t * np.arange(n_ticks + 1, dtype=float)
        if self.resolution == delta_t:
            # samples already on the tick grid: pass them through bit-exactly
            idx = np.searchsorted(self.times, edges[:-1])
            if idx[-1] < len(self.times) and np.array_equal(self.times[idx], edges[:-1]):
                return self.values[idx].copy()
        val, cov = self._cumulative(edges)
        covered = np.diff(cov)
        missing = covered < delta_t * (1.0 - _REL_TOL)
        if np.any(missing):
            k = int(np.argmax(missing))
            raise TraceGap(f"{self.kind.value} trace {self.label!r} does not cover [{edges[k]}, {edges[k + 1]})", tick=k)
        return np.diff(val) / delta_t

    def resampled(self, start: float, delta_t: float, n_ticks: int) -> "TraceSeries":
        values = self.resample(start, delta_t, n_ticks)
        times = start + delta_t * np.arange(n_ticks, dtype=float)
        return TraceSeries(self.kind, times, values, resolution=delta_t, label=self.label)

    def scaled(self, factor: float) -> "TraceSeries":
        return TraceSeries(self.kind, self.times.copy(), self.values * factor, self.resolution, self.label)


# --------------------------------------------------------------------- CSV I/O
def _fmt_num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def dumps_trace(series: TraceSeries) -> str:
    out = io.StringIO()
    out.write(f"# kind: {series.kind.value}\n")
    out.write(f"# resolution: {_fmt_num(series.resolution)}\n")
    if series.label:
        out.write(f"# label: {series.label}\n")
    out.write("epoch_s,value\n")
    for t, v in zip(series.times, series.values):
        out.write(f"{_fmt_num(t)},{repr(float(v))}\n")
    return out.getvalue()


def export_csv(series: TraceSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_trace(series))


def loads_trace(text: str, kind=None, resolution: float | None = None) -> TraceSeries:
    meta: dict[str, str] = {}
    times, values = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip().lower()] = val.strip()
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ParseError(f"expected 2 columns, got {len(parts)}", line=lineno)
        try:
            t, v = float(parts[0]), float(parts[1])
        except ValueError:
            if not times and parts[0].lower() in ("epoch_s", "time", "timestamp"):
                continue  # header row
            raise ParseError(f"cannot parse {line!r}", line=lineno) from None
        if times and t <= times[-1]:
            raise NonMonotonicTimestamp(f"line {lineno}: timestamp {t} after {times[-1]}")
        if v < 0:
            raise NegativeValue(f"line {lineno}: negative value {v}")
        times.append(t)
        values.append(v)
    if kind is None:
        if "kind" not in meta:
            raise ParseError("trace kind not given and no '# kind:' header")
        kind = meta["kind"]
    if resolution is None and "resolution" in meta:
        resolution = float(meta["resolution"])
    if not times:
        raise CoverageGap("trace file has no samples")
    return TraceSeries(kind, np.array(times), np.array(values), resolution, label=meta.get("label", ""))


def load_trace(path, kind=None, resolution: float | None = None) -> TraceSeries:
    with open(path, encoding="utf-8") as fh:
        series = loads_trace(fh.read(), kind=kind, resolution=resolution)
    if not series.label:
        series.label = os.path.splitext(os.path.basename(str(path)))[0]
    return series


# ------------------------------------------------------------------- synthesis
@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Sinusoid:
    mean: float
    amplitude: float
    period: float = 86400.0
    phase: float = 0.0  # seconds; peak at t = period/4 - phase


@dataclass(frozen=True)
class SquareWave:
    low: float
    high: float
    duty: float = 0.5  # fraction of each period spent at ``low``
    period: float = 86400.0
    low_first: bool = True


@dataclass(frozen=True)
class Diurnal:
    peak: float
    sunrise: float = 6.0  # hour of day
    sunset: float = 18.0


Shape = Union[Constant, Sinusoid, SquareWave, Diurnal]


@dataclass(frozen=True)
class SyntheticSpec:
    shape: Shape
    jitter: float = 0.0
    kind: TraceKind = TraceKind.CARBON_INTENSITY
    label: str = "synthetic"

    def validate(self):
        s = self.shape
        if self.jitter < 0:
            raise InvalidSpec("jitter must be >= 0")
        if isinstance(s, Constant):
            if s.value < 0:
                raise InvalidSpec("constant value must be >= 0")
        elif isinstance(s, Sinusoid):
            if s.period <= 0 or s.amplitude < 0 or s.mean - s.amplitude < 0:
                raise InvalidSpec("sinusoid needs period > 0 and 0 <= amplitude <= mean")
        elif isinstance(s, SquareWave):
            if s.period <= 0 or not 0.0 <= s.duty <= 1.0 or min(s.low, s.high) < 0:
                raise InvalidSpec("square wave needs period > 0, duty in [0, 1], levels >= 0")
        elif isinstance(s, Diurnal):
            if s.peak < 0 or not 0.0 <= s.sunrise < s.sunset <= 24.0:
                raise InvalidSpec("diurnal needs peak >= 0 and 0 <= sunrise < sunset <= 24")
        else:
            raise InvalidSpec(f"unknown shape {s!r}")


def _shape_values(shape: Shape, t: np.ndarray, start: float) -> np.ndarray:
    if isinstance(shape, Constant):
        return np.full(t.shape, float(shape.value))
    if isinstance(shape, Sinusoid):
        return shape.mean + shape.amplitude * np.sin(2.0 * math.pi * (t + shape.phase) / shape.period)
    if isinstance(shape, SquareWave):
        frac = np.mod(t - start, shape.period) / shape.period
        if shape.low_first:
            return np.where(frac < shape.duty - 1e-12, float(shape.low), float(shape.high))
        return np.where(frac < 1.0 - shape.duty - 1e-12, float(shape.high), float(shape.low))
    if isinstance(shape, Diurnal):
        hour = np.mod(t, 86400.0) / 3600.0
        x = (hour - shape.sunrise) / (shape.sunset - shape.sunrise)
        day = (x >= 0.0) & (x <= 1.0)
        return np.where(day, shape.peak * np.sin(math.pi * np.clip(x, 0.0, 1.0)), 0.0)
    raise InvalidSpec(f"unknown shape {shape!r}")


def synth_trace(spec: SyntheticSpec, horizon: float, delta_t: float, seed: int = 0, start: float = 0.0) -> TraceSeries:
    """Point-sample ``spec`` at every tick start; deterministic per seed."""
    spec.validate()
    if delta_t <= 0 or horizon <= 0:
        raise InvalidSpec("horizon and delta_t must be positive")
    n = int(round(horizon / delta_t))
    t = start + delta_t * np.arange(n, dtype=float)
    v = _shape_values(spec.shape, t, start)
    if spec.jitter > 0:
        rng = np.random.default_rng(seed)
        v = v * (1.0 + spec.jitter * rng.standard_normal(n))
    v = np.clip(v, 0.0, None)
    # clean -0.0 / rounding noise at the diurnal edges
    v[np.abs(v) < 1e-12] = 0.0
    return TraceSeries(spec.kind, t, v, resolution=delta_t, label=spec.label)


# Synthetic stand-ins, clearly not real data: a CAISO-like duck curve (low at
# midday, high in the evening) and three regions of differing mean/variability.
REGION_SHAPES = {
    "caiso_like": Sinusoid(mean=250.0, amplitude=90.0, phase=6 * 3600.0 + 43200.0),
    "ontario_like": Sinusoid(mean=40.0, amplitude=10.0, phase=43200.0),
    "uruguay_like": Sinusoid(mean=90.0, amplitude=30.0, phase=43200.0),
}


def region_trace(name: str, horizon: float, delta_t: float = 300.0, seed: int = 0, jitter: float = 0.05, start: float = 0.0):
    spec = SyntheticSpec(REGION_SHAPES[name], jitter=jitter, kind=TraceKind.CARBON_INTENSITY, label=f"{name} (synthetic)")
    return synth_trace(spec, horizon, delta_t, seed=seed, start=start)


# ------------------------------------------------------------------ live fetch
def _parse_datetime(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        stamp = _dt.datetime.fromisoformat(text)
    except ValueError as exc:
        raise SchemaError(f"bad datetime {value!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    return stamp.timestamp()


def parse_intensity_records(payload, label: str = "live") -> TraceSeries:
    """Normalise an electricityMap-style payload into a carbon-intensity trace."""
    records = payload
    if isinstance(payload, dict):
        for key in ("history", "data", "forecast"):
            if isinstance(payload.get(key), list):
                records = payload[key]
                break
        else:
            raise SchemaError("payload holds no record array")
    if not isinstance(records, list) or not records:
        raise SchemaError("expected a non-empty JSON array of records")
    rows = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict) or "datetime" not in rec or "carbonIntensity" not in rec:
            raise SchemaError(f"record {i} lacks datetime/carbonIntensity")
        ci = rec["carbonIntensity"]
        if isinstance(ci, bool) or not isinstance(ci, (int, float)) or not math.isfinite(ci) or ci < 0:
            raise SchemaError(f"record {i} has invalid carbonIntensity {ci!r}")
        rows.append((_parse_datetime(rec["datetime"]), float(ci)))
    rows.sort()
    times = np.array([r[0] for r in rows])
    if np.any(np.diff(times) <= 0):
        raise SchemaError("duplicate timestamps in payload")
    resolution = None if len(rows) > 1 else 3600.0
    return TraceSeries(TraceKind.CARBON_INTENSITY, times, np.array([r[1] for r in rows]), resolution, label=label)


def fetch_live_intensity(endpoint: str, zone: str, auth: str | None = None, window=None, timeout: float = 10.0) -> TraceSeries:
    """GET carbon-intensity history from an electricityMap-compatible endpoint.

    Offline pre-step only; the simulator never calls this inside a run.
    """
    import requests

    params = {"zone": zone}
    if window is not None:
        start, end = window
        if start is not None:
            params["start"] = start
        if end is not None:
            params["end"] = end
    headers = {"auth-token": auth} if auth else {}
    try:
        resp = requests.get(endpoint, params=params, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise HttpError(0, str(exc)) from exc
    if resp.status_code != 200:
        raise HttpError(resp.status_code, resp.text[:200])
    try:
        payload = resp.json()
    except ValueError as exc:
        raise SchemaError("response is not JSON") from exc
    return parse_intensity_records(payload, label=f"{zone}")
