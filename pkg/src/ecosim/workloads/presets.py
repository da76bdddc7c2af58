"""Named workload calibrations.

The constants are calibration targets chosen to reproduce the qualitative
behaviour of each application class, not measured values.
"""
from __future__ import annotations

from .batch import BatchJobModel, BatchWorkload
from .interactive import InteractiveServiceModel, ServiceWorkload
from .power import PowerModel


def mltrain(total_work: float = 4 * 360.0, workers: int = 4, **kw) -> BatchJobModel:
    # all-reduce training: synchronisation cost grows with the worker count
    params = dict(speedup_alpha=0.05, speedup_beta=0.002)
    params.update(kw)
    return BatchJobModel(total_work=total_work, workers=workers, **params)


def blast(total_work: float = 8 * 360.0, workers: int = 8, **kw) -> BatchJobModel:
    # embarrassingly parallel until the central queue server saturates at 3x base
    params = dict(speedup_alpha=0.005, speedup_beta=0.0, n_sat=3 * workers, coordinator_power=5.0)
    params.update(kw)
    return BatchJobModel(total_work=total_work, workers=workers, **params)


def spark(total_work: float = 4 * 600.0, workers: int = 4, **kw) -> BatchJobModel:
    # checkpointed to HDFS every 30 ticks; in-memory work is lost on kill
    params = dict(speedup_alpha=0.01, checkpoint_interval=30, in_progress_loss=1.0)
    params.update(kw)
    return BatchJobModel(total_work=total_work, workers=workers, **params)


def webapp(service_rate: float = 100.0, workers: int = 4, slo_latency: float = 0.06, **kw) -> InteractiveServiceModel:
    return InteractiveServiceModel(service_rate=service_rate, workers=workers, slo_latency=slo_latency, **kw)


BATCH_PRESETS = {"mltrain": mltrain, "blast": blast, "spark": spark}
SERVICE_PRESETS = {"webapp": webapp}


def make_preset(name: str, power_model: PowerModel | None = None, **kw):
    if name in BATCH_PRESETS:
        return BatchWorkload(BATCH_PRESETS[name](**kw), power_model)
    if name in SERVICE_PRESETS:
        return ServiceWorkload(SERVICE_PRESETS[name](**kw), power_model)
    raise KeyError(f"unknown workload preset {name!r}")
