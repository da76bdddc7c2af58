"""Analytic workload models: container power, batch jobs and services."""
from .base import ConstantLoad, Workload
from .batch import BatchJob, BatchJobModel, BatchWorkload, StepResult, batch_step, kill_workers, usl_speedup
from .interactive import (
    InteractiveServiceModel,
    ServiceWorkload,
    latency_percentile,
    service_latency,
    service_power,
    workers_for_slo,
)
from .parallel import PhaseParallelJob, StragglerJob, replica_outcome
from .power import (
    GPU_POWER_MODEL,
    P_IDLE,
    P_MAX,
    ContainerIds,
    ContainerState,
    ContainerStatus,
    PowerModel,
    cap_to_util,
    container_power,
)
from .presets import BATCH_PRESETS, SERVICE_PRESETS, blast, make_preset, mltrain, spark, webapp

__all__ = [name for name in dir() if not name.startswith("_")]
