import math

import numpy as np
import pytest

from ecosim.errors import OverKill, SloInfeasible
from ecosim.workloads import (
    BatchJob,
    BatchJobModel,
    ContainerState,
    ContainerStatus,
    InteractiveServiceModel,
    PowerModel,
    batch_step,
    container_power,
    kill_workers,
    make_preset,
    replica_outcome,
    service_latency,
    usl_speedup,
    workers_for_slo,
)
from ecosim.workloads.presets import blast, mltrain

from oracles import mm1_percentile, usl

PM = PowerModel()


def test_power_model_defaults():
    assert container_power(PM, 1.0) == 5.0
    assert container_power(PM, 0.0) == 1.35


def test_cap_inverts_linear_model():
    assert PM.cap_to_util(3.175) == pytest.approx(0.5)
    assert container_power(PM, 1.0, 3.175) == pytest.approx(3.175)


def test_cap_below_idle_pins_idle():
    assert container_power(PM, 1.0, 0.0) == 1.35
    assert container_power(PM, 1.0, 1.0) == 1.35


def test_cap_to_util_roundtrip():
    for w in np.linspace(1.35, 5.0, 21):
        assert PM.power(PM.cap_to_util(w)) == pytest.approx(w)


def test_suspended_container_draws_nothing():
    c = ContainerState("t.w0", "t", status=ContainerStatus.SUSPENDED)
    assert c.draw(1.0) == 0.0


def test_cap_enforced_on_draw():
    c = ContainerState("t.w0", "t", power_cap=2.0)
    assert c.draw(1.0) <= 2.0 + 1e-9


def test_usl_examples():
    assert usl_speedup(1, 0.05, 0.002) == 1.0
    assert usl_speedup(12, 0.05, 0.002) == pytest.approx(12 / (1 + 0.55 + 0.264))
    assert usl_speedup(12, 0.05, 0.002) == pytest.approx(usl(12, 0.05, 0.002))
    assert usl_speedup(0) == 0.0
    assert usl_speedup(30, 0.0, 0.0, n_sat=24) == 24.0


def test_usl_bounded_and_concave():
    a, b = 0.05, 0.002
    assert all(usl_speedup(n, a, b) <= n for n in range(1, 200))
    # increments shrink up to the speedup peak; far into the retrograde tail the curve turns convex
    peak = math.ceil(math.sqrt((1 - a) / b))
    gains = [usl_speedup(n + 1, a, b) - usl_speedup(n, a, b) for n in range(1, peak + 1)]
    assert all(y <= x + 1e-12 for x, y in zip(gains, gains[1:]))


def test_batch_step_linear():
    job = BatchJob(BatchJobModel(total_work=100))
    assert batch_step(job, 4, 1.0).delta == 4.0
    assert batch_step(job, 0, 1.0).delta == 0.0


def test_batch_step_stragglers_slow_progress():
    m = BatchJobModel(total_work=1e6, straggler_prob=1.0, straggler_slowdown=4.0)
    r = batch_step(BatchJob(m), 4, 1.0, np.random.default_rng(0))
    assert r.delta == pytest.approx(1.0)
    assert r.stragglers == 4


def test_kill_with_every_tick_checkpoints_loses_nothing():
    job = BatchJob(BatchJobModel(total_work=100, checkpoint_interval=1))
    for _ in range(5):
        batch_step(job, 4, 1.0)
    assert kill_workers(job, 2) == 0.0
    assert job.progress == 20.0


def test_kill_loses_uncheckpointed_work():
    job = BatchJob(BatchJobModel(total_work=100))
    for _ in range(3):
        batch_step(job, 1, 1.0)
    assert kill_workers(job, 1) == pytest.approx(3.0)
    assert job.progress == 0.0
    assert kill_workers(job, 0) == 0.0
    with pytest.raises(OverKill):
        kill_workers(job, 1)


def test_latency_examples():
    m = InteractiveServiceModel(service_rate=100.0, workers=1)
    assert service_latency(m, 0.0) == pytest.approx(math.log(20) / 100)
    assert service_latency(m.with_workers(4), 400.0) == math.inf
    assert service_latency(m.with_workers(4), 200.0) == pytest.approx(math.log(20) / 50)
    assert service_latency(m.with_workers(4), 200.0) == pytest.approx(mm1_percentile(100, 50, 0.95))


def test_latency_monotone():
    m = InteractiveServiceModel(service_rate=100.0)
    lats = [service_latency(m.with_workers(c), 150.0) for c in range(2, 10)]
    assert all(b < a for a, b in zip(lats, lats[1:]))
    lats = [service_latency(m.with_workers(4), lam) for lam in range(0, 390, 10)]
    assert all(b > a for a, b in zip(lats, lats[1:]))


def test_workers_for_slo():
    m = InteractiveServiceModel(service_rate=100.0, slo_latency=0.06)
    assert workers_for_slo(m, 0.0) == 1
    assert workers_for_slo(m, 200.0) == 4
    counts = [workers_for_slo(m, lam) for lam in range(0, 2000, 25)]
    assert counts == sorted(counts)
    with pytest.raises(SloInfeasible):
        workers_for_slo(InteractiveServiceModel(service_rate=10.0, slo_latency=0.06), 0.0)


def test_replica_outcome():
    assert replica_outcome(10, 3) == 3
    assert replica_outcome(2, 5) == 2
    assert replica_outcome(2 * 4, 2) == 2


def test_presets():
    assert mltrain().speedup_beta > 0
    b = blast()
    assert b.n_sat == 3 * b.workers
    assert make_preset("webapp").model.service_rate == 100.0
    with pytest.raises(KeyError):
        make_preset("nope")
