import math

import numpy as np
import pytest

from ecosim.ecovisor import PhysicalEnergySystem
from ecosim.errors import ConfigError, InsufficientPower
from ecosim.kernel import Scenario, TenantSpec, TickConfig, run_scenario
from ecosim.policies import (
    BatteryAwareBatch,
    CarbonAgnostic,
    CarbonBudgetController,
    RateLimitScaler,
    StragglerMitigation,
    SuspendResume,
    ThresholdConfig,
    WaitAndScale,
    balance_power_caps,
    make_policy,
)
from ecosim.traces import Constant, Diurnal, Sinusoid, SquareWave, SyntheticSpec, TraceKind, synth_trace
from ecosim.workloads import BatchJobModel, BatchWorkload, PowerModel, ServiceWorkload, StragglerJob, webapp

from oracles import waterfill_caps

PM = PowerModel()
DT = 60.0
GRID_ONLY = PhysicalEnergySystem(battery_capacity=0, battery_phys_charge_max=0, battery_phys_discharge_max=0, baseline_power=0)


def square(horizon, period=7200.0, low=100.0, high=400.0):
    return synth_trace(SyntheticSpec(SquareWave(low, high, 0.5, period, low_first=False)), horizon, DT)


def run_batch(policy, model, traces, horizon, physical=GRID_ONLY, **tenant_kw):
    spec = TenantSpec("app", BatchWorkload(model), policy, **tenant_kw)
    return run_scenario(Scenario(TickConfig(DT, horizon), [spec], physical, traces))


# ------------------------------------------------------------- batch / carbon
def test_agnostic_closed_form_runtime():
    rep = run_batch(CarbonAgnostic(), BatchJobModel(total_work=100, workers=4), {"intensity": square(86400)}, 86400)
    assert rep.tenants["app"].runtime_ticks == math.ceil(100 / 4)


def test_zero_length_job():
    rep = run_batch(CarbonAgnostic(), BatchJobModel(total_work=0, workers=4), {}, 600)
    assert rep.tenants["app"].runtime_ticks == 0


def test_degenerate_thresholds():
    traces = {"intensity": square(86400)}
    model = BatchJobModel(total_work=100, workers=4)
    agn = run_batch(CarbonAgnostic(), model, traces, 86400)
    never = run_batch(SuspendResume(ThresholdConfig(percentile=100)), model, traces, 86400)
    assert never.tenants["app"].runtime_ticks == agn.tenants["app"].runtime_ticks
    assert never.tenants["app"].carbon_g == agn.tenants["app"].carbon_g
    always = run_batch(SuspendResume(ThresholdConfig(value=99.0)), model, traces, 86400)
    assert always.tenants["app"].runtime_ticks == math.inf


def test_wait_and_scale_k1_is_suspend_resume():
    traces = {"intensity": synth_trace(SyntheticSpec(Sinusoid(250, 100), jitter=0.2), 2 * 86400, DT, seed=3)}
    model = BatchJobModel(total_work=3000, workers=4, speedup_alpha=0.05, speedup_beta=0.002)
    a = run_batch(WaitAndScale(ThresholdConfig(30), k=1), model, traces, 2 * 86400)
    b = run_batch(SuspendResume(ThresholdConfig(30)), model, traces, 2 * 86400)
    assert a.actions == b.actions
    assert a.tenants_csv() == b.tenants_csv()


def test_wait_and_scale_linear_divides_runtime():
    horizon = 86400.0
    traces = {"intensity": square(horizon)}
    model = BatchJobModel(total_work=480, workers=4)
    thr = ThresholdConfig(value=250.0)
    sr = run_batch(SuspendResume(thr), model, traces, horizon).tenants["app"]
    ws = run_batch(WaitAndScale(thr, k=2), model, traces, horizon).tenants["app"]
    # 120 low ticks at 4 workers vs 60 at 8: both finish inside a low half-period
    assert sr.runtime_ticks == 2 * 120
    assert ws.runtime_ticks == 60 + 60
    assert ws.carbon_g == pytest.approx(sr.carbon_g)


def test_wait_and_scale_sublinear_costs_carbon():
    horizon = 4 * 86400.0
    traces = {"intensity": square(horizon, period=86400)}
    model = BatchJobModel(total_work=2000, workers=4, speedup_alpha=0.05, speedup_beta=0.002)
    thr = ThresholdConfig(value=250.0)
    k2 = run_batch(WaitAndScale(thr, k=2), model, traces, horizon).tenants["app"]
    k3 = run_batch(WaitAndScale(thr, k=3), model, traces, horizon).tenants["app"]
    assert k3.carbon_g > k2.carbon_g


def test_suspend_resume_orderings():
    horizon = 4 * 86400.0
    traces = {"intensity": synth_trace(SyntheticSpec(Sinusoid(250, 100), jitter=0.1), horizon, 300, seed=1)}
    model = BatchJobModel(total_work=2000, workers=4)
    thr = ThresholdConfig(30)
    agn = run_batch(CarbonAgnostic(), model, traces, horizon).tenants["app"]
    sr = run_batch(SuspendResume(thr), model, traces, horizon).tenants["app"]
    ws = run_batch(WaitAndScale(thr, k=2), model, traces, horizon).tenants["app"]
    assert sr.carbon_g <= agn.carbon_g
    assert agn.runtime_ticks <= ws.runtime_ticks <= sr.runtime_ticks


def test_trailing_threshold_runs():
    traces = {"intensity": synth_trace(SyntheticSpec(Sinusoid(250, 100)), 86400, DT)}
    rep = run_batch(SuspendResume(ThresholdConfig(30, window_s=3600, mode="trailing")), BatchJobModel(1e6, 2), traces, 86400)
    assert 0 < rep.series("app", "running").mean() < 2
    with pytest.raises(ConfigError):
        ThresholdConfig(mode="later")


# ------------------------------------------------------------- rate limiting
def test_rate_limit_delta_examples():
    rl = RateLimitScaler(0.020, max_step=None)
    per = 5.0
    assert rl.delta(0.0, per, 200.0) == 72
    assert rl.delta(72 * per, per, 200.0) == 0
    assert rl.delta(72 * per, per, 400.0) == -36


def test_rate_limit_converges_under_constant_intensity():
    horizon = 7200.0
    traces = {"intensity": synth_trace(SyntheticSpec(Constant(200)), horizon, DT),
              "load": synth_trace(SyntheticSpec(Constant(5000), kind=TraceKind.ARRIVALS), horizon, DT)}
    spec = TenantSpec("app", ServiceWorkload(webapp(workers=1)), RateLimitScaler(0.020, max_step=4), arrivals="load")
    rep = run_scenario(Scenario(TickConfig(DT, horizon), [spec], GRID_ONLY, traces))
    demand = rep.series("app", "demand_w")
    per_rate = 5.0 / 1000 * 200 / 3600
    rate = demand[-1] / 1000 * 200 / 3600
    assert abs(rate - 0.020) <= per_rate
    assert np.all(demand[-10:] == demand[-1])


# ------------------------------------------------------------- budgeting
def budget_run(budget, horizon=86400.0):
    traces = {"intensity": synth_trace(SyntheticSpec(Sinusoid(250, 150)), horizon, DT),
              "load": synth_trace(SyntheticSpec(Sinusoid(2500, 2300, phase=-21600), kind=TraceKind.ARRIVALS), horizon, DT)}
    spec = TenantSpec("app", ServiceWorkload(webapp(workers=1)), CarbonBudgetController(budget), arrivals="load")
    return run_scenario(Scenario(TickConfig(DT, horizon), [spec], GRID_ONLY, traces))


def test_budget_zero_pins_min_workers():
    rep = budget_run(0.0)
    assert set(rep.series("app", "running")) == {1}


@pytest.mark.parametrize("budget", [200.0, 600.0, 2000.0])
def test_budget_never_exceeded(budget):
    rep = budget_run(budget)
    cum = np.cumsum(rep.series("app", "carbon_g"))
    assert cum.max() <= budget


def test_budget_with_misaligned_peaks_meets_slo():
    rep = budget_run(3456.0 / 2)
    assert rep.tenants["app"].slo_violations == 0
    assert rep.tenants["app"].carbon_g <= 3456.0 / 2


# ------------------------------------------------------------- battery
def battery_run(mode, solar_w, horizon, model=None, min_power=20.0, capacity=1440.0):
    phys = PhysicalEnergySystem(battery_capacity=capacity, battery_phys_charge_max=0.25 * capacity,
                                battery_phys_discharge_max=capacity, baseline_power=0, solar_rated=solar_w)
    traces = {"solar": synth_trace(SyntheticSpec(Constant(solar_w), kind=TraceKind.SOLAR), horizon, DT),
              "intensity": synth_trace(SyntheticSpec(Constant(200)), horizon, DT)}
    model = model or BatchJobModel(total_work=1e6, workers=4, checkpoint_interval=1)
    return run_batch(BatteryAwareBatch(min_power, mode=mode), model, traces, horizon, physical=phys,
                     solar_fraction=1.0, battery_fraction=1.0, battery_level=capacity)


def test_dynamic_grows_into_flat_solar():
    rep = battery_run("dynamic", 50.0, 3600.0)
    running = rep.series("app", "running")
    assert running[-1] == 10
    assert np.all(np.diff(running) >= 0)
    assert rep.tenants["app"].lost_work == 0.0
    assert rep.tenants["app"].carbon_g == 0.0


def test_static_runs_on_battery_at_night_until_floor():
    rep = battery_run("static", 0.0, 6 * 3600.0, capacity=100.0)
    running = rep.series("app", "running")
    level = rep.series("app", "battery_wh")
    assert running[0] == 4
    # 70 Wh usable at 20 W lasts 3.5 h
    assert np.all(running[:210] == 4)
    assert level.min() >= 30.0 - 1e-9
    assert running[-1] == 0
    assert rep.tenants["app"].carbon_g == 0.0


def test_checkpointed_dynamic_never_slower_than_static():
    horizon = 3 * 86400.0
    phys = PhysicalEnergySystem(baseline_power=0, solar_rated=150)
    traces = {"solar": synth_trace(SyntheticSpec(Diurnal(150), kind=TraceKind.SOLAR), horizon, 300)}
    model = BatchJobModel(total_work=4000, workers=4, checkpoint_interval=1)
    out = {}
    for mode in ("static", "dynamic"):
        out[mode] = run_batch(BatteryAwareBatch(20.0, mode=mode), model, traces, horizon, physical=phys,
                              solar_fraction=1.0, battery_fraction=1.0).tenants["app"].runtime_ticks
    assert out["dynamic"] <= out["static"]


# ------------------------------------------------------------- caps
def test_caps_symmetric_equal_static():
    wants = {f"n{i}": 1.0 for i in range(4)}
    dyn = balance_power_caps(wants, 16.0, PM, "dynamic")
    sta = balance_power_caps(wants, 16.0, PM, "static")
    assert dyn == pytest.approx(sta)
    # with slack, dynamic stops at the demand while static hands out the rest; utilization is the same
    wants = {f"n{i}": 0.7 for i in range(4)}
    dyn = balance_power_caps(wants, 18.0, PM, "dynamic")
    sta = balance_power_caps(wants, 18.0, PM, "static")
    assert [min(0.7, PM.cap_to_util(dyn[k])) for k in wants] == pytest.approx([min(0.7, PM.cap_to_util(sta[k])) for k in wants])


def test_caps_waterfill_example():
    caps = balance_power_caps({"a": 1.0, "b": 0.0}, 10.0, PM)
    assert caps == pytest.approx({"a": 5.0, "b": 1.35})
    assert 10.0 - sum(caps.values()) == pytest.approx(3.65)


def test_caps_no_slack_all_idle():
    caps = balance_power_caps({f"n{i}": 1.0 for i in range(3)}, 3 * 1.35, PM)
    assert all(c == pytest.approx(1.35) for c in caps.values())
    with pytest.raises(InsufficientPower):
        balance_power_caps({"a": 1.0, "b": 1.0}, 2.0, PM)


def test_caps_match_oracle_and_fit_supply():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        wants = rng.random(n)
        supply = rng.uniform(n * 1.35, n * 6.0)
        caps = balance_power_caps({str(i): w for i, w in enumerate(wants)}, supply, PM)
        assert sum(caps.values()) <= supply + 1e-9
        assert list(caps.values()) == pytest.approx(waterfill_caps([PM.power(w) for w in wants], 1.35, supply))


# ------------------------------------------------------------- stragglers
class OneStraggler(StragglerJob):
    """Task 0 of every wave straggles; everything else runs at full speed."""

    def setup(self, tenant, rng=None):
        super().setup(tenant, rng)
        self.orig_slow[:] = 1.0
        self.orig_slow[:, 0] = self.straggler_slowdown


def straggler_run(max_replicas, prob, slowdown=4.0, solar=500.0, waves=3, launch_latency=0, cls=StragglerJob):
    horizon = 86400.0
    phys = PhysicalEnergySystem(battery_capacity=0, battery_phys_charge_max=0, battery_phys_discharge_max=0, baseline_power=0)
    traces = {"solar": synth_trace(SyntheticSpec(Constant(solar), kind=TraceKind.SOLAR), horizon, DT)}
    wl = cls(tasks=10, waves=waves, task_work=2.0, straggler_prob=prob, straggler_slowdown=slowdown,
                      replica_straggle=False, launch_latency=launch_latency)
    spec = TenantSpec("app", wl, StragglerMitigation(max_replicas=max_replicas), solar_fraction=1.0)
    return run_scenario(Scenario(TickConfig(DT, horizon), [spec], phys, traces, seed=3))


def test_no_stragglers_no_replicas():
    a, b = straggler_run(4, 0.0), straggler_run(0, 0.0)
    assert not any("SpawnReplica" in act for _, _, act in a.actions)
    assert a.tenants_csv() == b.tenants_csv()


def test_single_straggler_bounded_by_replica():
    base = straggler_run(0, 0.0, waves=1).tenants["app"].runtime_ticks
    slow = straggler_run(0, 0.0, waves=1, cls=OneStraggler).tenants["app"].runtime_ticks
    fixed = straggler_run(1, 0.0, waves=1, cls=OneStraggler).tenants["app"].runtime_ticks
    assert slow == 2 * 4
    # one tick to notice the straggler, then a normal-speed replica
    assert fixed == base + 1


def test_more_replicas_than_needed_do_not_help():
    one = straggler_run(1, 0.0, cls=OneStraggler).tenants["app"]
    many = straggler_run(8, 0.0, cls=OneStraggler).tenants["app"]
    assert many.runtime_ticks == one.runtime_ticks
    assert many.energy_efficiency <= one.energy_efficiency


def test_make_policy_registry():
    p = make_policy("wait-and-scale", threshold={"percentile": 20}, k=3)
    assert isinstance(p, WaitAndScale) and p.k == 3
    with pytest.raises(ConfigError):
        make_policy("nope")
    with pytest.raises(ConfigError):
        make_policy("agnostic", bogus=1)
