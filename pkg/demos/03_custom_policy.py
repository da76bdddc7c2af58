# %% [markdown]
# # Writing a tick callback
#
# A policy is any callable taking a PolicyContext and returning actions.
# This one keeps two workers, adds two more whenever solar covers them, and
# tops the battery up from the grid only when intensity is below 150 g/kWh.

# %%
from ecosim import PhysicalEnergySystem, Scenario, TenantSpec, TickConfig, run_scenario, synth_trace
from ecosim.policies import SetChargeRate, SetWorkerCount
from ecosim.traces import Diurnal, Sinusoid, SyntheticSpec, TraceKind
from ecosim.workloads import BatchJobModel, BatchWorkload


def solar_follower(ctx):
    spare = ctx.solar - ctx.workers * ctx.power_model.p_max
    target = ctx.workers
    if spare >= 2 * ctx.power_model.p_max:
        target += 2
    elif spare < 0:
        target = max(2, target - 2)
    charge = ctx.battery.phys_max_charge if ctx.intensity < 150.0 else 0.0
    return [SetWorkerCount(min(target, 12)), SetChargeRate(charge)]


# %%
DAY = 86400.0
tick = TickConfig(delta_t=300.0, horizon=3 * DAY)
traces = {
    "solar": synth_trace(SyntheticSpec(Diurnal(peak=60.0), kind=TraceKind.SOLAR), tick.horizon, tick.delta_t),
    "intensity": synth_trace(SyntheticSpec(Sinusoid(mean=200.0, amplitude=80.0)), tick.horizon, tick.delta_t),
}
job = BatchWorkload(BatchJobModel(total_work=1500.0, workers=2))
report = run_scenario(Scenario(tick, [TenantSpec("app", job, solar_follower, solar_fraction=1.0, battery_fraction=1.0)],
                               PhysicalEnergySystem(solar_rated=60.0, battery_capacity=200.0), traces))
s = report.tenants["app"]
print(f"runtime {s.runtime_ticks * tick.delta_t / 3600:.1f} h, carbon {s.carbon_g:.1f} g, peak workers {s.max_workers}")
print("first actions:", report.actions[:4])
