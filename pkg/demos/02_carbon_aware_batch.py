# %% [markdown]
# # Suspend-resume versus Wait&Scale on a batch job
#
# The ML training preset scales sublinearly, so buying speed with more
# workers during clean hours stops paying off beyond about 2x.

# %%
from ecosim import Scenario, TenantSpec, TickConfig, run_scenario
from ecosim.ecovisor import PhysicalEnergySystem
from ecosim.policies import CarbonAgnostic, SuspendResume, ThresholdConfig, WaitAndScale
from ecosim.traces import REGION_SHAPES, SyntheticSpec, synth_trace
from ecosim.workloads import BatchWorkload, mltrain

DAY = 86400.0
tick = TickConfig(delta_t=300.0, horizon=12 * DAY)
intensity = synth_trace(SyntheticSpec(REGION_SHAPES["caiso_like"], jitter=0.05), tick.horizon, tick.delta_t, seed=1)
grid_only = PhysicalEnergySystem(battery_capacity=0.0, solar_rated=0.0)
threshold = ThresholdConfig(percentile=30.0, window_s=2 * DAY)

policies = {
    "agnostic": CarbonAgnostic(),
    "suspend-resume": SuspendResume(threshold),
    "wait&scale 2x": WaitAndScale(threshold, k=2),
    "wait&scale 3x": WaitAndScale(threshold, k=3),
}

# %%
print(f"{'policy':16s} {'carbon g':>9s} {'runtime h':>10s}")
for label, policy in policies.items():
    sc = Scenario(tick, [TenantSpec("app", BatchWorkload(mltrain()), policy)], grid_only, {"intensity": intensity})
    s = run_scenario(sc).tenants["app"]
    print(f"{label:16s} {s.carbon_g:9.1f} {s.runtime_ticks * tick.delta_t / 3600:10.1f}")
