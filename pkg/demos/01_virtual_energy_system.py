# %% [markdown]
# # One tenant, one virtual energy system
#
# A constant 40 W load behind a solar share and a virtual battery. We watch
# solar feed the load by day, the battery carry it into the evening, and the
# grid (and its carbon) fill whatever is left.

# %%
import numpy as np

from ecosim import PhysicalEnergySystem, Scenario, TenantSpec, TickConfig, run_scenario, synth_trace
from ecosim.traces import Diurnal, Sinusoid, SyntheticSpec, TraceKind
from ecosim.workloads import ConstantLoad

DAY = 86400.0
tick = TickConfig(delta_t=300.0, horizon=2 * DAY)
traces = {
    "solar": synth_trace(SyntheticSpec(Diurnal(peak=120.0), kind=TraceKind.SOLAR), tick.horizon, tick.delta_t),
    "intensity": synth_trace(SyntheticSpec(Sinusoid(mean=250.0, amplitude=90.0)), tick.horizon, tick.delta_t),
}
physical = PhysicalEnergySystem(solar_rated=120.0, battery_capacity=400.0)

# %%
tenant = TenantSpec("app", ConstantLoad(40.0), solar_fraction=1.0, battery_fraction=1.0)
report = run_scenario(Scenario(tick, [tenant], physical, traces, name="demo-ves"))
s = report.tenants["app"]
print(f"energy {s.energy_wh:.0f} Wh: grid {s.grid_energy_wh:.0f}, solar {s.solar_energy_wh:.0f}, battery {s.battery_energy_wh:.0f}")
print(f"carbon {s.carbon_g:.1f} g, curtailed {s.curtailed_wh:.0f} Wh")

# %% [markdown]
# Hour-by-hour view of the first day: where each watt came from.

# %%
hourly = slice(0, 288, 12)
for col in ("solar_to_load_w", "battery_to_load_w", "grid_to_load_w", "battery_wh"):
    print(f"{col:18s}", np.round(report.series("app", col)[hourly]).astype(int))

# %% [markdown]
# The same run with no battery share: every evening watt now comes from the grid.

# %%
no_battery = TenantSpec("app", ConstantLoad(40.0), solar_fraction=1.0, battery_fraction=0.0)
bare = run_scenario(Scenario(tick, [no_battery], physical, traces)).tenants["app"]
print(f"carbon with battery {s.carbon_g:.1f} g, without {bare.carbon_g:.1f} g")
