"""ecosim: per-application virtual energy systems, multiplexed onto one physical system."""
from .accounting import CarbonLedger, Notifier, Sample, TimeSeriesStore, budget_tracking, percentile
from .dispatch import DispatchResult, ExcessSolarPolicy, SolarShare, VirtualBattery, dispatch_tick
from .ecovisor import Ecovisor, PhysicalEnergySystem, Tenant, VirtualEnergySystem
from .kernel import Scenario, Simulation, SimulationReport, TenantSpec, TickConfig, run_scenario
from .traces import TraceKind, TraceSeries, load_trace, synth_trace

__version__ = "0.1.0"
