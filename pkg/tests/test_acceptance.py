"""Acceptance criteria 1-12. Each test prints one PASS/FAIL line and then asserts.

Suites run once per session into a temporary directory (and a second time
for the determinism check); every figure below is rebuilt from the CSVs
those runs wrote.
"""
import csv
import filecmp
import math
import os
import random
import re
import time
from collections import defaultdict

import numpy as np
import pytest

from ecosim.dispatch import ExcessSolarPolicy, VirtualBattery, dispatch_tick
from ecosim.ecovisor import PhysicalEnergySystem
from ecosim.harness.config import apply_cell, build_scenario
from ecosim.harness.report import summarize
from ecosim.harness.suites import SUITES, run_suite, suite_document
from ecosim.kernel import Scenario, TenantSpec, TickConfig, run_scenario
from ecosim.policies import CarbonAgnostic, SuspendResume, ThresholdConfig
from ecosim.traces import SquareWave, SyntheticSpec, synth_trace
from ecosim.workloads import BatchJobModel, BatchWorkload, latency_percentile

from oracles import des_percentile, square_wave_suspend_resume

BALANCE_TOL_W = 1e-9
LEVEL_TOL_WH = 1e-9
REL_TOL = 1e-6
CSV_FILES = ("samples.csv", "tenants.csv", "physical.csv", "actions.csv")


def verdict(capsys, n: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def suite_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("suites")
    results, timings = {}, {}
    for name in SUITES:
        t0 = time.perf_counter()
        results[name] = run_suite(name, out_dir=str(root / name))
        timings[name] = time.perf_counter() - t0
    return root, results, timings


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def tenant_rows(cell_dir, tenant="app"):
    return [r for r in read_csv(os.path.join(cell_dir, "tenants.csv")) if r["tenant"] == tenant]


def col(rows, key):
    return np.array([float(r[key]) for r in rows])


def cell_doc(suite, label):
    doc = suite_document(suite)
    return apply_cell(doc, next(c for c in doc["cells"] if c["label"] == label))


# ------------------------------------------------------------------ 1
def test_c01_conservation_fuzz(capsys):
    rng = random.Random(12345)
    worst_bal, worst_level = 0.0, 0.0
    t0 = time.perf_counter()
    for _ in range(100_000):
        cap = rng.choice([0.0, rng.uniform(1, 5000)])
        floor_f = rng.uniform(0, 0.9)
        b = VirtualBattery.from_capacity(
            cap,
            level=rng.uniform(floor_f * cap, cap),
            floor_fraction=floor_f,
            charge_c=rng.uniform(0, 2),
            discharge_c=rng.uniform(0, 2),
            reserve=rng.uniform(0, 0.2 * cap),
            charge_rate=rng.uniform(0, 2 * cap + 1),
            max_discharge=rng.uniform(0, 2 * cap + 1),
            efficiency=rng.choice([1.0, rng.uniform(0.7, 1.0)]),
        )
        demand = rng.choice([0.0, rng.uniform(0, 3000)])
        solar = rng.choice([0.0, rng.uniform(0, 3000)])
        mode = rng.choice(list(ExcessSolarPolicy))
        r = dispatch_tick(demand, solar, rng.uniform(0, 900), b, mode, rng.choice([1.0, 60.0, 300.0, 3600.0]))
        worst_bal = max(worst_bal,
                        abs(r.solar_to_load + r.battery_to_load + r.grid_to_load - demand),
                        abs(r.solar_to_load + r.charge_from_solar + r.excess_routed - solar))
        worst_level = max(worst_level, b.floor - r.battery_level_after, r.battery_level_after - b.capacity)
    elapsed = time.perf_counter() - t0
    ok = worst_bal <= BALANCE_TOL_W and worst_level <= LEVEL_TOL_WH and elapsed < 10.0
    verdict(capsys, 1, ok, f"max balance error {worst_bal:.2e} W, max bound excess {max(worst_level, 0):.2e} Wh, {elapsed:.1f} s")


# ------------------------------------------------------------------ 2
def test_c02_carbon_oracle(capsys, suite_runs):
    root, results, _ = suite_runs
    worst, checked = 0.0, 0
    for name, res in results.items():
        sim_rows = {(r.cell, r.tenant): r for r in res.rows}
        for c in res.cells:
            for row in summarize(root / name / c.label):
                sim = sim_rows[(c.label, row.tenant)]
                for a, b in ((row.total_carbon_g, sim.total_carbon_g), (row.energy_wh, sim.energy_wh)):
                    worst = max(worst, abs(a - b) / max(abs(b), 1e-12) if b else abs(a))
                checked += 1
    ok = worst <= REL_TOL and checked > 0
    verdict(capsys, 2, ok, f"{checked} tenant totals re-aggregated, max relative error {worst:.2e}")


# ------------------------------------------------------------------ 3
def test_c03_battery_constants(capsys):
    dt = 60.0
    b = VirtualBattery.from_capacity(1440.0, charge_c=0.25, discharge_c=1.0, floor_fraction=0.3)
    b.set_charge_rate(b.phys_max_charge)
    fill = 0
    while not b.is_full:
        b.level = dispatch_tick(0.0, 0.0, 100.0, b, delta_t=dt).battery_level_after
        fill += 1
    b = VirtualBattery.from_capacity(1440.0, level=1440.0, charge_c=0.25, discharge_c=1.0, floor_fraction=0.3)
    drain = 0
    while not b.is_empty:
        b.level = dispatch_tick(b.phys_max_discharge, 0.0, 100.0, b, delta_t=dt).battery_level_after
        drain += 1
    fill_ok = abs(fill * dt - 4.0 * 3600) <= dt
    drain_ok = abs(drain * dt - 42 * 60) <= dt
    verdict(capsys, 3, fill_ok and drain_ok,
            f"floor->full {fill * dt / 3600:.2f} h (target 4.0 h), full->floor {drain * dt / 60:.0f} min (target 42 min)")


# ------------------------------------------------------------------ 4
def test_c04_suspend_resume_oracle(capsys):
    dt, half, low, high = 60.0, 60, 100.0, 400.0
    horizon = 4 * 86400.0
    trace = synth_trace(SyntheticSpec(SquareWave(low, high, 0.5, 2 * half * dt, low_first=False)), horizon, dt)
    model = BatchJobModel(total_work=4 * 480, workers=4)
    phys = PhysicalEnergySystem(battery_capacity=0, battery_phys_charge_max=0, battery_phys_discharge_max=0, baseline_power=0)

    def run(policy):
        sc = Scenario(TickConfig(dt, horizon), [TenantSpec("app", BatchWorkload(model), policy)], phys, {"intensity": trace})
        return run_scenario(sc).tenants["app"]

    agn = run(CarbonAgnostic())
    sr = run(SuspendResume(ThresholdConfig(value=(low + high) / 2)))
    o_agn, o_sr, o_carbon = square_wave_suspend_resume(model.total_work, model.workers, half, 5.0, dt / 3600, low)
    ok = (agn.runtime_ticks == o_agn and abs(sr.runtime_ticks - 2 * agn.runtime_ticks) <= 1
          and sr.runtime_ticks == o_sr and math.isclose(sr.carbon_g, o_carbon, rel_tol=1e-12))
    verdict(capsys, 4, ok, f"runtime {sr.runtime_ticks:g} vs 2x{agn.runtime_ticks:g}, carbon {sr.carbon_g:.6f} g vs closed form {o_carbon:.6f} g")


# ------------------------------------------------------------------ 5
def test_c05_reducing_carbon_ordering(capsys, suite_runs):
    _, results, timings = suite_runs
    res = results["reducing-carbon"]
    c = {lab.split("-", 1)[0] + "/" + lab.split("-", 1)[1]: res.row(lab) for lab in (x.label for x in res.cells)}
    g = lambda k: c[k].total_carbon_g
    rt = lambda k: c[k].runtime_ticks
    checks = {
        "mltrain carbon SR < agnostic": g("mltrain/suspend-resume") < g("mltrain/agnostic"),
        "mltrain runtime ws2 < SR": rt("mltrain/ws2") < rt("mltrain/suspend-resume"),
        "mltrain carbon ws3 > ws2": g("mltrain/ws3") > g("mltrain/ws2"),
        "blast carbon ws3 < ws2 < SR": g("blast/ws3") < g("blast/ws2") < g("blast/suspend-resume"),
        "blast runtime ws3 < ws2": rt("blast/ws3") < rt("blast/ws2"),
        "blast ws4 carbon up": g("blast/ws4") > g("blast/ws3"),
        "blast ws4 runtime flat (2%)": abs(rt("blast/ws4") - rt("blast/ws3")) <= 0.02 * rt("blast/ws3"),
        "suite < 120 s": timings["reducing-carbon"] < 120.0,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"mltrain C agn/sr/ws2/ws3 {g('mltrain/agnostic'):.0f}/{g('mltrain/suspend-resume'):.0f}/"
              f"{g('mltrain/ws2'):.0f}/{g('mltrain/ws3'):.0f} g; blast C sr/ws2/ws3/ws4 {g('blast/suspend-resume'):.0f}/"
              f"{g('blast/ws2'):.0f}/{g('blast/ws3'):.0f}/{g('blast/ws4'):.0f} g, rt ws3/ws4 {rt('blast/ws3'):g}/{rt('blast/ws4'):g}; "
              f"{timings['reducing-carbon']:.1f} s" + (f"; failed: {failed}" if failed else ""))
    verdict(capsys, 5, not failed, detail)


# ------------------------------------------------------------------ 6
def test_c06_budgeting(capsys, suite_runs):
    root, results, _ = suite_runs
    doc = SUITES["budgeting"]
    i_mean, l_mean = doc["traces"]["intensity"]["mean"], doc["traces"]["load"]["mean"]
    static = tenant_rows(root / "budgeting" / "static-rate-limit")
    dynamic = tenant_rows(root / "budgeting" / "dynamic-budget")
    overlap = (col(static, "intensity") > i_mean) & (col(static, "arrival_rate") > l_mean)
    static_overlap_viol = int(col(static, "slo_violation")[overlap].sum())
    budget = doc["cells"][1]["params"]["budget"]
    cum = np.cumsum(col(dynamic, "carbon_g"))
    s_total = results["budgeting"].row("static-rate-limit").total_carbon_g
    d_row = results["budgeting"].row("dynamic-budget")
    ok = (static_overlap_viol >= 1 and d_row.slo_violations == 0 and cum.max() <= budget
          and d_row.total_carbon_g <= 0.9 * s_total)
    verdict(capsys, 6, ok, f"static {static_overlap_viol} violating ticks in overlap; dynamic {d_row.slo_violations} violations, "
            f"peak cumulative {cum.max():.1f} g <= {budget:g} g, total {d_row.total_carbon_g:.1f} vs static {s_total:.1f} g "
            f"({1 - d_row.total_carbon_g / s_total:.1%} lower)")


# ------------------------------------------------------------------ 7
def test_c07_battery_policies(capsys, suite_runs):
    root, results, _ = suite_runs
    res = results["virtual-battery"]
    rt_s, rt_d = res.row("batch-static").runtime_ticks, res.row("batch-dynamic").runtime_ticks
    below = 0.0
    for c in res.cells:
        sc = build_scenario(cell_doc("virtual-battery", c.label))
        floor = sc.physical.floor_fraction * sc.physical.battery_capacity * sc.tenants[0].battery_fraction
        below = max(below, floor - col(tenant_rows(root / "virtual-battery" / c.label), "battery_wh").min())
    s_rows = tenant_rows(root / "virtual-battery" / "service-static")
    lam = col(s_rows, "arrival_rate")
    high = lam >= 0.5 * lam.max()
    static_high_viol = int(col(s_rows, "slo_violation")[high].sum())
    dyn_viol = res.row("service-dynamic").slo_violations
    ok = rt_d <= 0.8 * rt_s and below <= LEVEL_TOL_WH and dyn_viol == 0 and static_high_viol > 0
    verdict(capsys, 7, ok, f"batch runtime dynamic {rt_d:g} vs static {rt_s:g} ticks ({1 - rt_d / rt_s:.0%} faster); "
            f"min level - floor {0.0 - below + 0.0:.3f} Wh; service violations dynamic {dyn_viol}, static {static_high_viol} in high load")


# ------------------------------------------------------------------ 8
_CAP = re.compile(r"SetPowerCap\('([^']+)',([^)]+)\)")


def test_c08_cap_balancing(capsys, suite_runs):
    root, results, _ = suite_runs
    res = results["solar-capping"]
    scales = [0.4, 0.6, 0.8]
    improvement, eff = [], {"static": [], "dynamic": []}
    cap_excess = -math.inf
    for s in scales:
        tag = f"scale{int(round(s * 100))}"
        st, dy = res.row(f"{tag}-static"), res.row(f"{tag}-dynamic")
        improvement.append(st.runtime_ticks / dy.runtime_ticks - 1)
        eff["static"].append(st.energy_efficiency)
        eff["dynamic"].append(dy.energy_efficiency)
        for mode in ("static", "dynamic"):
            cell_dir = root / "solar-capping" / f"{tag}-{mode}"
            by_tick = defaultdict(list)
            for a in read_csv(cell_dir / "actions.csv"):
                m = _CAP.match(a["action"])
                if m:
                    by_tick[int(a["tick"])].append((m.group(1), float(m.group(2))))
            caps = {}
            for r in tenant_rows(cell_dir):
                t = int(r["tick"])
                caps.update(dict(by_tick.get(t, [])))
                if caps:
                    cap_excess = max(cap_excess, math.fsum(caps.values()) - float(r["solar_w"]))
    mono_imp = all(a >= b for a, b in zip(improvement, improvement[1:]))
    mono_eff = all(all(a <= b for a, b in zip(v, v[1:])) for v in eff.values())
    ok = mono_imp and mono_eff and cap_excess <= 0.0
    verdict(capsys, 8, ok, f"improvement {[round(x, 3) for x in improvement]}, efficiency dynamic "
            f"{[round(x, 3) for x in eff['dynamic']]} static {[round(x, 3) for x in eff['static']]}, "
            f"max sum(caps) - supply {cap_excess:.3g} W")


# ------------------------------------------------------------------ 9
def test_c09_stragglers(capsys, suite_runs):
    _, results, _ = suite_runs
    res = results["straggler"]
    rows = [res.row(f"replicas{k}") for k in (0, 1, 2, 4, 8)]
    rt = [r.runtime_ticks for r in rows]
    ee = [r.energy_efficiency for r in rows]
    gains = [a - b for a, b in zip(rt, rt[1:])]
    non_inc = all(g >= 0 for g in gains)
    # each gain strictly below the previous one, unless both are already zero
    diminishing = all(b < a or a == b == 0 for a, b in zip(gains, gains[1:]))
    ee_ok = all(a >= b for a, b in zip(ee, ee[1:]))
    verdict(capsys, 9, non_inc and diminishing and ee_ok,
            f"runtime {rt}, gains {gains}, efficiency {[round(x, 2) for x in ee]}")


# ------------------------------------------------------------------ 10
def test_c10_multi_tenancy(capsys, suite_runs):
    root, _, _ = suite_runs
    base = root / "multi-tenancy"
    phys = build_scenario(cell_doc("multi-tenancy", "shared")).physical
    worst_solar, worst_bat = 0.0, -math.inf
    per_tick = defaultdict(list)
    for r in read_csv(base / "shared" / "tenants.csv"):
        per_tick[int(r["tick"])].append(r)
    for p in read_csv(base / "shared" / "physical.csv"):
        rows = per_tick[int(p["tick"])]
        flows = math.fsum(float(r[k]) for r in rows for k in ("solar_to_load_w", "charge_from_solar_w", "excess_routed_w"))
        worst_solar = max(worst_solar, abs(flows + float(p["solar_unallocated_w"]) - float(p["solar_w"])))
        dis = math.fsum(float(r["battery_to_load_w"]) for r in rows)
        chg = math.fsum(float(r[k]) for r in rows for k in ("charge_from_solar_w", "charge_from_grid_w", "charge_from_pool_w"))
        worst_bat = max(worst_bat, dis - phys.battery_phys_discharge_max, chg - phys.battery_phys_charge_max)

    def a_stream(label):
        acts = [(r["tick"], r["action"]) for r in read_csv(base / label / "actions.csv") if r["tenant"] == "a"]
        with open(base / label / "tenants.csv", encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.split(",")[2] == "a"]
        return acts, lines

    shared_a, alone_a = a_stream("shared"), a_stream("without-b")
    a_carbon = [next(r.total_carbon_g for r in summarize(base / label) if r.tenant == "a") for label in ("shared", "without-b")]
    carbon_equal = a_carbon[0] == a_carbon[1]
    isolated = shared_a == alone_a and carbon_equal and len(shared_a[0]) > 0
    ok = worst_solar <= BALANCE_TOL_W and worst_bat <= BALANCE_TOL_W and isolated
    verdict(capsys, 10, ok, f"max solar imbalance {worst_solar:.2e} W, max battery flow over limit {worst_bat:.3g} W, "
            f"tenant a identical without b: {isolated} ({len(shared_a[0])} actions)")


# ------------------------------------------------------------------ 11
DES_POINTS = [(50, 100, 1), (80, 100, 1), (200, 100, 4), (300, 100, 4), (100, 60, 2),
              (150, 60, 3), (20, 30, 1), (400, 120, 5), (250, 50, 6), (600, 150, 5)]


def test_c11_queueing_oracle(capsys):
    t0 = time.perf_counter()
    errs = []
    for i, (lam, mu, c) in enumerate(DES_POINTS):
        analytic = latency_percentile(mu, c, lam, 0.95)
        sim = des_percentile(lam, mu, c, 0.95, n_requests=1_000_000, seed=100 + i)
        errs.append(abs(analytic - sim) / sim)
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 0.05 and elapsed < 30.0
    verdict(capsys, 11, ok, f"max relative p95 error {max(errs):.2%} over {len(errs)} points, {elapsed:.1f} s")


# ------------------------------------------------------------------ 12
def test_c12_determinism(capsys, suite_runs, tmp_path):
    root, _, _ = suite_runs
    differing, compared = [], 0
    for name in SUITES:
        run_suite(name, out_dir=str(tmp_path / name))
        for c in SUITES[name]["cells"]:
            for f in CSV_FILES:
                a, b = root / name / c["label"] / f, tmp_path / name / c["label"] / f
                compared += 1
                if not filecmp.cmp(a, b, shallow=False):
                    differing.append(f"{name}/{c['label']}/{f}")
    verdict(capsys, 12, not differing, f"{compared} CSVs compared, {len(differing)} differ {differing[:3]}")
