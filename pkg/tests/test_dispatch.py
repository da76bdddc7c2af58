import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecosim.dispatch import ExcessSolarPolicy, VirtualBattery, dispatch_tick, ticks_to_fill
from ecosim.errors import NegativeInput, NegativeRate

from oracles import grid_carbon_g


def bank(**kw):
    return VirtualBattery.from_capacity(1440.0, **kw)


def test_solar_then_battery():
    b = bank(level=1000.0, max_discharge=10.0)
    r = dispatch_tick(10.0, 4.0, 300.0, b, delta_t=3600)
    assert (r.solar_to_load, r.battery_to_load, r.grid_to_load, r.carbon_g) == (4.0, 6.0, 0.0, 0.0)
    assert r.battery_level_after == pytest.approx(994.0)
    assert b.level == 1000.0  # input not mutated


def test_grid_charge_carbon():
    b = bank(charge_rate=100.0)
    r = dispatch_tick(0.0, 0.0, 200.0, b, delta_t=3600)
    assert r.charge_from_grid == 100.0
    assert r.carbon_g == pytest.approx(grid_carbon_g(100, 1, 200)) == pytest.approx(20.0)
    assert r.battery_level_after == pytest.approx(b.level + 100.0)


def test_grid_charge_with_losses():
    b = bank(charge_rate=100.0, efficiency=0.9)
    r = dispatch_tick(0.0, 0.0, 200.0, b, delta_t=3600)
    assert r.battery_level_after == pytest.approx(b.level + 90.0)


def test_exact_solar_match():
    r = dispatch_tick(5.0, 5.0, 100.0, bank())
    assert r.solar_to_load == 5.0
    assert r.battery_to_load == r.grid_to_load == r.charge_from_solar == r.charge_from_grid == r.excess_routed == 0.0
    assert r.carbon_g == 0.0


def test_full_battery_curtails():
    b = bank(reserve=10.0)
    b.level = b.usable_top
    r = dispatch_tick(8.0, 20.0, 100.0, b, ExcessSolarPolicy.CURTAIL)
    assert r.charge_from_solar == 0.0
    assert r.excess_routed == 12.0
    assert r.excess_sink is ExcessSolarPolicy.CURTAIL


def test_charge_rate_clamped_by_hardware():
    b = bank(charge_rate=1000.0)
    r = dispatch_tick(0.0, 0.0, 100.0, b, delta_t=60)
    assert r.charge_from_grid == 360.0


def test_zero_charge_rate_never_grid_charges():
    for ci in (0.0, 50.0, 900.0):
        assert dispatch_tick(0.0, 0.0, ci, bank(charge_rate=0.0)).charge_from_grid == 0.0


def test_discharge_disabled():
    b = bank(level=1000.0, max_discharge=0.0)
    r = dispatch_tick(10.0, 0.0, 100.0, b)
    assert r.grid_to_load == 10.0 and r.battery_to_load == 0.0


def test_discharge_ceiling():
    b = bank(level=1000.0, max_discharge=5.0)
    r = dispatch_tick(8.0, 0.0, 100.0, b)
    assert (r.battery_to_load, r.grid_to_load) == (5.0, 3.0)
    b = bank(level=1440.0, max_discharge=1440.0)
    assert dispatch_tick(5000.0, 0.0, 0.0, b).battery_to_load == 1440.0


def test_discharge_suspends_grid_charging():
    b = bank(level=1000.0, charge_rate=200.0)
    r = dispatch_tick(10.0, 0.0, 100.0, b)
    assert r.battery_to_load == 10.0 and r.charge_from_grid == 0.0


def test_charge_rate_pauses_when_full_and_resumes():
    b = bank(charge_rate=360.0)
    b.level = b.capacity
    assert dispatch_tick(0.0, 0.0, 100.0, b).charge_from_grid == 0.0
    assert b.charge_rate == 360.0
    b.level = b.capacity - 1.0
    assert dispatch_tick(0.0, 0.0, 100.0, b).charge_from_grid == pytest.approx(60.0)


def test_zero_length_deficit_reports_no_discharge():
    r = dispatch_tick(3.0, 10.0, 100.0, bank(level=1000.0))
    assert r.battery_to_load == 0.0


def test_rejects_negative_inputs():
    with pytest.raises(NegativeInput):
        dispatch_tick(-1.0, 0.0, 0.0, bank())
    with pytest.raises(NegativeRate):
        bank().set_charge_rate(-1)
    with pytest.raises(NegativeRate):
        bank().set_max_discharge(-0.5)


def test_fill_from_zero_takes_four_hours():
    # 0.25C from a truly empty bank: 1440 Wh / 360 W = 4 h
    b = VirtualBattery.from_capacity(1440.0, floor_fraction=0.0, level=0.0)
    assert ticks_to_fill(b, 360.0, 60.0) == 240


@settings(max_examples=300, deadline=None)
@given(
    demand=st.floats(0, 2000),
    solar=st.floats(0, 2000),
    intensity=st.floats(0, 1000),
    frac=st.floats(0, 1),
    rate=st.floats(0, 2000),
    cap_d=st.floats(0, 2000),
    eff=st.floats(0.5, 1.0),
    dt=st.sampled_from([1.0, 60.0, 300.0, 3600.0]),
)
def test_balances_and_ceilings(demand, solar, intensity, frac, rate, cap_d, eff, dt):
    b = bank(charge_rate=rate, max_discharge=cap_d, efficiency=eff, reserve=20.0)
    b.level = b.floor + frac * (b.capacity - b.floor)
    r = dispatch_tick(demand, solar, intensity, b, delta_t=dt)
    assert abs(r.solar_to_load + r.battery_to_load + r.grid_to_load - demand) <= 1e-9
    assert abs(r.solar_to_load + r.charge_from_solar + r.excess_routed - solar) <= 1e-9
    assert b.floor - 1e-9 <= r.battery_level_after <= b.capacity + 1e-9
    assert r.battery_to_load <= min(cap_d, b.phys_max_discharge) + 1e-9
    assert r.charge_from_solar + r.charge_from_grid <= b.phys_max_charge + 1e-9
    assert not (r.battery_to_load > 0 and r.charge_from_grid > 0)
    for v in (r.solar_to_load, r.battery_to_load, r.grid_to_load, r.charge_from_solar, r.charge_from_grid, r.excess_routed):
        assert v >= 0
    if solar >= demand and rate == 0:
        assert r.carbon_g == 0.0


@settings(max_examples=100, deadline=None)
@given(demand=st.floats(0, 500), i1=st.floats(0, 1000), i2=st.floats(0, 1000))
def test_carbon_monotone_in_intensity(demand, i1, i2):
    lo, hi = sorted((i1, i2))
    b = bank(max_discharge=0.0, charge_rate=50.0)
    assert dispatch_tick(demand, 0.0, lo, b).carbon_g <= dispatch_tick(demand, 0.0, hi, b).carbon_g


def test_excess_policy_parse():
    assert ExcessSolarPolicy.parse("net-meter") is ExcessSolarPolicy.NET_METER
    assert ExcessSolarPolicy.parse("Reclaim") is ExcessSolarPolicy.RECLAIM
    with pytest.raises(ValueError):
        ExcessSolarPolicy.parse("sell")


def test_reserve_clamped_to_usable_range():
    b = VirtualBattery(capacity=10.0, level=5.0, floor=5.0, reserve=50.0)
    assert b.reserve == 5.0
    assert math.isclose(b.usable_top, 5.0)
