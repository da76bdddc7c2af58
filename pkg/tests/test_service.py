import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
import requests

from ecosim.ecovisor import PhysicalEnergySystem
from ecosim.kernel import Scenario, Simulation, TenantSpec, TickConfig
from ecosim.service import EcovisorService, ServiceRunner
from ecosim.traces import Constant, SyntheticSpec, TraceKind, synth_trace
from ecosim.workloads import BatchJobModel, BatchWorkload


def make_sim(horizon=600.0):
    traces = {
        "intensity": synth_trace(SyntheticSpec(Constant(200.0)), horizon, 60),
        "solar": synth_trace(SyntheticSpec(Constant(40.0), kind=TraceKind.SOLAR), horizon, 60),
    }
    phys = PhysicalEnergySystem(solar_rated=100.0)
    wl = BatchWorkload(BatchJobModel(total_work=1e6, workers=2))
    return Simulation(Scenario(TickConfig(60, horizon), [TenantSpec("a", wl, solar_fraction=0.5, battery_fraction=0.5)], phys, traces))


def test_reads():
    sim = make_sim()
    sim.step()
    svc = EcovisorService(sim)
    assert svc.handle("GET", "/status")[1]["tick"] == 1
    assert svc.handle("GET", "/tenants/a/solar_power") == (200, {"value": 20.0})
    assert svc.handle("GET", "/tenants/a/grid_carbon") == (200, {"value": 200.0})
    status, body = svc.handle("GET", "/tenants/a/containers")
    assert status == 200 and len(body["containers"]) == 2
    assert body["containers"][0]["powercap"] is None
    assert svc.handle("GET", "/tenants/a/battery/level")[0] == 200


def test_writes_queue_until_next_tick():
    sim = make_sim()
    sim.step()
    svc = EcovisorService(sim)
    cid = svc.handle("GET", "/tenants/a/containers")[1]["containers"][0]["id"]
    assert svc.handle("PUT", f"/tenants/a/containers/{cid}/powercap", {"watts": 2.0})[0] == 202
    assert svc.handle("GET", f"/tenants/a/containers/{cid}/powercap")[1]["value"] is None
    assert svc.handle("POST", "/tenants/a/containers", {})[0] == 202
    assert svc.handle("PUT", "/tenants/a/battery/charge_rate", {"watts": 10})[0] == 202
    sim.step()
    assert svc.handle("GET", f"/tenants/a/containers/{cid}/powercap")[1]["value"] == 2.0
    assert len(svc.handle("GET", "/tenants/a/containers")[1]["containers"]) == 3
    assert svc.handle("DELETE", f"/tenants/a/containers/{cid}")[0] == 202
    sim.step()
    assert len(svc.handle("GET", "/tenants/a/containers")[1]["containers"]) == 2


def test_errors():
    svc = EcovisorService(make_sim())
    assert svc.handle("GET", "/tenants/zz/solar_power")[0] == 404
    assert svc.handle("GET", "/tenants/a/containers/nope/power")[0] == 404
    assert svc.handle("GET", "/nowhere")[0] == 404
    assert svc.handle("PATCH", "/tenants/a/solar_power")[0] == 404
    cid = svc.handle("GET", "/tenants/a/containers")[1]["containers"][0]["id"]
    assert svc.handle("PUT", f"/tenants/a/containers/{cid}/powercap", {"watts": -1})[0] == 400
    assert svc.handle("PUT", f"/tenants/a/containers/{cid}/powercap", {})[0] == 400
    assert svc.handle("POST", "/tenants/a/webhook", {"url": "ftp://x"})[0] == 400


class _Controller(BaseHTTPRequestHandler):
    """Webhook receiver that caps every container at 1.5 W on tick 2."""

    api = ""
    ticks: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.ticks.append(body["tick"])
        if body["tick"] == 2:
            for c in requests.get(f"{self.api}/tenants/a/containers", timeout=5).json()["containers"]:
                r = requests.put(f"{self.api}/tenants/a/containers/{c['id']}/powercap", json={"watts": 1.5}, timeout=5)
                assert r.status_code == 202
        self.send_response(200)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def log_message(self, *args):
        pass


def test_live_server_with_webhook():
    receiver = HTTPServer(("127.0.0.1", 0), _Controller)
    threading.Thread(target=receiver.serve_forever, daemon=True).start()
    sim = make_sim(horizon=300.0)
    try:
        with ServiceRunner(sim) as runner:
            _Controller.api = runner.url
            _Controller.ticks = []
            hook = f"http://127.0.0.1:{receiver.server_address[1]}/"
            r = requests.post(f"{runner.url}/tenants/a/webhook", json={"url": hook}, timeout=5)
            assert r.status_code == 201
            assert requests.get(f"{runner.url}/tenants/zz/grid_power", timeout=5).status_code == 404
            report = runner.run()
    finally:
        receiver.shutdown()
        receiver.server_close()
    assert _Controller.ticks == [0, 1, 2, 3, 4]
    demand = report.series("a", "demand_w")
    # writes made during the webhook call land in the same tick
    assert list(demand[:2]) == [10.0, 10.0]
    assert list(demand[2:]) == pytest.approx([3.0] * 3)  # two containers at the 1.5 W cap
