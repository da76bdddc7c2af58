"""HTTP/JSON front end to a running simulation, for out-of-process policies.

Reads return live values. Writes are queued and applied in the action phase
of the next tick (or of the current tick while a webhook call is pending),
so the tick loop stays the only thread that mutates simulator state.
"""
from __future__ import annotations

import json
import logging
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import ConfigError, EcosimError, UnknownContainer, UnknownTenant
from .kernel import Simulation
from .policies.context import SetChargeRate, SetMaxDischarge, SetPowerCap
from .policies.webhook import WebhookPolicy

log = logging.getLogger(__name__)

_ROUTE = re.compile(r"^/tenants/(?P<tid>[^/]+)(?P<rest>(/[^/]+)*)$")


class _Provision:
    def __init__(self, role: str):
        self.role = role

    def __call__(self, eco, tenant):
        eco.provision_container(tenant.id, self.role)

    def __repr__(self):
        return f"Provision({self.role})"


class _Deprovision:
    def __init__(self, cid: str):
        self.cid = cid

    def __call__(self, eco, tenant):
        if self.cid in tenant.containers:
            eco.deprovision_container(tenant.id, self.cid)

    def __repr__(self):
        return f"Deprovision({self.cid})"


class EcovisorService:
    def __init__(self, sim: Simulation):
        self.sim = sim

    @property
    def eco(self):
        return self.sim.ecovisor

    def handle(self, method: str, path: str, body: dict | None = None) -> tuple[int, dict]:
        """Route one request; returns (HTTP status, JSON-able payload)."""
        try:
            return self._route(method.upper(), path.rstrip("/") or "/", body or {})
        except (UnknownTenant, UnknownContainer) as exc:
            return 404, {"error": str(exc).strip("'\"")}
        except (EcosimError, ValueError, TypeError) as exc:
            return 400, {"error": str(exc)}

    def _watts(self, body: dict) -> float:
        if "watts" not in body:
            raise ConfigError('request body needs {"watts": number}')
        w = float(body["watts"])
        if w < 0:
            raise ConfigError("watts must be >= 0")
        return w

    def _route(self, method, path, body):
        if path == "/status" and method == "GET":
            return 200, {"tick": self.sim.tick, "ticks": self.sim.n_ticks, "time": self.sim.cfg.time_of(self.sim.tick),
                         "tenants": list(self.eco.tenants)}
        if path == "/tenants" and method == "GET":
            return 200, {"tenants": list(self.eco.tenants)}
        m = _ROUTE.match(path)
        if not m:
            return 404, {"error": f"no route for {path}"}
        tid = m.group("tid")
        parts = [p for p in m.group("rest").split("/") if p]
        eco = self.eco
        tenant = eco.tenant(tid)
        key = tuple(parts)

        if method == "GET":
            getters = {
                ("solar_power",): eco.get_solar_power,
                ("grid_power",): eco.get_grid_power,
                ("grid_carbon",): eco.get_grid_carbon,
                ("battery", "level"): eco.get_battery_charge_level,
                ("battery", "discharge_rate"): eco.get_battery_discharge_rate,
            }
            if key in getters:
                return 200, {"value": getters[key](tid)}
            if key == ("containers",):
                return 200, {"containers": [
                    {"id": c.id, "role": c.role, "power": c.power, "powercap": _finite(c.power_cap), "running": c.running}
                    for c in tenant.containers.values()
                ]}
            if len(parts) == 3 and parts[0] == "containers" and parts[2] in ("power", "powercap"):
                getter = eco.get_container_power if parts[2] == "power" else eco.get_container_powercap
                return 200, {"value": _finite(getter(tid, parts[1]))}
        elif method == "PUT":
            if len(parts) == 3 and parts[0] == "containers" and parts[2] == "powercap":
                tenant.container(parts[1])
                self.sim.submit(tid, SetPowerCap(parts[1], self._watts(body)))
                return 202, {"queued": "set_powercap"}
            if key == ("battery", "charge_rate"):
                self.sim.submit(tid, SetChargeRate(self._watts(body)))
                return 202, {"queued": "set_charge_rate"}
            if key == ("battery", "max_discharge"):
                self.sim.submit(tid, SetMaxDischarge(self._watts(body)))
                return 202, {"queued": "set_max_discharge"}
        elif method == "POST":
            if key == ("containers",):
                self.sim.submit(tid, _Provision(str(body.get("role", "worker"))))
                return 202, {"queued": "provision"}
            if key == ("webhook",):
                if "url" not in body:
                    raise ConfigError('request body needs {"url": ...}')
                self.sim.register_tick_callback(tid, WebhookPolicy(body["url"], float(body.get("timeout", 10.0))))
                return 201, {"registered": body["url"]}
        elif method == "DELETE":
            if len(parts) == 2 and parts[0] == "containers":
                tenant.container(parts[1])
                self.sim.submit(tid, _Deprovision(parts[1]))
                return 202, {"queued": "deprovision"}
        return 404, {"error": f"no route for {method} {path}"}


def _finite(v: float):
    return None if v == float("inf") else v


def make_handler(service: EcovisorService):
    class Handler(BaseHTTPRequestHandler):
        def _dispatch(self, method):
            length = int(self.headers.get("Content-Length") or 0)
            body = None
            if length:
                try:
                    body = json.loads(self.rfile.read(length))
                except json.JSONDecodeError:
                    return self._send(400, {"error": "body is not JSON"})
                if not isinstance(body, dict):
                    return self._send(400, {"error": "body must be a JSON object"})
            self._send(*service.handle(method, self.path, body))

        def _send(self, status, payload):
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._dispatch("GET")

        def do_PUT(self):
            self._dispatch("PUT")

        def do_POST(self):
            self._dispatch("POST")

        def do_DELETE(self):
            self._dispatch("DELETE")

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

    return Handler


class ServiceRunner:
    """HTTP server in a background thread plus the tick loop in the caller's."""

    def __init__(self, sim: Simulation, host: str = "127.0.0.1", port: int = 0):
        self.sim = sim
        self.service = EcovisorService(sim)
        self.server = ThreadingHTTPServer((host, port), make_handler(self.service))
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self):
        self.thread.start()
        return self

    def run(self, pace: float = 0.0, start_delay: float = 0.0):
        """Step the simulation to the end, sleeping ``pace`` s between ticks."""
        if start_delay:
            time.sleep(start_delay)
        while self.sim.tick < self.sim.n_ticks:
            self.sim.step()
            if pace:
                time.sleep(pace)
        return self.sim.report()

    def stop(self):
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
