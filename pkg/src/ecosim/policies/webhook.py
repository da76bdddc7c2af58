"""Tick callback that hands control to an external process over HTTP."""
from __future__ import annotations

import requests

from ..errors import ConfigError, HttpError
from .base import Policy


class WebhookPolicy(Policy):
    """POST ``{"tick": n, "time": epoch_s}`` to ``url`` every tick and wait.

    The external process reacts through the HTTP API; anything it submits
    while this call is blocked is applied in the same tick. A JSON response
    body is ignored.
    """

    name = "webhook"

    def __init__(self, url: str, timeout: float = 10.0, session: requests.Session | None = None):
        if not str(url).startswith(("http://", "https://")):
            raise ConfigError(f"webhook url must be http(s), got {url!r}")
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()

    def params(self):
        return {"url": self.url}

    def __call__(self, ctx):
        try:
            resp = self.session.post(self.url, json={"tick": ctx.tick, "time": ctx.time_s}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise HttpError(0, f"webhook {self.url} unreachable: {exc}") from None
        if resp.status_code >= 400:
            raise HttpError(resp.status_code, f"webhook {self.url} rejected tick {ctx.tick}")
        return []
