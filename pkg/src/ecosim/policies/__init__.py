"""Application-level carbon and energy policies, each a per-tenant tick callback."""
from ..errors import ConfigError
from .base import CarbonAgnostic, NoOp, Policy, SuspendResume, ThresholdConfig, ThresholdTracker, WaitAndScale
from .battery import BatteryAwareBatch, BatteryAwareService
from .budget import CarbonBudgetController, RateLimitScaler
from .caps import CapBalancer, balance_power_caps
from .context import (
    ACTION_TYPES,
    BatteryView,
    ContainerView,
    LedgerView,
    PolicyAction,
    PolicyContext,
    ResumeAll,
    SetChargeRate,
    SetMaxDischarge,
    SetPowerCap,
    SetWorkerCount,
    SpawnReplica,
    SuspendAll,
    TenantView,
    action_label,
)
from .straggler import StragglerMitigation
from .webhook import WebhookPolicy

POLICIES = {
    "noop": NoOp,
    "agnostic": CarbonAgnostic,
    "suspend_resume": SuspendResume,
    "wait_and_scale": WaitAndScale,
    "rate_limit": RateLimitScaler,
    "carbon_budget": CarbonBudgetController,
    "battery_aware": BatteryAwareBatch,
    "battery_aware_service": BatteryAwareService,
    "cap_balance": CapBalancer,
    "straggler": StragglerMitigation,
    "webhook": WebhookPolicy,
}


def make_policy(name: str, **params) -> Policy:
    """Build a policy from its registry name; ``threshold`` may be a plain dict."""
    key = name.strip().lower().replace("-", "_")
    if key not in POLICIES:
        raise ConfigError(f"unknown policy {name!r}; known: {', '.join(sorted(POLICIES))}")
    if isinstance(params.get("threshold"), dict):
        params["threshold"] = ThresholdConfig(**params["threshold"])
    try:
        return POLICIES[key](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for policy {name!r}: {exc}") from None


__all__ = [n for n in dir() if not n.startswith("_")]
