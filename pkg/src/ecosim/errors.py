"""Exception hierarchy shared by every ecosim module."""


class EcosimError(Exception):
    """Base class for all ecosim errors."""


class ConfigError(EcosimError):
    """Invalid scenario or policy configuration (CLI exit code 1)."""


class InvariantViolation(EcosimError):
    """An internal invariant failed; signals a bug, not a user error (exit code 2)."""

    def __init__(self, message, tick=None, tenant=None):
        self.tick = tick
        self.tenant = tenant
        where = []
        if tick is not None:
            where.append(f"tick {tick}")
        if tenant is not None:
            where.append(f"tenant {tenant!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


# --- energy dispatch ---
class NegativeInput(ConfigError, ValueError):
    pass


class NegativeRate(NegativeInput):
    pass


class NegativeValue(NegativeInput):
    pass


class BatteryInvariantViolation(InvariantViolation):
    pass


# --- simulation kernel / ecovisor ---
class UnknownTenant(ConfigError, KeyError):
    pass


class UnknownContainer(ConfigError, KeyError):
    pass


class DuplicateRegistration(ConfigError):
    pass


class InfeasibleShares(ConfigError):
    pass


class TraceGap(ConfigError):
    def __init__(self, message, tick=None):
        self.tick = tick
        if tick is not None:
            message = f"{message} (first uncovered tick {tick})"
        super().__init__(message)


class AggregateLimitViolation(InvariantViolation):
    pass


# --- workloads ---
class OverKill(ValueError, EcosimError):
    pass


class SloInfeasible(ValueError, EcosimError):
    pass


# --- accounting ---
class OutOfRange(ValueError, EcosimError):
    pass


class EmptyWindow(ValueError, EcosimError):
    pass


class BudgetNotSet(EcosimError):
    pass


# --- policies ---
class InsufficientPower(ValueError, EcosimError):
    pass


# --- traces ---
class TraceError(ConfigError):
    pass


class ParseError(TraceError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotonicTimestamp(TraceError):
    pass


class CoverageGap(TraceError):
    pass


class InvalidSpec(TraceError):
    pass


class HttpError(EcosimError):
    def __init__(self, status, message=""):
        self.status = status
        super().__init__(f"HTTP {status}" + (f": {message}" if message else ""))


class SchemaError(EcosimError):
    pass
