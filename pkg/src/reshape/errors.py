"""Exception types shared across the engine and harness."""


class ReshapeError(Exception):
    """Base class for all errors raised by this package."""


class RoutingError(ReshapeError):
    """A key could not be mapped to a worker (misconfigured key space)."""


class InvalidShareError(ReshapeError):
    """A fractional share assignment exceeds its denominator."""


class MergeError(ReshapeError):
    """State merge attempted without a registered combiner."""


class PlanError(ReshapeError):
    """A workflow or mitigation plan is invalid at plan time."""


class ProtocolError(ReshapeError):
    """A migration protocol invariant was violated (e.g. missing marker)."""


class DeadlockError(ReshapeError):
    """The scheduler made no progress for too many rounds."""


class ConfigError(ReshapeError):
    """Invalid experiment or generator configuration."""
