"""Exception types shared across the package."""


class VPSearchError(Exception):
    """Base class for all package errors."""


class InvalidInputError(VPSearchError):
    """An argument violates a documented precondition or invariant."""


class BackendError(VPSearchError):
    """A detector backend failed (transport, malformed response, timeout).

    The original cause, when available, is attached via ``__cause__``.
    """


class WireSchemaError(BackendError):
    """A wire response did not conform to the detection wire schema."""


class CostGuardError(VPSearchError):
    """An exhaustive operation was refused because it would be too expensive."""


class UndefinedMetricError(VPSearchError):
    """A metric is undefined for the given input (e.g. all-zero saliency)."""


class ConfigError(VPSearchError):
    """Bad run configuration or CLI usage; maps to process exit code 2."""


class AttributionAborted(VPSearchError):
    """Greedy search aborted mid-run; carries the partial trace for diagnostics."""

    def __init__(self, message, order=(), f_trace=()):
        super().__init__(message)
        self.order = list(order)
        self.f_trace = list(f_trace)
