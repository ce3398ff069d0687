"""Exception types shared across the package."""


class TailboundError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(TailboundError, ValueError):
    """An argument lies outside the domain of the requested function."""


class CapacityError(TailboundError, RuntimeError):
    """An exact computation would exceed its enumeration budget."""


class CrossingError(TailboundError, RuntimeError):
    """A root bracket did not change sign; the normal tail is broken."""


class UsageError(TailboundError, ValueError):
    """Invalid configuration or instance data supplied by a caller."""
