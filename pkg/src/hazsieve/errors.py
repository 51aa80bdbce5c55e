"""Structured exceptions shared across the package."""


class HazSieveError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(HazSieveError, ValueError):
    """Covariate dimension of an argument does not match the context."""


class OutOfDomain(HazSieveError, ValueError):
    """A point lies outside [0,1]^{d+1}."""


class EmptyDataset(HazSieveError, ValueError):
    """An operation that needs records received none."""


class InvalidRecord(HazSieveError, ValueError):
    """A path record violates its invariants."""


class InvalidSpec(HazSieveError, ValueError):
    """A sieve description violates its invariants."""


class InvalidConfig(HazSieveError, ValueError):
    """A configuration value is missing, malformed, or out of range."""


class CapExceeded(HazSieveError, ValueError):
    """A size limit was hit; carries the size that would have been needed."""

    def __init__(self, message: str, required: int | None = None, cap: int | None = None):
        super().__init__(message)
        self.required = required
        self.cap = cap


class SingularGram(HazSieveError, RuntimeError):
    """The normal equations stayed singular even after the ridge fallback."""


class NonPositiveModel(HazSieveError, ValueError):
    """A model evaluated nonpositive where strict positivity is required.

    Carries the offending (t, x) point.
    """

    def __init__(self, message: str, t: float | None = None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class BoundViolation(HazSieveError, RuntimeError):
    """A declared sup-norm bound was exceeded at an evaluated point."""


class NoUsableFits(HazSieveError, RuntimeError):
    """Every candidate fit in a dictionary failed, leaving nothing to aggregate."""
