"""Exception types raised across the package."""


class DomainError(ValueError):
    """A point does not belong to the space it is used with."""


class DegeneratePointError(DomainError):
    """Projection is undefined at the given point (e.g. the origin for the sphere)."""


class NearFixedPointError(ValueError):
    """A quantity defined only at regular points was requested near a fixed point."""


class PipelineUnavailableError(RuntimeError):
    """The hypotheses needed by a constant-estimation pipeline fail for this flow."""


class OracleSizeError(ValueError):
    """Brute-force enumeration was requested on an instance that is too large."""


class NumericError(ArithmeticError):
    """Input contains non-finite entries."""
