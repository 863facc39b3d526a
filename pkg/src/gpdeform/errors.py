"""Exception hierarchy shared by all modules."""


class GpdeformError(Exception):
    """Base class for all toolkit errors."""


class InsufficientDataError(GpdeformError):
    """Not enough landmarks/observations/bins for the requested operation."""


class DegenerateGeometryError(GpdeformError):
    """Landmark configuration is rank-deficient (e.g. coplanar points)."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class SingularTransformError(GpdeformError):
    """Affine linear part is numerically singular."""


class IllConditionedError(GpdeformError):
    """Gram factorization failed even after maximum jitter escalation."""

    def __init__(self, message, final_jitter=None):
        super().__init__(message)
        self.final_jitter = final_jitter


class SizeGuardError(GpdeformError):
    """Request would materialize a matrix above the configured guard."""


class FitError(GpdeformError):
    """Model fitting failed to converge; carries the best attempt so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FormatError(GpdeformError):
    """Malformed file, schema violation, or invariant violation on load."""
