"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Matrix shape is incompatible with the requested operation."""


class StructureError(ValueError):
    """Input violates a required algebraic structure (symmetry, block form)."""


class CapacityError(ValueError):
    """Requested enumeration is too large to carry out."""


class ResolutionError(ValueError):
    """Discretization is too coarse for the requested check."""


class EigenvalueNotFound(LookupError):
    """No eigenvalue in the requested energy window."""


class ConfigError(ValueError):
    """Invalid configuration file or experiment parameter."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
