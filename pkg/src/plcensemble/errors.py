"""Exception and warning types shared across the package."""


class PlcEnsembleError(Exception):
    """Base class for all package errors."""


class MalformedCsv(PlcEnsembleError):
    pass


class EmptyFile(PlcEnsembleError):
    pass


class InvalidConfig(PlcEnsembleError, ValueError):
    pass


class InvalidParams(PlcEnsembleError, ValueError):
    pass


class DimensionMismatch(PlcEnsembleError, ValueError):
    pass


class LengthMismatch(PlcEnsembleError, ValueError):
    pass


class DegenerateMatrix(PlcEnsembleError, ValueError):
    pass


class DegenerateGroups(PlcEnsembleError, ValueError):
    pass


class ModelFormatError(PlcEnsembleError):
    """Serialized model document is unreadable or has an unknown version."""


class NonConvergence(UserWarning):
    """Solver stopped at its iteration cap with KKT/objective residual above tolerance."""
