"""Exception hierarchy.

Every failure the framework can diagnose is raised as a subclass of
:class:`UQError` so the harness can tell a structured rejection (an
estimator that correctly refuses a NaN input) from an unexpected crash.
"""


class UQError(Exception):
    """Base class for all structured errors."""


class ConfigurationError(UQError, ValueError):
    """Invalid construction parameters or config document."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class StateError(UQError):
    """An object is in an unusable state (e.g. non-finite weights)."""


class DomainError(UQError, ValueError):
    """An argument lies outside the domain of the operation."""


class InvalidInputError(DomainError):
    """Non-finite or otherwise undefined estimator input."""


class TrainingDivergedError(UQError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")


class EstimatorFault(UQError):
    """An estimator produced an invalid output (non-finite or sigma <= 0)."""


class CapabilityError(UQError):
    """The requested quantity is not available for this estimator or data."""


class GeneratorConfigError(ConfigurationError):
    pass


class ParseError(UQError, ValueError):
    def __init__(self, message, row=None, path=None):
        self.row = row
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class SpecificationError(UQError, ValueError):
    """Ill-formed ODD specification or semantic point."""


class CriteriaError(ConfigurationError):
    pass


class EmptySelectionError(UQError):
    """A data selection produced no rows."""


class StructuralError(UQError, ValueError):
    """Malformed logic tree or missing verdicts."""
