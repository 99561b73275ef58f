"""Exception types shared across the package."""


class PTouchError(Exception):
    """Base class for all package errors."""


class ParameterError(PTouchError):
    """A scalar or structural argument violates its contract."""


class DomainError(PTouchError):
    """A geometric region is incompatible with a grid or another region."""


class SamplingError(PTouchError):
    """A closed-form descriptor produced a non-finite value at a grid node."""


class ContractViolation(PTouchError):
    """An input object violates a documented invariant (asymmetry, bad spectrum, ...)."""


class SolverError(PTouchError):
    """A linear solve failed to reach the required residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConfigError(PTouchError):
    """A run configuration file is malformed (unknown key, bad value, ...)."""
