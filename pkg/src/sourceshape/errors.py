"""Exception hierarchy."""


class SourceShapeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SourceShapeError, ValueError):
    """Invalid parameters or problem definitions."""


class MeshError(SourceShapeError):
    """Corrupt or degenerate triangulation."""


class SolverError(SourceShapeError):
    """A linear solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
