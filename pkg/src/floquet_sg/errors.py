from typing import Any


class FloquetError(Exception):
    """Base class for every failure raised by the package."""

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message

    def details(self) -> dict[str, Any]:
        """Extra structured fields attached to the error report."""
        return {}

    def to_dict(self) -> dict[str, Any]:
        return {'error': self.message, 'kind': type(self).__name__} | self.details()


class DomainError(FloquetError, ValueError):
    """Parameters outside the set where the requested object exists."""


class ConvergenceError(FloquetError):
    """An iterative method stopped before meeting its tolerance.

    Parameters
    ----------
    message : str
        Human readable reason
    estimate : float | None, optional
        Best value available when the iteration stopped
    error_bound : float | None, optional
        Error estimate attached to ``estimate``
    """

    def __init__(
        self,
        message: str,
        estimate: float | None = None,
        error_bound: float | None = None
    ) -> None:
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound

    def details(self) -> dict[str, Any]:
        return {'estimate': self.estimate, 'error_bound': self.error_bound}


class AccuracyError(FloquetError):
    """A computed result failed its a posteriori residual check."""

    def __init__(self, message: str, residual: float, bound: float) -> None:
        super().__init__(message)
        self.residual = residual
        self.bound = bound

    def details(self) -> dict[str, Any]:
        return {'residual': self.residual, 'bound': self.bound}


class StructureError(FloquetError):
    """The located spectral structure contradicts what the theory guarantees."""


class SearchError(FloquetError):
    """A sign-change search could not be set up or did not terminate."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def details(self) -> dict[str, Any]:
        return {'diagnostics': self.diagnostics}
