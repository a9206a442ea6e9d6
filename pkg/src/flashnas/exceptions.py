"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: :class:`InfeasibleError` exits with 2,
:class:`DataError` / :class:`FitError` / :class:`ModelStateError` with 3.
"""

from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted


class FlashError(Exception):
    """Base class for all package errors."""


class DomainError(FlashError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(FlashError, ValueError):
    """Input samples or files are malformed."""


class FitError(FlashError, RuntimeError):
    """A model could not be fitted to the supplied samples."""


class ModelStateError(FlashError, NotFittedError):
    """A model required by an operation is missing or was never fitted."""


class InfeasibleError(FlashError, RuntimeError):
    """No candidate satisfies the active constraints.

    ``best`` carries the least-violating candidate when one was evaluated.
    """

    def __init__(self, message, best=None, detail=None):
        super().__init__(message)
        self.best = best
        self.detail = detail or {}


class SpaceTooLargeError(FlashError, ValueError):
    """Exhaustive enumeration was refused because the space is too large."""

    def __init__(self, size, limit):
        super().__init__(f"search space has {size} configurations, above the limit of {limit}")
        self.size = size
        self.limit = limit


def check_fitted(estimator, attribute: str) -> None:
    """``check_is_fitted`` that raises :class:`ModelStateError`."""
    try:
        check_is_fitted(estimator, attribute)
    except NotFittedError as exc:
        raise ModelStateError(str(exc)) from None
