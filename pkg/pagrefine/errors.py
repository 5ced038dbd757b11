"""Exception hierarchy shared by every module.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""

from __future__ import annotations


class PagRefineError(Exception):
    pass


class InputError(PagRefineError):
    """A file, format, configuration or validation problem."""


class NumericalError(PagRefineError):
    """A loss or gradient term became non-finite."""

    def __init__(self, message: str, term: str | None = None, step: int | None = None):
        super().__init__(message)
        self.term = term
        self.step = step
