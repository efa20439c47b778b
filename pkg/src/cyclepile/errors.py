"""Exception types shared across the package."""

from __future__ import annotations


class CyclepileError(Exception):
    """Base class for all package errors."""


class UndefinedOperationError(CyclepileError, ValueError):
    """An N_s operation was applied outside its domain (caller logic bug)."""


class IllegalToppleError(CyclepileError, ValueError):
    """A toppling was requested at a site that is not unstable."""


class IllegalStateError(CyclepileError, ValueError):
    """An operation was invoked on a configuration it does not accept."""


class CapExceededError(CyclepileError, RuntimeError):
    """Stabilization did not finish within the toppling cap.

    The partial odometer is kept so that slow-phase runs can be inspected.
    """

    def __init__(self, cap: int, odometer: tuple[int, ...], message: str | None = None):
        self.cap = cap
        self.odometer = tuple(odometer)
        super().__init__(message or f"toppling cap {cap} exceeded (partial total {sum(self.odometer)})")


class CouplingViolationError(CyclepileError, AssertionError):
    """The ARW chain and its SS shadow disagreed. Never expected to fire."""


class StateSpaceTooLargeError(CyclepileError, ValueError):
    pass


class InsufficientDataError(CyclepileError, ValueError):
    pass


class InvalidSpecError(CyclepileError, ValueError):
    pass
