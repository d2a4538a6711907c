"""Shared exception types.

Module-specific errors live next to the code that raises them; only the
base class and errors raised from more than one module belong here.
"""


class CfxError(Exception):
    """Base class for every error this package raises deliberately."""


class BudgetExceeded(CfxError):
    """An enumeration or search would visit more candidates than allowed."""
