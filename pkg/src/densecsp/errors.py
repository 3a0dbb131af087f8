"""Exception hierarchy. Each class maps to a CLI exit code."""

from __future__ import annotations


class DenseCspError(Exception):
    exit_code = 1


class InvalidInputError(DenseCspError, ValueError):
    """Malformed instance, assignment, or parameter."""

    exit_code = 2


class CapExceededError(DenseCspError):
    """An enumeration would exceed its configured budget."""

    exit_code = 3


class InvariantViolation(DenseCspError, AssertionError):
    exit_code = 4


class UnsupportedOperationError(DenseCspError, TypeError):
    exit_code = 2
