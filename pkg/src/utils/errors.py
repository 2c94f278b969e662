#!/usr/bin/env python3
"""
Errors Module

This module defines the exception hierarchy shared by the planners, the
environments and the experiment harness.
"""

from typing import Optional


class LatcoError(Exception):
    """Base class for every error raised by this package."""


class ContractViolationError(LatcoError, ValueError):
    """Raised when an argument violates a model or data contract (shapes, sizes)."""


class ConfigurationError(LatcoError, ValueError):
    """
    Raised for unknown names or invalid parameters in a configuration.

    Attributes:
        path (str): Dotted path to the offending key, empty when not applicable.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NumericalError(LatcoError, ArithmeticError):
    """
    Raised when a factorization fails or a non-finite value appears.

    Attributes:
        block_index (Optional[int]): Block whose factorization failed, if any.
        iteration (Optional[int]): Optimizer iteration, if raised inside a planner loop.
    """

    def __init__(self, message: str, block_index: Optional[int] = None, iteration: Optional[int] = None):
        self.block_index = block_index
        self.iteration = iteration
        super().__init__(message)

    def at_iteration(self, iteration: int) -> "NumericalError":
        """Return a copy of this error annotated with a planner iteration."""
        return NumericalError(f"iteration {iteration}: {self}", self.block_index, iteration)


class EnvironmentStateError(LatcoError, RuntimeError):
    """Raised when an environment is stepped after its episode ended."""


class PlannerFailure(LatcoError, RuntimeError):
    """Raised when a planner gives up (regularizer cap, every restart failed)."""
