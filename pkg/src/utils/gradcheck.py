#!/usr/bin/env python3
"""
Finite-difference helpers used to check analytic Jacobians and gradients.
"""

from typing import Callable

import numpy as np


def numerical_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dx: float = 1e-5) -> np.ndarray:
    """
    Central-difference Jacobian of `fn` at `x`.

    Args:
        fn: Map from a vector of size n to an array (flattened to size m).
        x (np.ndarray): Evaluation point.
        dx (float): Step.

    Returns:
        np.ndarray: Jacobian of shape (m, n).
    """
    x = np.asarray(x, dtype=float).ravel()
    m = np.asarray(fn(x), dtype=float).size
    jac = np.zeros((m, x.size))
    for i in range(x.size):
        params = x.copy()
        params[i] += dx
        up = np.asarray(fn(params), dtype=float).ravel()
        params[i] -= 2.0 * dx
        down = np.asarray(fn(params), dtype=float).ravel()
        jac[:, i] = (up - down) / (2.0 * dx)
    return jac


def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, dx: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, shaped like `x`."""
    x = np.asarray(x, dtype=float)
    return numerical_jacobian(lambda v: np.atleast_1d(fn(v.reshape(x.shape))), x, dx)[0].reshape(x.shape)


def max_abs_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(analytic) - np.asarray(numeric)), initial=0.0))
