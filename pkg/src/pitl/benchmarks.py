"""Standard test functions for exercising the optimizer in isolation."""

from __future__ import annotations

import numpy as np

__all__ = ["sphere", "ellipsoid", "rosenbrock", "SUITES", "TARGETS"]


def sphere(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def ellipsoid(x: np.ndarray) -> float:
    # separable, condition number 10^6
    n = x.size
    if n < 2:
        raise ValueError("ellipsoid needs n >= 2")
    coeffs = 10.0 ** (6.0 * np.arange(n) / (n - 1))
    return float(np.dot(coeffs, np.square(x)))


def rosenbrock(x: np.ndarray) -> float:
    return float(np.sum(100.0 * (x[:-1] ** 2 - x[1:]) ** 2 + (x[:-1] - 1.0) ** 2))


SUITES = {
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "rosenbrock": rosenbrock,
}

# precision each suite is expected to reach within a sensible budget
TARGETS = {
    "sphere": 1e-10,
    "ellipsoid": 1e-8,
    "rosenbrock": 1e-8,
}
