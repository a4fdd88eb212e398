from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based, non-iterative)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    shift = css[rho] / (rho + 1.0)
    return np.maximum(v - shift, 0.0)


@dataclass
class DescentResult:
    x: np.ndarray
    fun: float
    nit: int
    converged: bool


def projected_descent(
    fun: Objective,
    x0: np.ndarray,
    ftol: float = 1e-10,
    maxiter: int = 5000,
) -> DescentResult:
    """Minimize fun over the probability simplex by projected gradient steps.

    fun returns (value, gradient). Step sizes come from backtracking on the
    quadratic upper bound; stops once an accepted step improves by < ftol.
    """
    x = project_simplex(x0)
    f, grad = fun(x)
    gnorm = np.linalg.norm(grad)
    s = 1.0 / gnorm if gnorm > 0 else 1.0

    for k in range(1, maxiter + 1):
        while True:
            z = project_simplex(x - s * grad)
            step = z - x
            fz, gz = fun(z)
            if fz <= f + grad @ step + 0.5 * (step @ step) / s or s < 1e-18:
                break
            s *= 0.5
        if not np.any(step) or fz > f:
            return DescentResult(x, f, k, True)
        improvement = f - fz
        x, f, grad = z, fz, gz
        if improvement < ftol:
            return DescentResult(x, f, k, True)
        # let the step grow back after a run of backtracks
        s *= 2.0

    logger.warning("projected descent hit maxiter=%d (f=%.12g)", maxiter, f)
    return DescentResult(x, f, maxiter, False)
