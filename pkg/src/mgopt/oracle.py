"""Exact per-step minimizer of the box-constrained quadratic.

Tracking errors are measured against the true time-varying minimizer,
which for a strongly convex quadratic over a box is computed to high
accuracy by projected gradient iteration.  Optimality is certified by
the natural residual

    ||x - proj(x - (Ax + b))||_inf,

which is zero exactly at the minimizer and method-independent.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .problem import BoxSet

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10**6


class IterationLimitError(RuntimeError):
    """The projected-gradient loop hit its iteration cap."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"box QP did not reach tolerance after {iterations} iterations "
            f"(best residual {residual:.3g})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class QpSolution:
    x_star: np.ndarray
    kkt_residual: float
    iterations: int


def kkt_residual(A, b, box: BoxSet, x) -> float:
    """Natural residual of the box QP at x; zero iff x is the minimizer."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    g = A @ x + b
    return float(np.abs(x - np.clip(x - g, box.lower, box.upper)).max())


def _pg_step_size(A: np.ndarray) -> float:
    eigs = np.linalg.eigvalsh(A)
    if eigs[0] <= 0:
        raise ValueError(
            f"Hessian must be positive definite (smallest eigenvalue {eigs[0]:.3g})"
        )
    return 2.0 / (eigs[0] + eigs[-1])


def solve_box_qp(
    A,
    b,
    box: BoxSet,
    tol: float = DEFAULT_TOL,
    x0=None,
    max_iter: int = DEFAULT_MAX_ITER,
    debug: bool = False,
) -> QpSolution:
    """Minimize 0.5 x'Ax + b'x over the box to a natural residual of `tol`.

    Uses projected gradient with the optimal fixed step 2/(l_min + l_max);
    linear convergence is guaranteed by strong convexity.  With `debug`
    the objective is checked for monotone descent at every iteration.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if box.lower.size != b.size or A.shape != (b.size, b.size):
        raise ValueError("dimension mismatch between A, b and the box")
    step = _pg_step_size(A)
    start = np.zeros(b.size) if x0 is None else np.asarray(x0, dtype=float)
    if debug:
        x, residual, iters = _pg_descent_checked(A, b, box, start, step, tol, max_iter)
    else:
        x, residual, iters = _kernels.boxqp_pg(
            A, b, box.lower, box.upper, start, step, tol, max_iter
        )
    if residual > tol:
        raise IterationLimitError(residual, iters)
    return QpSolution(x_star=x, kkt_residual=float(residual), iterations=int(iters))


def _pg_descent_checked(A, b, box, x0, step, tol, max_iter):
    """Reference loop asserting the objective never increases."""

    def objective(v):
        return 0.5 * float(v @ A @ v) + float(b @ v)

    x = np.clip(x0, box.lower, box.upper)
    g = A @ x + b
    residual = float(np.abs(x - np.clip(x - g, box.lower, box.upper)).max())
    iters = 0
    value = objective(x)
    while residual > tol and iters < max_iter:
        x = np.clip(x - step * g, box.lower, box.upper)
        new_value = objective(x)
        if new_value > value + 1e-12 * max(1.0, abs(value)):
            raise AssertionError(
                f"objective increased at iteration {iters}: {value} -> {new_value}"
            )
        value = new_value
        g = A @ x + b
        residual = float(np.abs(x - np.clip(x - g, box.lower, box.upper)).max())
        iters += 1
    return x, residual, iters
