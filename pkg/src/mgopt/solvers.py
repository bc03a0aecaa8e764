"""Online solvers: projected gradient descent and the control-based family.

The control-based solvers run one m-dimensional controller per problem
coordinate: the state is an (m, n) array W whose column j is the state of
coordinate j's controller.  The update

    W <- F W + G drive',   x = row W

is the blockwise form of the Kronecker recursion (F (x) I) w; both agree
exactly and the blockwise form costs O(m n) per step.  The drive signal
is the gradient at the last feasible iterate; with anti-windup the
projection mismatch rho*(x' - x) is subtracted from it.
"""

from dataclasses import dataclass

import numpy as np

from .internal_model import CompanionRealization
from .problem import BoxSet
from .synthesis import ControllerGains


@dataclass(frozen=True)
class SolverState:
    """Value-type state of one solver instance."""

    w_state: np.ndarray  # (m, n); empty (0, n) for solvers without memory
    x_raw: np.ndarray
    x_feasible: np.ndarray
    step_index: int = 0

    @property
    def n(self) -> int:
        return self.x_raw.size

    @property
    def order(self) -> int:
        return self.w_state.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    """Declarative description of one solver for the harness."""

    kind: str  # pogd | cb | pcb | pcbw
    h: float | None = None
    rho: float = 1.0
    realization: CompanionRealization | None = None
    gains: ControllerGains | None = None

    def __post_init__(self):
        if self.kind not in {"pogd", "cb", "pcb", "pcbw"}:
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.rho < 0:
            raise ValueError("anti-windup weight must be nonnegative")
        if self.kind != "pogd" and (self.realization is None or self.gains is None):
            raise ValueError(f"{self.kind} requires a realization and gains")


def initial_state(n: int, order: int = 0, box: BoxSet | None = None, x0=None, w0=None) -> SolverState:
    """Zero-initialized state; x0 is projected onto the step-0 box.

    Both the raw and the feasible iterate start at the projected seed so
    the anti-windup correction is zero on the first step.
    """
    x_raw = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    w = np.zeros((order, n)) if w0 is None else np.asarray(w0, dtype=float).copy()
    if w.shape != (order, n):
        raise ValueError(f"w0 has shape {w.shape}, expected ({order}, {n})")
    if box is not None:
        x_raw = np.clip(x_raw, box.lower, box.upper)
    return SolverState(w_state=w, x_raw=x_raw, x_feasible=x_raw.copy(), step_index=0)


def project_box(x, box: BoxSet) -> np.ndarray:
    """Euclidean projection onto a box: componentwise clamp."""
    x = np.asarray(x, dtype=float)
    if x.shape != box.lower.shape:
        raise ValueError(f"x has shape {x.shape}, expected {box.lower.shape}")
    return np.clip(x, box.lower, box.upper)


def pogd_step(state: SolverState, gradient, box: BoxSet, h: float) -> SolverState:
    """Projected gradient step from the current feasible iterate."""
    if h <= 0:
        raise ValueError("stepsize must be positive")
    x = project_box(state.x_feasible - h * np.asarray(gradient, dtype=float), box)
    return SolverState(
        w_state=state.w_state,
        x_raw=x,
        x_feasible=x,
        step_index=state.step_index + 1,
    )


def _controller_update(state, drive, realization, gains):
    w = realization.f_matrix @ state.w_state + np.outer(realization.g_vector, drive)
    x_raw = gains.effective_row @ w
    return w, x_raw


def cb_step(
    state: SolverState,
    gradient,
    realization: CompanionRealization,
    gains: ControllerGains,
) -> SolverState:
    """Unconstrained control-based step; the iterate is the controller output."""
    w, x_raw = _controller_update(state, np.asarray(gradient, dtype=float), realization, gains)
    return SolverState(w_state=w, x_raw=x_raw, x_feasible=x_raw, step_index=state.step_index + 1)


def pcb_step(
    state: SolverState,
    gradient,
    realization: CompanionRealization,
    gains: ControllerGains,
    box: BoxSet,
) -> SolverState:
    """Projected control-based step; the gradient is taken at the feasible iterate."""
    w, x_raw = _controller_update(state, np.asarray(gradient, dtype=float), realization, gains)
    return SolverState(
        w_state=w,
        x_raw=x_raw,
        x_feasible=project_box(x_raw, box),
        step_index=state.step_index + 1,
    )


def pcbw_step(
    state: SolverState,
    gradient,
    realization: CompanionRealization,
    gains: ControllerGains,
    box: BoxSet,
    rho: float,
) -> SolverState:
    """Projected control-based step with anti-windup.

    The drive signal is gradient - rho*(x' - x): the projection mismatch
    is fed back so the controller state does not wind up while the
    constraint binds.  With rho = 0 this is exactly pcb_step.
    """
    if rho < 0:
        raise ValueError("anti-windup weight must be nonnegative")
    drive = np.asarray(gradient, dtype=float)
    if rho != 0.0:
        drive = drive - rho * (state.x_feasible - state.x_raw)
    w, x_raw = _controller_update(state, drive, realization, gains)
    return SolverState(
        w_state=w,
        x_raw=x_raw,
        x_feasible=project_box(x_raw, box),
        step_index=state.step_index + 1,
    )


def default_pogd_stepsize(spectral_bounds) -> float:
    """Optimal fixed step 2/(l_min + l_max) for a strongly convex quadratic."""
    lo, hi = spectral_bounds
    return 2.0 / (lo + hi)
