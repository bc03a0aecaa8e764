"""Recursive least squares identification of the signal-model coefficients.

Once an online solver with stepsize below 2/l_max has burned in, its
iterates obey the same recurrence as the linear cost term,

    x[k+m] + sum_i d[i] x[k+i] = 0,

so the model coefficients d can be regressed from iterate history.  Each
coordinate of each usable time shift yields one scalar observation

    target = -x[k+m, j],  phi = (x[k, j], ..., x[k+m-1, j]),

with target = phi . d.  A forgetting factor alpha < 1 discounts old data
so the estimate can follow changes in the underlying signal.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.99
DEFAULT_P0 = 1e4
DEFAULT_HISTORY = 256

# Windows whose mean error is below this are counted as settled outright.
ERROR_FLOOR = 1e-12


@dataclass(frozen=True)
class Regressor:
    """One scalar observation: target should equal phi . d."""

    phi: np.ndarray
    target: float

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float)).copy()
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class RlsState:
    """Estimate, covariance and recent a-posteriori errors."""

    d_hat: np.ndarray
    p_matrix: np.ndarray
    alpha: float
    error_history: tuple = ()
    sample_count: int = 0
    history_capacity: int = DEFAULT_HISTORY
    reinit_count: int = 0

    def __post_init__(self):
        # alpha = 1 (no forgetting) is admitted for oracle comparisons.
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        d = np.atleast_1d(np.asarray(self.d_hat, dtype=float)).copy()
        p = np.asarray(self.p_matrix, dtype=float).copy()
        if p.shape != (d.size, d.size):
            raise ValueError("covariance shape does not match the estimate")
        d.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "d_hat", d)
        object.__setattr__(self, "p_matrix", p)

    @property
    def order(self) -> int:
        return self.d_hat.size


def initial_rls_state(
    order: int,
    alpha: float = DEFAULT_ALPHA,
    p0: float = DEFAULT_P0,
    d0=None,
    history_capacity: int = DEFAULT_HISTORY,
) -> RlsState:
    if order < 1:
        raise ValueError("model order must be at least 1")
    if p0 <= 0:
        raise ValueError("initial covariance scale must be positive")
    d_hat = np.zeros(order) if d0 is None else np.asarray(d0, dtype=float)
    return RlsState(
        d_hat=d_hat,
        p_matrix=p0 * np.eye(order),
        alpha=alpha,
        history_capacity=history_capacity,
    )


def default_discard(order: int) -> int:
    """Extra samples dropped beyond the recurrence's own m+1 burn-in."""
    return 2 * order


def first_regressor_base(order: int, discard: int | None = None) -> int:
    """Smallest usable shift index: the recurrence holds from m+1 on."""
    extra = default_discard(order) if discard is None else discard
    return order + 1 + extra


def build_regressors(history, m: int, discard: int | None = None) -> list:
    """All scalar regressors available from an iterate history.

    `history` is a sequence of n-vectors (or scalars).  For each usable
    shift k and each coordinate j one regressor is emitted, in (k, j)
    order.  Shifts start at m+1 plus the burn-in discard.
    """
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    if hist.shape[0] == 1 and np.ndim(history) == 1:
        hist = hist.T
    length = hist.shape[0]
    if length < m + 1:
        raise ValueError(f"history of length {length} is shorter than m+1 = {m + 1}")
    start = first_regressor_base(m, discard)
    out = []
    for k in range(start, length - m):
        window = hist[k : k + m]
        target_row = hist[k + m]
        for j in range(hist.shape[1]):
            out.append(Regressor(phi=window[:, j], target=-float(target_row[j])))
    return out


def rls_update(state: RlsState, reg: Regressor, reinit_delta: float = DEFAULT_P0):
    """One forgetting-factor update; returns (state, a_posteriori_error).

    The a-posteriori error is the residual evaluated with the updated
    estimate; it is appended to the state's error history.  If the
    covariance loses positive definiteness it is reset to reinit_delta*I
    and the event is counted (and logged).
    """
    if reg.phi.size != state.order:
        raise ValueError(f"regressor has order {reg.phi.size}, state has {state.order}")
    d_new, p_new, a_post, reinitialized = _kernels.rls_update(
        state.d_hat, state.p_matrix, reg.phi, reg.target, state.alpha, reinit_delta
    )
    if reinitialized:
        logger.warning(
            "RLS covariance lost positive definiteness at sample %d; reset to %g*I",
            state.sample_count + 1,
            reinit_delta,
        )
    history = (state.error_history + (float(a_post),))[-state.history_capacity :]
    new_state = RlsState(
        d_hat=d_new,
        p_matrix=p_new,
        alpha=state.alpha,
        error_history=history,
        sample_count=state.sample_count + 1,
        history_capacity=state.history_capacity,
        reinit_count=state.reinit_count + int(reinitialized),
    )
    return new_state, float(a_post)


def error_band_ratio(state: RlsState, window: int) -> float | None:
    """(max - min) / mean of the last `window` errors; None if too few."""
    if window < 2:
        raise ValueError("window must be at least 2")
    if len(state.error_history) < window:
        return None
    recent = np.asarray(state.error_history[-window:])
    mean = max(float(recent.mean()), ERROR_FLOOR)
    return float((recent.max() - recent.min()) / mean)


def a_posteriori_settled(state: RlsState, window: int, rel_tol: float) -> bool:
    """True when the recent a-posteriori errors are roughly constant.

    Requires a full window of samples; the relative band (max - min)/mean
    must be within rel_tol.  An all-tiny window counts as settled via the
    mean floor.
    """
    ratio = error_band_ratio(state, window)
    return ratio is not None and ratio <= rel_tol
