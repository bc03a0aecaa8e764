"""Two-phase adaptive supervisor (P-SIMBO).

Phase 1 (warm-up) runs projected online gradient descent while RLS
identifies the signal model from the projected iterates.  When the
a-posteriori identification error settles, a controller is synthesized
from the identified model and the supervisor switches to the structured
phase, stepping the projected control-based solver with anti-windup.
Identification keeps running; when the error drifts out of its settled
band and re-settles, the controller is re-synthesized.  If the error
blows up relative to its level at installation, or synthesis fails, the
supervisor falls back to gradient descent and waits for the next usable
model.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .internal_model import (
    InternalModel,
    UnstableModelError,
    companion_realization,
    polynomial_roots,
)
from .problem import QuadraticProblem
from .rls import (
    DEFAULT_ALPHA,
    DEFAULT_P0,
    Regressor,
    RlsState,
    default_discard,
    error_band_ratio,
    first_regressor_base,
    initial_rls_state,
    rls_update,
)
from .solvers import SolverState, default_pogd_stepsize, initial_state, pcbw_step, pogd_step
from .synthesis import ControllerGains, SynthesisFailed, synthesize

logger = logging.getLogger(__name__)

# Floor for the error level recorded at controller installation, so a
# near-exact identification does not make the blow-up test hair-triggered.
INSTALL_ERROR_FLOOR = 1e-12


class Phase(str, Enum):
    WARM_UP = "warmup"
    STRUCTURED = "structured"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class SupervisorEvent:
    step: int
    kind: str  # phase_change | drift_detected | resynthesis | synthesis_failed | rls_reinit
    detail: str = ""

    def as_dict(self) -> dict:
        return {"step": self.step, "kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class SupervisorConfig:
    model_order: int = 3
    settle_window: int = 100
    settle_rel_tol: float = 0.05
    min_phase1_steps: int | None = None  # default: 2*(m+1) + identification burn-in
    fallback_error_factor: float = 10.0
    resynth_cooldown: int = 200
    anti_windup_enabled: bool = True
    rho: float = 1.0
    rls_alpha: float = DEFAULT_ALPHA
    rls_p0: float = DEFAULT_P0
    rls_discard: int | None = None  # default: 2*model_order
    pole_clamp_budget: float = 0.05
    pogd_h: float | None = None  # default: 2/(l_low + l_high)
    synthesis_grid_points: int = 512

    def __post_init__(self):
        if self.model_order < 1:
            raise ValueError("model order must be at least 1")
        if self.settle_window < 2:
            raise ValueError("settle window must be at least 2")
        if self.settle_rel_tol <= 0 or self.fallback_error_factor <= 0:
            raise ValueError("tolerances must be positive")
        if self.resynth_cooldown < 1:
            raise ValueError("cooldown must be positive")
        if self.rho < 0:
            raise ValueError("anti-windup weight must be nonnegative")

    def resolved_min_phase1(self) -> int:
        if self.min_phase1_steps is not None:
            return self.min_phase1_steps
        burn_in = default_discard(self.model_order) if self.rls_discard is None else self.rls_discard
        return 2 * (self.model_order + 1) + burn_in

    @classmethod
    def from_mapping(cls, data: dict) -> "SupervisorConfig":
        data = dict(data or {})
        kwargs = {}
        rls_section = data.pop("rls", None)
        if rls_section:
            if "alpha" in rls_section:
                kwargs["rls_alpha"] = float(rls_section["alpha"])
            if "p0" in rls_section:
                kwargs["rls_p0"] = float(rls_section["p0"])
            if "discard" in rls_section and rls_section["discard"] is not None:
                kwargs["rls_discard"] = int(rls_section["discard"])
        if "anti_windup" in data:
            kwargs["anti_windup_enabled"] = bool(data.pop("anti_windup"))
        for key in (
            "model_order",
            "settle_window",
            "settle_rel_tol",
            "min_phase1_steps",
            "fallback_error_factor",
            "resynth_cooldown",
            "rho",
            "pole_clamp_budget",
            "pogd_h",
            "synthesis_grid_points",
        ):
            if key in data and data[key] is not None:
                kwargs[key] = data.pop(key)
            else:
                data.pop(key, None)
        if data:
            raise ValueError(f"unknown supervisor keys: {sorted(data)}")
        return cls(**kwargs)


def stabilized_model(d_hat, clamp_budget: float) -> InternalModel:
    """Identified coefficients, with poles clamped into the unit disk.

    Estimates routinely land a hair outside the circle.  Roots whose
    excess is within the budget are clamped radially; beyond the budget
    the data is treated as genuinely unstable.  Clustered roots may still
    trip the model's strict stability check after the rebuild (root
    scatter), in which case a second pass pulls them slightly inside.
    """
    d = np.atleast_1d(np.asarray(d_hat, dtype=float))
    try:
        return InternalModel(d)
    except UnstableModelError:
        pass
    roots = polynomial_roots(d)
    moduli = np.abs(roots)
    excess = float(moduli.max() - 1.0)
    if excess > clamp_budget:
        raise UnstableModelError(
            f"identified model has a pole {excess:.3g} outside the unit circle, "
            f"beyond the clamp budget {clamp_budget:g}"
        )
    clamped = np.where(moduli > 1.0, roots / np.maximum(moduli, 1e-300), roots)
    for target in (1.0, 1.0 - 1e-5):
        mod = np.abs(clamped)
        shrunk = np.where(mod > target, clamped * (target / np.maximum(mod, 1e-300)), clamped)
        coeffs = np.poly(shrunk)
        if np.abs(coeffs.imag).max() > 1e-9:  # pragma: no cover - conjugate pairing
            continue
        try:
            return InternalModel(coeffs.real[1:][::-1])
        except UnstableModelError:
            continue
    raise UnstableModelError("could not stabilize the identified coefficients")


@dataclass
class SupervisorState:
    """Owned by a single runner; simbo_step updates it in place and returns it."""

    config: SupervisorConfig
    phase: Phase
    solver_state: SolverState
    rls_state: RlsState
    pogd_h: float
    active_model: InternalModel | None = None
    active_gains: ControllerGains | None = None
    active_realization: object = None
    last_switch_step: int = -1
    event_log: list = field(default_factory=list)
    history: list = field(default_factory=list)
    in_band: bool = False
    drift_armed: bool = False
    install_error_level: float | None = None
    last_synth_attempt: int = -(10**9)
    last_iterate_delta: float = 0.0
    controller_history: list = field(default_factory=list)

    def _log(self, step: int, kind: str, detail: str = ""):
        self.event_log.append(SupervisorEvent(step=step, kind=kind, detail=detail))


def new_supervisor(config: SupervisorConfig, problem: QuadraticProblem, x0=None) -> SupervisorState:
    h = config.pogd_h
    if h is None:
        h = default_pogd_stepsize(problem.spectral_bounds)
    if not 0 < h < 2.0 / problem.spectral_bounds[1]:
        raise ValueError(
            f"warm-up stepsize {h} must lie in (0, 2/{problem.spectral_bounds[1]})"
        )
    window_capacity = max(4 * config.settle_window, 256)
    return SupervisorState(
        config=config,
        phase=Phase.WARM_UP,
        solver_state=initial_state(problem.dim, 0, problem.box(0), x0=x0),
        rls_state=initial_rls_state(
            config.model_order,
            alpha=config.rls_alpha,
            p0=config.rls_p0,
            history_capacity=window_capacity,
        ),
        pogd_h=h,
    )


def phase_of(sup: SupervisorState) -> Phase:
    return sup.phase


def events_of(sup: SupervisorState) -> list:
    return list(sup.event_log)


def _median_recent_error(sup: SupervisorState) -> float | None:
    window = sup.config.settle_window
    if len(sup.rls_state.error_history) < window:
        return None
    return float(np.median(np.asarray(sup.rls_state.error_history[-window:])))


def _try_install(sup: SupervisorState, problem: QuadraticProblem, k: int) -> bool:
    """Synthesize from the current estimate and install on success."""
    sup.last_synth_attempt = k
    try:
        model = stabilized_model(sup.rls_state.d_hat, sup.config.pole_clamp_budget)
        gains = synthesize(
            model,
            problem.spectral_bounds,
            grid_points=sup.config.synthesis_grid_points,
        )
    except (UnstableModelError, SynthesisFailed, ValueError) as exc:
        sup._log(k, "synthesis_failed", str(exc))
        return False
    previous = sup.phase
    sup.active_model = model
    sup.active_gains = gains
    sup.active_realization = companion_realization(model)
    # Stale controller state has no meaning under new dynamics: reset the
    # internal state and reseed from the last feasible iterate.
    x_seed = sup.solver_state.x_feasible.copy()
    sup.solver_state = SolverState(
        w_state=np.zeros((model.order, problem.dim)),
        x_raw=x_seed,
        x_feasible=x_seed.copy(),
        step_index=sup.solver_state.step_index,
    )
    sup.last_switch_step = k
    median = _median_recent_error(sup)
    sup.install_error_level = max(median if median is not None else 0.0, INSTALL_ERROR_FLOOR)
    sup.drift_armed = False
    sup.controller_history.append((k, gains.as_dict()))
    if previous is Phase.STRUCTURED:
        sup._log(k, "resynthesis", f"certified radius {gains.certified_radius:.6g}")
    else:
        sup._log(
            k,
            "phase_change",
            f"{previous.value}->structured (certified radius {gains.certified_radius:.6g})",
        )
    sup.phase = Phase.STRUCTURED
    return True


def _enter_fallback(sup: SupervisorState, k: int, reason: str):
    sup._log(k, "phase_change", f"{sup.phase.value}->fallback: {reason}")
    sup.phase = Phase.FALLBACK
    sup.active_model = None
    sup.active_gains = None
    sup.active_realization = None
    sup.solver_state = SolverState(
        w_state=np.zeros((0, sup.solver_state.n)),
        x_raw=sup.solver_state.x_feasible.copy(),
        x_feasible=sup.solver_state.x_feasible.copy(),
        step_index=sup.solver_state.step_index,
    )
    # Keep the estimate but forget its confidence, so identification can
    # move; the error history is kept for the settling statistics.
    sup.rls_state = RlsState(
        d_hat=sup.rls_state.d_hat,
        p_matrix=sup.config.rls_p0 * np.eye(sup.config.model_order),
        alpha=sup.rls_state.alpha,
        error_history=sup.rls_state.error_history,
        sample_count=sup.rls_state.sample_count,
        history_capacity=sup.rls_state.history_capacity,
        reinit_count=sup.rls_state.reinit_count,
    )
    sup.install_error_level = None
    sup.drift_armed = False


def simbo_step(sup: SupervisorState, problem: QuadraticProblem, k: int):
    """Advance the supervisor by one step; returns (state, feasible iterate).

    Steps must be consecutive: the k-th call consumes cost f_k.
    """
    if k != sup.solver_state.step_index:
        raise ValueError(
            f"steps must be consecutive: expected k={sup.solver_state.step_index}, got {k}"
        )
    config = sup.config
    box = problem.box(k)
    previous_x = sup.solver_state.x_feasible
    gradient = problem.hessian @ previous_x + problem.b(k)

    if sup.phase is Phase.STRUCTURED:
        rho = config.rho if config.anti_windup_enabled else 0.0
        sup.solver_state = pcbw_step(
            sup.solver_state, gradient, sup.active_realization, sup.active_gains, box, rho
        )
    else:
        sup.solver_state = pogd_step(sup.solver_state, gradient, box, sup.pogd_h)

    x = sup.solver_state.x_feasible
    sup.last_iterate_delta = float(np.linalg.norm(x - previous_x))
    sup.history.append(x.copy())

    # Feed identification with any newly available regressor (one shift
    # per appended sample once past the burn-in).
    m = config.model_order
    base = len(sup.history) - 1 - m
    if base >= first_regressor_base(m, config.rls_discard):
        window = np.stack(sup.history[base : base + m])
        reinits_before = sup.rls_state.reinit_count
        for j in range(problem.dim):
            reg = Regressor(phi=window[:, j], target=-float(x[j]))
            sup.rls_state, _ = rls_update(sup.rls_state, reg, reinit_delta=config.rls_p0)
        if sup.rls_state.reinit_count > reinits_before:
            sup._log(k, "rls_reinit", "covariance reset to p0*I")

    # Band statistics drive both drift detection and settling.
    ratio = error_band_ratio(sup.rls_state, config.settle_window)
    settled = ratio is not None and ratio <= config.settle_rel_tol
    departed = ratio is not None and ratio > 2.0 * config.settle_rel_tol
    if sup.in_band and departed:
        sup._log(k, "drift_detected", f"error band ratio {ratio:.3g}")
        sup.drift_armed = True
        sup.in_band = False
    elif settled:
        sup.in_band = True

    if k > 0 and k % config.settle_window == 0:
        logger.debug(
            "step %d: phase=%s iterate_delta=%.3g band_ratio=%s",
            k,
            sup.phase.value,
            sup.last_iterate_delta,
            "n/a" if ratio is None else f"{ratio:.3g}",
        )

    cooldown_ok = k - sup.last_synth_attempt >= config.resynth_cooldown
    if sup.phase in (Phase.WARM_UP, Phase.FALLBACK):
        if settled and k >= config.resolved_min_phase1() and cooldown_ok:
            _try_install(sup, problem, k)
    else:
        median = _median_recent_error(sup)
        blown_up = (
            median is not None
            and sup.install_error_level is not None
            and k - sup.last_switch_step >= config.settle_window
            and median > config.fallback_error_factor * sup.install_error_level
        )
        if blown_up:
            _enter_fallback(
                sup,
                k,
                f"a-posteriori error {median:.3g} exceeds "
                f"{config.fallback_error_factor:g} x install level {sup.install_error_level:.3g}",
            )
        elif (
            sup.drift_armed
            and settled
            and k - sup.last_switch_step >= config.resynth_cooldown
            and cooldown_ok
        ):
            if not _try_install(sup, problem, k):
                _enter_fallback(sup, k, "re-synthesis failed on the re-identified model")

    return sup, x
