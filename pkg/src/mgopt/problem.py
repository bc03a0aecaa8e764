"""Time-varying constrained quadratic problems and the microgrid scenario.

The demand-response scenario controls n distributed energy resources
(setpoints x) on a microgrid coupled to the transmission grid at y_dim
points of common coupling.  The grid is an algebraic map y = J x + H w
with unmeasurable periodic loads w, and the per-step cost combines a
setpoint-tracking term at the PCCs with a quadratic user-dissatisfaction
term:

    f_k(x) = (beta/2) ||J x + H w_k - ref_k||^2
             + 0.5 x' U1 x + x' u2_k + u3_k.

This is 0.5 x'Ax + x'b_k (plus a constant) with A = beta J'J + U1 and
b_k = beta J'(H w_k - ref_k) + u2_k.  Setpoints are box-constrained by
the DER power limits.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import yaml

# Default DER power limits (6 resources).
DEFAULT_BOX_LOWER = (-10.0, -6.0, 3.0, 7.0, 0.0, 3.0)
DEFAULT_BOX_UPPER = (10.0, 6.0, 13.0, 17.0, 28.0, 32.0)

SYMMETRY_TOL = 1e-12
SPECTRUM_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid configuration content."""


class ScenarioError(RuntimeError):
    """Scenario construction failed its spectral contract."""


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box {x : lower <= x <= upper}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        up = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != up.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(lo > up):
            raise ValueError("box is empty: lower > upper in some coordinate")
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def triangular_reference(k: int, period: int, amplitude: float, offset) -> np.ndarray:
    """Triangle wave sample: rises 0 to 1 over the first half period, falls back.

    Returns offset + amplitude * tri(k mod period) with the same scalar
    wave added to every coordinate of `offset`.
    """
    if period < 2:
        raise ValueError(f"period must be at least 2 steps, got {period}")
    phase = (k % period) / period
    tri = 2.0 * phase if phase <= 0.5 else 2.0 * (1.0 - phase)
    return np.asarray(offset, dtype=float) + amplitude * tri


@dataclass(frozen=True)
class ScenarioConfig:
    """Generation knobs for the microgrid scenario; defaults match the benchmark."""

    n: int = 6
    y_dim: int = 2
    w_dim: int = 2
    horizon: int = 8000
    beta: float = 1.0
    load_omega: float = 0.005
    ref_period: int = 2000
    ref_amplitude: float = 2.0
    ref_offset: tuple = (0.0, 0.0)
    box_lower: tuple = DEFAULT_BOX_LOWER
    box_upper: tuple = DEFAULT_BOX_UPPER
    lambda_low: float = 1.0
    lambda_high: float = 6.0
    coupling_eig_range: tuple = (1.0, 5.0)  # nonzero eigenvalues of J'J and H
    dissatisfaction_eig_max: float = 1.0  # U1 eigenvalues drawn in (0, this]
    retry_budget: int = 5

    def __post_init__(self):
        if min(self.n, self.y_dim, self.w_dim) <= 0:
            raise ConfigError("dimensions must be positive")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.ref_period < 2:
            raise ConfigError("reference period must be at least 2")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not 0 < self.lambda_low <= self.lambda_high:
            raise ConfigError("spectral bounds must satisfy 0 < low <= high")
        if len(self.box_lower) != self.n or len(self.box_upper) != self.n:
            raise ConfigError("box bounds must have length n")
        if len(self.ref_offset) != self.y_dim:
            raise ConfigError("reference offset must have length y_dim")

    @classmethod
    def from_mapping(cls, data: dict) -> "ScenarioConfig":
        data = dict(data or {})
        kwargs = {}
        ref = data.pop("reference", None)
        if ref is not None:
            if "period" in ref:
                kwargs["ref_period"] = int(ref["period"])
            if "amplitude" in ref:
                kwargs["ref_amplitude"] = float(ref["amplitude"])
            if "offset" in ref:
                kwargs["ref_offset"] = tuple(float(v) for v in ref["offset"])
        box = data.pop("box", None)
        if box is not None:
            kwargs["box_lower"] = tuple(float(v) for v in box["lower"])
            kwargs["box_upper"] = tuple(float(v) for v in box["upper"])
        simple = {
            "n": int,
            "y_dim": int,
            "w_dim": int,
            "horizon": int,
            "beta": float,
            "load_omega": float,
            "lambda_low": float,
            "lambda_high": float,
            "dissatisfaction_eig_max": float,
            "retry_budget": int,
        }
        for key, cast in simple.items():
            if key in data:
                kwargs[key] = cast(data.pop(key))
        if "coupling_eig_range" in data:
            kwargs["coupling_eig_range"] = tuple(
                float(v) for v in data.pop("coupling_eig_range")
            )
        if data:
            raise ConfigError(f"unknown scenario keys: {sorted(data)}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_scenario_config(path) -> ScenarioConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.from_mapping(data.get("scenario", data))


@dataclass(frozen=True)
class Scenario:
    """A fully instantiated microgrid problem over a finite horizon."""

    j_matrix: np.ndarray
    h_matrix: np.ndarray
    beta: float
    u1_matrix: np.ndarray
    u2_values: np.ndarray  # (2, n): switching linear dissatisfaction terms
    u3_values: np.ndarray  # (2,): switching constant dissatisfaction terms
    load_omega: float
    ref_period: int
    ref_amplitude: float
    ref_offset: np.ndarray
    box: BoxSet
    horizon: int
    seed: int
    spectral_bounds: tuple

    def __post_init__(self):
        for name in ("j_matrix", "h_matrix", "u1_matrix", "u2_values", "u3_values", "ref_offset"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.j_matrix.shape[1]

    @property
    def y_dim(self) -> int:
        return self.j_matrix.shape[0]

    @property
    def w_dim(self) -> int:
        return self.h_matrix.shape[1]

    def _check_step(self, k: int):
        if not 0 <= k < self.horizon:
            raise IndexError(f"step {k} outside horizon [0, {self.horizon})")

    def _switch_slot(self, k: int) -> int:
        # First value in the first and third quarters, second value otherwise.
        quarter = (4 * k) // self.horizon
        return 0 if quarter in (0, 2) else 1

    def load(self, k: int) -> np.ndarray:
        self._check_step(k)
        return np.full(self.w_dim, np.sin(self.load_omega * k))

    def reference(self, k: int) -> np.ndarray:
        self._check_step(k)
        return triangular_reference(k, self.ref_period, self.ref_amplitude, self.ref_offset)

    def u2(self, k: int) -> np.ndarray:
        self._check_step(k)
        return self.u2_values[self._switch_slot(k)]

    def u3(self, k: int) -> float:
        self._check_step(k)
        return float(self.u3_values[self._switch_slot(k)])

    def box_at(self, k: int) -> BoxSet:
        self._check_step(k)
        return self.box

    def to_dict(self) -> dict:
        """Self-describing export of matrices and schedule parameters."""
        return {
            "schema": "mgopt.scenario.v1",
            "dims": {"n": self.n, "y_dim": self.y_dim, "w_dim": self.w_dim},
            "horizon": self.horizon,
            "seed": self.seed,
            "beta": self.beta,
            "j_matrix": self.j_matrix.tolist(),
            "h_matrix": self.h_matrix.tolist(),
            "u1_matrix": self.u1_matrix.tolist(),
            "u2_values": self.u2_values.tolist(),
            "u3_values": self.u3_values.tolist(),
            "load": {"kind": "sinusoid", "omega": self.load_omega},
            "reference": {
                "kind": "triangular",
                "period": self.ref_period,
                "amplitude": self.ref_amplitude,
                "offset": self.ref_offset.tolist(),
            },
            "switching": "first value in first and third quarters",
            "box": {"lower": self.box.lower.tolist(), "upper": self.box.upper.tolist()},
            "spectral_bounds": list(self.spectral_bounds),
        }


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-fixed QR of a Gaussian."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def compose_linear_term(j_matrix, h_matrix, beta, w, y_ref, u2) -> np.ndarray:
    """b = beta * J'(H w - y_ref) + u2."""
    j_matrix = np.asarray(j_matrix, dtype=float)
    h_matrix = np.asarray(h_matrix, dtype=float)
    return beta * (j_matrix.T @ (h_matrix @ np.asarray(w, dtype=float) - np.asarray(y_ref, dtype=float))) + np.asarray(u2, dtype=float)


def linear_term(scenario: Scenario, k: int) -> np.ndarray:
    """Linear cost term b_k at step k."""
    return compose_linear_term(
        scenario.j_matrix,
        scenario.h_matrix,
        scenario.beta,
        scenario.load(k),
        scenario.reference(k),
        scenario.u2(k),
    )


def hessian_of(scenario: Scenario) -> np.ndarray:
    """A = beta J'J + U1, symmetrized against rounding."""
    a = scenario.beta * scenario.j_matrix.T @ scenario.j_matrix + scenario.u1_matrix
    return 0.5 * (a + a.T)


def scenario_cost(scenario: Scenario, k: int, x) -> float:
    """Full per-step cost including the constant dissatisfaction term u3."""
    x = np.asarray(x, dtype=float)
    y = scenario.j_matrix @ x + scenario.h_matrix @ scenario.load(k)
    resid = y - scenario.reference(k)
    return (
        0.5 * scenario.beta * float(resid @ resid)
        + 0.5 * float(x @ scenario.u1_matrix @ x)
        + float(x @ scenario.u2(k))
        + scenario.u3(k)
    )


def make_microgrid_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Generate the randomized microgrid instance for a seed.

    J is drawn with squared singular values uniform in the coupling range,
    H symmetric PSD with eigenvalues in the same range, and U1 in the
    right-singular basis of J with eigenvalues in (0, 1]: unit on the null
    space of J'J so the full Hessian spectrum stays inside the declared
    bounds, random on the coupled directions.  The construction is a pure
    function of (config, seed); the spectral contract is still checked,
    with fresh draws on the rare numerical violation.
    """
    rng = np.random.default_rng(seed)
    lo, hi = config.coupling_eig_range
    if not 0 < lo <= hi:
        raise ConfigError("coupling eigenvalue range must be positive")
    for _ in range(max(1, config.retry_budget)):
        u_left = random_orthogonal(rng, config.y_dim)
        v_right = random_orthogonal(rng, config.n)
        coupling_eigs = rng.uniform(lo, hi, size=config.y_dim)
        j_matrix = u_left @ np.diag(np.sqrt(coupling_eigs)) @ v_right[:, : config.y_dim].T

        q_h = random_orthogonal(rng, config.w_dim)
        h_eigs = rng.uniform(lo, hi, size=config.w_dim)
        h_matrix = q_h @ np.diag(h_eigs) @ q_h.T
        h_matrix = 0.5 * (h_matrix + h_matrix.T)

        # 1 - U(0,1) lands in (0, 1]; scaled by the configured maximum.  The
        # first y_dim columns of v_right span range(J'J), so U1 is random
        # there and identity on the complement, keeping the Hessian
        # spectrum inside the declared bounds.
        u1_eigs = np.ones(config.n)
        u1_eigs[: config.y_dim] = config.dissatisfaction_eig_max * (
            1.0 - rng.random(config.y_dim)
        )
        u1_matrix = v_right @ np.diag(u1_eigs) @ v_right.T
        u1_matrix = 0.5 * (u1_matrix + u1_matrix.T)

        u2_values = rng.standard_normal((2, config.n))
        u3_values = rng.standard_normal(2)

        scenario = Scenario(
            j_matrix=j_matrix,
            h_matrix=h_matrix,
            beta=config.beta,
            u1_matrix=u1_matrix,
            u2_values=u2_values,
            u3_values=u3_values,
            load_omega=config.load_omega,
            ref_period=config.ref_period,
            ref_amplitude=config.ref_amplitude,
            ref_offset=np.asarray(config.ref_offset, dtype=float),
            box=BoxSet(config.box_lower, config.box_upper),
            horizon=config.horizon,
            seed=seed,
            spectral_bounds=(config.lambda_low, config.lambda_high),
        )
        eigs = np.linalg.eigvalsh(hessian_of(scenario))
        if (
            eigs[0] >= config.lambda_low - SPECTRUM_TOL
            and eigs[-1] <= config.lambda_high + SPECTRUM_TOL
        ):
            return scenario
    raise ScenarioError(
        f"could not generate a scenario with Hessian spectrum in "
        f"[{config.lambda_low}, {config.lambda_high}] after {config.retry_budget} draws"
    )


@dataclass(frozen=True)
class QuadraticProblem:
    """f_k(x) = 0.5 x'Ax + x'b_k over a time-varying box."""

    hessian: np.ndarray
    linear_term_source: Callable[[int], np.ndarray]
    constraint_source: Callable[[int], BoxSet]
    spectral_bounds: tuple

    def __post_init__(self):
        a = np.asarray(self.hessian, dtype=float).copy()
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("Hessian must be square")
        if np.abs(a - a.T).max() > SYMMETRY_TOL:
            raise ValueError("Hessian is not symmetric")
        lo, hi = self.spectral_bounds
        if not 0 < lo <= hi:
            raise ValueError("spectral bounds must satisfy 0 < low <= high")
        eigs = np.linalg.eigvalsh(a)
        scale = max(1.0, abs(hi))
        if eigs[0] < lo - SPECTRUM_TOL * scale or eigs[-1] > hi + SPECTRUM_TOL * scale:
            raise ValueError(
                f"Hessian spectrum [{eigs[0]:.6g}, {eigs[-1]:.6g}] violates "
                f"declared bounds [{lo}, {hi}]"
            )
        a.setflags(write=False)
        object.__setattr__(self, "hessian", a)

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    def b(self, k: int) -> np.ndarray:
        return np.asarray(self.linear_term_source(k), dtype=float)

    def box(self, k: int) -> BoxSet:
        box = self.constraint_source(k)
        if box.dim != self.dim:
            raise ValueError("constraint box dimension mismatch")
        return box

    def cost(self, k: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.hessian @ x) + float(x @ self.b(k))

    def gradient(self, k: int, x) -> np.ndarray:
        return eval_gradient(self, k, x)


def eval_gradient(problem: QuadraticProblem, k: int, x) -> np.ndarray:
    """grad f_k(x) = A x + b_k."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({problem.dim},)")
    return problem.hessian @ x + problem.b(k)


def problem_from_scenario(scenario: Scenario) -> QuadraticProblem:
    return QuadraticProblem(
        hessian=hessian_of(scenario),
        linear_term_source=lambda k: linear_term(scenario, k),
        constraint_source=scenario.box_at,
        spectral_bounds=scenario.spectral_bounds,
    )
