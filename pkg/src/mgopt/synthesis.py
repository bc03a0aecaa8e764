"""Controller gain synthesis for the control-based solvers.

For a model of order m realized in companion form (F, G), the solver's
closed loop on an eigenspace of the Hessian with eigenvalue lambda is
F + lambda*G*K, whose characteristic polynomial is

    z^m + sum_i (d[i] - lambda * scale * c[i]) z^i

for a gain row K = scale * [c_0 ... c_{m-1}].  Candidate rows place the
closed-loop poles, at a nominal eigenvalue, on a radial contraction of
the model's own poles (contraction 0 = deadbeat, all poles at the
origin).  A scalar scale factor sweeps the effective nominal eigenvalue
across the range.  Every candidate is certified by evaluating the
closed-loop spectral radius on a Chebyshev grid over the whole
eigenvalue range; only candidates with certified radius below 1 are
accepted.
"""

from dataclasses import dataclass, replace

import numpy as np

from .internal_model import InternalModel, polynomial_roots

# Default number of Chebyshev points for certification (endpoints added).
DEFAULT_GRID_POINTS = 512

# Accepted controllers must certify a spectral radius below 1 - this margin.
STABILITY_MARGIN = 1e-3

# Radial contractions of the model poles used as placement targets.
CONTRACTION_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9)


class SynthesisFailed(RuntimeError):
    """No candidate gain row achieved a certified spectral radius below 1."""


@dataclass(frozen=True)
class ControllerGains:
    """Gain row with its nominal eigenvalue and certification record."""

    k_row: np.ndarray
    nominal_lambda: float
    gain_scale: float = 1.0
    certified_radius: float = np.inf

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.k_row, dtype=float)).copy()
        k.setflags(write=False)
        object.__setattr__(self, "k_row", k)
        if self.nominal_lambda <= 0:
            raise ValueError("nominal eigenvalue must be positive")
        if self.gain_scale <= 0:
            raise ValueError("gain scale must be positive")

    @property
    def order(self) -> int:
        return self.k_row.size

    @property
    def effective_row(self) -> np.ndarray:
        """The row actually applied by the solvers: scale * k_row."""
        return self.gain_scale * self.k_row

    def as_dict(self) -> dict:
        return {
            "k_row": [float(c) for c in self.k_row],
            "nominal_lambda": float(self.nominal_lambda),
            "gain_scale": float(self.gain_scale),
            "certified_radius": float(self.certified_radius),
        }


def closed_loop_poly(model: InternalModel, gains: ControllerGains, lam: float) -> np.ndarray:
    """Coefficients (ascending, leading 1 implicit) of det(zI - F - lam*G*K)."""
    if gains.order != model.order:
        raise ValueError(
            f"gain row has length {gains.order}, model order is {model.order}"
        )
    return model.denominator - lam * gains.effective_row


def closed_loop_radius(model: InternalModel, gains: ControllerGains, lam: float) -> float:
    """Spectral radius of the closed loop at a single Hessian eigenvalue."""
    return float(np.abs(polynomial_roots(closed_loop_poly(model, gains, lam))).max())


def deadbeat_gains(model: InternalModel, lambda_nominal: float) -> ControllerGains:
    """Gains c_i = d_i / lambda_nominal: closed loop is z^m at the nominal."""
    if lambda_nominal <= 0:
        raise ValueError("nominal eigenvalue must be positive")
    return ControllerGains(
        k_row=model.denominator / lambda_nominal,
        nominal_lambda=float(lambda_nominal),
    )


def _certification_lambdas(lambda_range, grid_points: int) -> np.ndarray:
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if lo <= 0:
        raise ValueError("eigenvalue range must be positive")
    if hi < lo:
        raise ValueError("eigenvalue range is inverted")
    if hi == lo:
        return np.array([lo])
    if grid_points < 2:
        raise ValueError("at least 2 grid points are required")
    # Chebyshev nodes cluster at the ends where the radius is typically
    # worst; the endpoints themselves are appended explicitly.
    j = np.arange(grid_points)
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * j + 1) * np.pi / (2 * grid_points))
    return np.concatenate(([lo, hi], nodes))


def _radii_per_lambda(denominator: np.ndarray, row: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """Closed-loop root modulus at each eigenvalue in a batch."""
    m = denominator.size
    batch = np.zeros((lams.size, m, m))
    if m > 1:
        batch[:, np.arange(m - 1), np.arange(1, m)] = 1.0
    batch[:, -1, :] = -(denominator[None, :] - lams[:, None] * row[None, :])
    return np.abs(np.linalg.eigvals(batch)).max(axis=1)


def _radius_on_grid(denominator: np.ndarray, row: np.ndarray, lams: np.ndarray) -> float:
    """Max closed-loop root modulus over a batch of eigenvalues."""
    return float(_radii_per_lambda(denominator, row, lams).max())


def verify_stability(
    model: InternalModel,
    gains: ControllerGains,
    lambda_range,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> float:
    """Max closed-loop spectral radius over a gridded eigenvalue range."""
    lams = _certification_lambdas(lambda_range, grid_points)
    return _radius_on_grid(model.denominator, gains.effective_row, lams)


def _refined_radius(model, gains, lambda_range, grid_points) -> float:
    """Grid certificate sharpened by a local search around the grid maxima.

    The golden-section polish guards against interior peaks falling
    between grid nodes, so the stored certificate upper-bounds the radius
    seen at arbitrary eigenvalues in the range.
    """
    lams = np.sort(_certification_lambdas(lambda_range, grid_points))
    d, row = model.denominator, gains.effective_row
    per_node = _radii_per_lambda(d, row, lams)
    best = float(per_node.max())
    if lams.size < 3:
        return best

    def at(lam):
        return float(_radii_per_lambda(d, row, np.array([lam]))[0])

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    for idx in np.argsort(per_node)[-3:]:
        a = lams[max(idx - 1, 0)]
        b = lams[min(idx + 1, lams.size - 1)]
        for _ in range(24):
            c = b - invphi * (b - a)
            e = a + invphi * (b - a)
            if at(c) >= at(e):
                b = e
            else:
                a = c
        best = max(best, at(0.5 * (a + b)))
    return best


def _scale_candidates(lambda_nominal: float, lambda_low: float) -> list:
    """Geometric scale grid around 1, ordered by distance from 1.

    Scales below 1 back the gains off for robustness.  Scales above 1 are
    also admitted (capped so the effective nominal eigenvalue stays above
    lambda_low): models with clustered marginal roots are only
    stabilizable with an effective nominal near the bottom of the range,
    which a scale > 1 realizes.  The certificate gates every candidate
    either way.
    """
    down = [0.9**j for j in range(1, 40)]
    cap = lambda_nominal / lambda_low
    up = []
    j = 1
    while 0.9**-j < cap:
        up.append(0.9**-j)
        j += 1
    ordered = [1.0]
    for k in range(max(len(down), len(up))):
        if k < len(down):
            ordered.append(down[k])
        if k < len(up):
            ordered.append(up[k])
    return ordered


def synthesize(
    model: InternalModel,
    lambda_range,
    grid_points: int = DEFAULT_GRID_POINTS,
    margin: float = STABILITY_MARGIN,
) -> ControllerGains:
    """Search placement targets and gain scales for a certified controller.

    Candidates place the nominal closed-loop poles on radial contractions
    of the model poles (contraction 0 at scale 1 is plain deadbeat at the
    range midpoint).  The search scores candidates on a coarse eigenvalue
    grid, then certifies the winner on the full grid with local
    refinement.  Raises SynthesisFailed when nothing achieves a certified
    radius below 1 - margin.
    """
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    nominal = 0.5 * (lo + hi)
    d = model.denominator
    m = model.order
    model_roots = model.roots()
    coarse = _certification_lambdas((lo, hi), min(129, grid_points))
    best_row = None
    best_scale = 1.0
    best_coarse = np.inf
    for gamma in CONTRACTION_GRID:
        target = np.poly(gamma * model_roots)
        if np.abs(target.imag).max() > 1e-9:  # pragma: no cover - conjugate pairing
            continue
        base_row = (d - target.real[1:][::-1]) / nominal
        if not np.any(base_row):
            continue  # target equals the model itself: open loop
        for scale in _scale_candidates(nominal, lo):
            radius = _radius_on_grid(d, scale * base_row, coarse)
            if radius < best_coarse:
                best_coarse = radius
                best_row = base_row
                best_scale = scale
    if best_row is None:
        raise SynthesisFailed("no usable placement target for this model")
    winner = ControllerGains(
        k_row=best_row, nominal_lambda=nominal, gain_scale=best_scale
    )
    certified = _refined_radius(model, winner, (lo, hi), grid_points)
    if certified >= 1.0 - margin:
        raise SynthesisFailed(
            f"no gain row certified stable on [{lo}, {hi}] "
            f"(best spectral radius {certified:.6g})"
        )
    return replace(winner, certified_radius=certified)
