"""Discrete-time signal models and their companion-form realizations.

A model is the monic denominator polynomial of the rational Z-transform of
a signal class,

    B(z) = z^m + d[m-1] z^(m-1) + ... + d[1] z + d[0],

stored as the coefficient vector ``d`` in ascending powers (the leading 1
is implicit).  The roots of B generate the signal class: z = 1 generates
constants, a unit-circle conjugate pair generates a sinusoid, and so on.
All models must have roots inside or on the unit circle (up to a small
tolerance), i.e. be marginally or asymptotically stable.
"""

from dataclasses import dataclass, field

import numpy as np

# Root modulus may exceed 1 by at most this much before a model is rejected.
POLE_TOL = 1e-9

# Two roots closer than this are treated as equal when combining models.
ROOT_MATCH_TOL = 1e-7

LABEL_ASYMPTOTIC = "asymptotically stable"
LABEL_MARGINAL = "marginally stable"
LABEL_UNSTABLE = "unstable"


class UnstableModelError(ValueError):
    """Raised when a denominator has roots outside the unit circle."""


def polynomial_roots(denominator) -> np.ndarray:
    """Roots of z^m + sum_i d[i] z^i via the companion-eigenvalue method."""
    d = np.asarray(denominator, dtype=float)
    if d.ndim != 1 or d.size < 1:
        raise ValueError("denominator must be a non-empty 1-D coefficient vector")
    # np.roots expects descending powers with the leading coefficient first.
    try:
        return np.roots(np.concatenate(([1.0], d[::-1])))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigensolver failure
        raise RuntimeError(f"root finding did not converge for d={d!r}: {exc}") from exc


@dataclass(frozen=True)
class InternalModel:
    """Monic denominator of a signal model, coefficients in ascending powers."""

    denominator: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.denominator, dtype=float)).copy()
        if d.ndim != 1 or d.size < 1:
            raise ValueError("model order must be at least 1")
        if not np.all(np.isfinite(d)):
            raise ValueError("denominator coefficients must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "denominator", d)
        moduli = np.abs(self.roots())
        if np.any(moduli > 1.0 + POLE_TOL):
            raise UnstableModelError(
                f"model has poles outside the unit circle (max modulus {moduli.max():.12g})"
            )

    @property
    def order(self) -> int:
        return self.denominator.size

    def roots(self) -> np.ndarray:
        return polynomial_roots(self.denominator)

    def __eq__(self, other):
        if not isinstance(other, InternalModel):
            return NotImplemented
        return np.array_equal(self.denominator, other.denominator)

    def __hash__(self):
        return hash(self.denominator.tobytes())


@dataclass(frozen=True)
class CompanionRealization:
    """State-space pair (F, G) whose characteristic polynomial is the model."""

    f_matrix: np.ndarray
    g_vector: np.ndarray

    @property
    def order(self) -> int:
        return self.g_vector.size


def companion_realization(model: InternalModel) -> CompanionRealization:
    """Companion form: ones on the superdiagonal, last row = -d, G = e_m."""
    m = model.order
    f = np.zeros((m, m))
    if m > 1:
        f[np.arange(m - 1), np.arange(1, m)] = 1.0
    f[-1, :] = -model.denominator
    g = np.zeros(m)
    g[-1] = 1.0
    f.setflags(write=False)
    g.setflags(write=False)
    return CompanionRealization(f_matrix=f, g_vector=g)


def model_step() -> InternalModel:
    """Model of constant signals: B(z) = z - 1."""
    return InternalModel(np.array([-1.0]))


def model_ramp() -> InternalModel:
    """Model of affine-in-time signals: B(z) = (z - 1)^2."""
    return InternalModel(np.array([1.0, -2.0]))


def model_sinusoid(omega: float) -> InternalModel:
    """Model of sinusoids at `omega` rad/step: B(z) = z^2 - 2 cos(omega) z + 1."""
    if not 0.0 < omega < np.pi:
        raise ValueError(f"sinusoid frequency must lie in (0, pi), got {omega}")
    return InternalModel(np.array([1.0, -2.0 * np.cos(omega)]))


def model_sin_squared(omega0: float) -> InternalModel:
    """Model of sin^2(omega0 * k): B(z) = (z - 1)(z^2 - 2 cos(2 omega0) z + 1).

    A squared sinusoid is a constant plus a sinusoid at twice the base
    frequency, hence the pole at 1 and the conjugate pair at e^{+-2i omega0}.
    Values of `omega0` for which the pair collapses onto +-1 (repeated
    unit-circle poles) are rejected.
    """
    c = np.cos(2.0 * omega0)
    # c = +-1 means 2*omega0 is a multiple of pi: poles collide at z = +-1.
    if min(abs(c - 1.0), abs(c + 1.0)) < 1e-12:
        raise ValueError(
            f"omega0={omega0} produces repeated unit-circle poles; model is degenerate"
        )
    return InternalModel(np.array([-1.0, 1.0 + 2.0 * c, -1.0 - 2.0 * c]))


def combine_models(a: InternalModel, b: InternalModel, max_order: int = 12) -> InternalModel:
    """Least common multiple of two models: shared roots enter once.

    Roots of `b` within ROOT_MATCH_TOL of a (not yet matched) root of `a`
    are treated as shared; everything else multiplies in.  The result
    covers any signal that either input covers.
    """
    roots_a = list(a.roots())
    roots_b = list(b.roots())
    unmatched = list(roots_a)
    extra = []
    for r in roots_b:
        if unmatched:
            dist = [abs(r - u) for u in unmatched]
            j = int(np.argmin(dist))
            if dist[j] <= ROOT_MATCH_TOL:
                del unmatched[j]
                continue
        extra.append(r)
    combined = np.asarray(roots_a + extra)
    if combined.size > max_order:
        raise ValueError(
            f"combined model order {combined.size} exceeds the cap {max_order}"
        )
    coeffs = np.poly(combined)  # descending powers, monic
    if np.abs(coeffs.imag).max() > 1e-9:
        raise RuntimeError("combined polynomial is not real; root pairing failed")
    d = coeffs.real[1:][::-1]
    return InternalModel(d)


@dataclass(frozen=True)
class PoleInfo:
    root: complex
    modulus: float
    label: str

    def as_dict(self) -> dict:
        return {
            "root_real": float(self.root.real),
            "root_imag": float(self.root.imag),
            "modulus": self.modulus,
            "label": self.label,
        }


@dataclass(frozen=True)
class PoleReport:
    poles: tuple

    def labels(self):
        return [p.label for p in self.poles]

    def has_unstable(self) -> bool:
        return any(p.label == LABEL_UNSTABLE for p in self.poles)

    def as_dicts(self):
        return [p.as_dict() for p in self.poles]

    def to_text(self) -> str:
        lines = ["root, modulus, class"]
        for p in self.poles:
            lines.append(f"{p.root.real:+.12g}{p.root.imag:+.12g}j, {p.modulus:.12g}, {p.label}")
        return "\n".join(lines)


def classify_poles(model: InternalModel) -> PoleReport:
    """Root set of the model with a stability class per root.

    Roots with modulus within POLE_TOL of 1 are marginal; strictly inside
    is asymptotically stable; outside is unstable.
    """
    infos = []
    # Deterministic ordering: by modulus, then angle.
    roots = sorted(model.roots(), key=lambda r: (abs(r), np.angle(r)))
    for r in roots:
        rho = abs(r)
        if abs(rho - 1.0) <= POLE_TOL:
            label = LABEL_MARGINAL
        elif rho < 1.0:
            label = LABEL_ASYMPTOTIC
        else:
            label = LABEL_UNSTABLE
        infos.append(PoleInfo(root=complex(r), modulus=float(rho), label=label))
    return PoleReport(poles=tuple(infos))


def model_from_config(spec) -> InternalModel:
    """Build a model from a config entry.

    Accepts either a coefficient list (ascending powers, leading 1 implicit)
    or a mapping with a `kind` key: step, ramp, sinusoid (omega),
    sin_squared (omega0), or denominator.
    """
    if isinstance(spec, InternalModel):
        return spec
    if isinstance(spec, (list, tuple, np.ndarray)):
        return InternalModel(np.asarray(spec, dtype=float))
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "step":
            return model_step()
        if kind == "ramp":
            return model_ramp()
        if kind == "sinusoid":
            return model_sinusoid(float(spec["omega"]))
        if kind == "sin_squared":
            return model_sin_squared(float(spec["omega0"]))
        if kind == "denominator" or "denominator" in spec:
            return InternalModel(np.asarray(spec["denominator"], dtype=float))
        raise ValueError(f"unknown model kind {kind!r}")
    raise ValueError(f"cannot build a model from {spec!r}")
