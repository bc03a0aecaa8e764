"""Deterministic self-checks behind the `mgopt verify` subcommand.

A fast subset of the package's correctness contracts, each verified
against an independent reference computation: finite-time settling of
the deadbeat controller, exact sinusoid tracking with the matching
model, RLS against batch least squares, the box-QP oracle against
active-set enumeration, and byte-stable trace exports.
"""

import itertools
import json
from dataclasses import dataclass, replace

import numpy as np

from .harness import (
    ExperimentConfig,
    run_experiment,
    trace_to_csv,
    trace_to_json_dict,
)
from .internal_model import companion_realization, model_sinusoid, model_step
from .oracle import solve_box_qp
from .problem import BoxSet, ScenarioConfig
from .rls import Regressor, initial_rls_state, rls_update
from .solvers import cb_step, initial_state
from .synthesis import deadbeat_gains


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name, passed, detail=""):
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def reference_box_qp(A, b, lower, upper):
    """Exhaustive active-set solve: try every bound pattern.

    For each assignment of coordinates to {free, at lower, at upper}
    solve the reduced system and keep the pattern that is primal and dual
    feasible.  Exact up to the linear solve; tractable for small n.
    """
    n = b.size
    for pattern in itertools.product((0, 1, 2), repeat=n):
        free = [i for i, p in enumerate(pattern) if p == 0]
        x = np.where(np.asarray(pattern) == 1, lower, upper).astype(float)
        if free:
            f = np.asarray(free)
            fixed = np.asarray([i for i in range(n) if i not in free], dtype=int)
            rhs = -b[f]
            if fixed.size:
                rhs = rhs - A[np.ix_(f, fixed)] @ x[fixed]
            x[f] = np.linalg.solve(A[np.ix_(f, f)], rhs)
            if np.any(x[f] < lower[f] - 1e-9) or np.any(x[f] > upper[f] + 1e-9):
                continue
        g = A @ x + b
        ok = True
        for i, p in enumerate(pattern):
            if p == 1 and g[i] < -1e-9:
                ok = False
            elif p == 2 and g[i] > 1e-9:
                ok = False
        if ok:
            return np.clip(x, lower, upper)
    raise RuntimeError("no bound pattern was feasible")  # pragma: no cover


def check_deadbeat_settling() -> CheckResult:
    lam, b = 2.5, 1.7
    model = model_step()
    realization = companion_realization(model)
    gains = deadbeat_gains(model, lam)
    state = initial_state(1, order=1)
    errors = []
    for _ in range(40):
        g = lam * state.x_feasible + b
        state = cb_step(state, g, realization, gains)
        errors.append(abs(state.x_feasible[0] - (-b / lam)))
    worst = max(errors[2:])
    return _check("deadbeat finite-time settling", worst <= 1e-10, f"max error {worst:.3g}")


def check_sinusoid_tracking() -> CheckResult:
    lam, omega, n = 3.0, 0.1, 3
    rng = np.random.default_rng(7)
    v = rng.standard_normal(n)
    model = model_sinusoid(omega)
    realization = companion_realization(model)
    gains = deadbeat_gains(model, lam)
    state = initial_state(n, order=2)
    worst = 0.0
    for k in range(2000):
        b = np.sin(omega * k) * v
        g = lam * state.x_feasible + b
        state = cb_step(state, g, realization, gains)
        if k >= 50:
            worst = max(worst, float(np.linalg.norm(state.x_feasible - (-b / lam))))
    return _check("sinusoid exact-model tracking", worst <= 1e-8, f"max error {worst:.3g}")


def check_rls_batch_equivalence() -> CheckResult:
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        m, N = 3, 60
        d_true = rng.standard_normal(m)
        phis = rng.standard_normal((N, m))
        targets = phis @ d_true + 0.01 * rng.standard_normal(N)
        state = initial_rls_state(m, alpha=1.0, p0=1e8)
        for phi, y in zip(phis, targets):
            state, _ = rls_update(state, Regressor(phi=phi, target=float(y)))
        batch, *_ = np.linalg.lstsq(phis, targets, rcond=None)
        worst = max(worst, float(np.abs(state.d_hat - batch).max()))
    return _check("RLS matches batch least squares", worst <= 1e-8, f"max deviation {worst:.3g}")


def check_boxqp_oracle() -> CheckResult:
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = 6
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = q @ np.diag(rng.uniform(0.5, 8.0, n)) @ q.T
        A = 0.5 * (A + A.T)
        b = 3.0 * rng.standard_normal(n)
        lower = rng.uniform(-2.0, 0.0, n)
        upper = lower + rng.uniform(0.5, 3.0, n)
        sol = solve_box_qp(A, b, BoxSet(lower, upper), tol=1e-12)
        ref = reference_box_qp(A, b, lower, upper)
        worst = max(worst, float(np.abs(sol.x_star - ref).max()))
    return _check("box QP matches active-set enumeration", worst <= 1e-8, f"max deviation {worst:.3g}")


def check_export_determinism() -> CheckResult:
    config = ExperimentConfig(scenario=ScenarioConfig(horizon=300), seed=3)
    first = run_experiment(config)
    second = run_experiment(config)
    same_csv = trace_to_csv(first) == trace_to_csv(second)
    js = lambda t: json.dumps(trace_to_json_dict(t), sort_keys=True)
    same_json = js(first) == js(second)
    return _check(
        "byte-identical repeated exports",
        same_csv and same_json,
        f"csv={'ok' if same_csv else 'DIFF'} json={'ok' if same_json else 'DIFF'}",
    )


ALL_CHECKS = (
    check_deadbeat_settling,
    check_sinusoid_tracking,
    check_rls_batch_equivalence,
    check_boxqp_oracle,
    check_export_determinism,
)


def run_all_checks():
    return [check() for check in ALL_CHECKS]
