"""Experiment runner: benchmark scenarios, algorithms, traces and exports.

An experiment evaluates one shared scenario (same linear-term stream,
same boxes, same oracle solutions) against a list of algorithms, records
per-step tracking errors against the exact minimizer, and exports
plot-ready CSV plus a full structured JSON trace.  Everything is a pure
function of (config, seed): repeated runs produce byte-identical files.
"""

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import _kernels
from .internal_model import model_from_config, model_sin_squared, companion_realization
from .oracle import IterationLimitError
from .problem import (
    BoxSet,
    ConfigError,
    Scenario,
    ScenarioConfig,
    linear_term,
    make_microgrid_scenario,
    problem_from_scenario,
)
from .solvers import default_pogd_stepsize
from .supervisor import SupervisorConfig, new_supervisor, simbo_step
from .synthesis import synthesize

DEFAULT_ORACLE_TOL = 1e-10
DEFAULT_ORACLE_MAX_ITER = 10**6
STEADY_WINDOW = 500

ALGORITHM_KINDS = ("pogd", "cb", "pcb", "pcbw", "simbo")

CSV_FORMAT = "csv"
JSON_FORMAT = "json"


class RunError(RuntimeError):
    """Experiment execution failed; the message carries the step index."""


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm entry of the experiment configuration."""

    name: str
    kind: str
    h: float | None = None  # pogd stepsize; default 2/(l_low+l_high)
    rho: float = 1.0  # anti-windup weight for pcbw
    model: object = None  # model spec for the cb family

    def __post_init__(self):
        if self.kind not in ALGORITHM_KINDS:
            raise ConfigError(f"unknown algorithm kind {self.kind!r}")
        if self.rho < 0:
            raise ConfigError("anti-windup weight must be nonnegative")

    @classmethod
    def from_mapping(cls, data: dict) -> "AlgorithmSpec":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind is None:
            raise ConfigError("algorithm entry needs a 'kind'")
        name = data.pop("name", kind)
        kwargs = {}
        if "h" in data:
            value = data.pop("h")
            kwargs["h"] = None if value is None else float(value)
        if "rho" in data:
            kwargs["rho"] = float(data.pop("rho"))
        if "model" in data:
            kwargs["model"] = data.pop("model")
        if data:
            raise ConfigError(f"unknown algorithm keys: {sorted(data)}")
        return cls(name=str(name), kind=str(kind), **kwargs)


def default_benchmark_algorithms() -> tuple:
    """POGD baseline, PCBW with the fixed squared-sine model, and P-SIMBO."""
    return (
        AlgorithmSpec(name="pogd", kind="pogd"),
        AlgorithmSpec(
            name="pcbw", kind="pcbw", rho=1.0, model={"kind": "sin_squared", "omega0": 10.0}
        ),
        AlgorithmSpec(name="p-simbo", kind="simbo"),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    algorithms: tuple = field(default_factory=default_benchmark_algorithms)
    seed: int = 0
    oracle_tol: float = DEFAULT_ORACLE_TOL
    oracle_max_iter: int = DEFAULT_ORACLE_MAX_ITER
    output_dir: str = "results"
    output_formats: tuple = (CSV_FORMAT, JSON_FORMAT)

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if self.oracle_tol <= 0:
            raise ConfigError("oracle tolerance must be positive")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ConfigError("algorithm names must be unique")
        for fmt in self.output_formats:
            if fmt not in (CSV_FORMAT, JSON_FORMAT):
                raise ConfigError(f"unknown output format {fmt!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "oracle": {"tol": self.oracle_tol, "max_iter": self.oracle_max_iter},
            "scenario": {
                "n": self.scenario.n,
                "y_dim": self.scenario.y_dim,
                "w_dim": self.scenario.w_dim,
                "horizon": self.scenario.horizon,
                "beta": self.scenario.beta,
                "load_omega": self.scenario.load_omega,
                "reference": {
                    "period": self.scenario.ref_period,
                    "amplitude": self.scenario.ref_amplitude,
                    "offset": list(self.scenario.ref_offset),
                },
                "box": {
                    "lower": list(self.scenario.box_lower),
                    "upper": list(self.scenario.box_upper),
                },
                "lambda_low": self.scenario.lambda_low,
                "lambda_high": self.scenario.lambda_high,
            },
            "supervisor": {
                "model_order": self.supervisor.model_order,
                "settle_window": self.supervisor.settle_window,
                "settle_rel_tol": self.supervisor.settle_rel_tol,
                "min_phase1_steps": self.supervisor.resolved_min_phase1(),
                "fallback_error_factor": self.supervisor.fallback_error_factor,
                "resynth_cooldown": self.supervisor.resynth_cooldown,
                "anti_windup": self.supervisor.anti_windup_enabled,
                "rho": self.supervisor.rho,
                "rls": {"alpha": self.supervisor.rls_alpha, "p0": self.supervisor.rls_p0},
            },
            "algorithms": [
                {
                    "name": a.name,
                    "kind": a.kind,
                    "h": a.h,
                    "rho": a.rho,
                    "model": a.model if not isinstance(a.model, np.ndarray) else a.model.tolist(),
                }
                for a in self.algorithms
            ],
        }


def experiment_config_from_mapping(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    kwargs = {}
    if "scenario" in data:
        kwargs["scenario"] = ScenarioConfig.from_mapping(data.pop("scenario"))
    if "supervisor" in data:
        try:
            kwargs["supervisor"] = SupervisorConfig.from_mapping(data.pop("supervisor"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad supervisor section: {exc}") from exc
    if "algorithms" in data:
        entries = data.pop("algorithms")
        if not isinstance(entries, list) or not entries:
            raise ConfigError("'algorithms' must be a non-empty list")
        kwargs["algorithms"] = tuple(AlgorithmSpec.from_mapping(e) for e in entries)
    if "seed" in data:
        kwargs["seed"] = int(data.pop("seed"))
    oracle_section = data.pop("oracle", None)
    if oracle_section:
        if "tol" in oracle_section:
            kwargs["oracle_tol"] = float(oracle_section["tol"])
        if "max_iter" in oracle_section:
            kwargs["oracle_max_iter"] = int(oracle_section["max_iter"])
    output = data.pop("output", None)
    if output:
        if "dir" in output:
            kwargs["output_dir"] = str(output["dir"])
        if "formats" in output:
            kwargs["output_formats"] = tuple(output["formats"])
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    return ExperimentConfig(**kwargs)


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    return experiment_config_from_mapping(data)


@dataclass
class AlgorithmTrace:
    name: str
    kind: str
    x: np.ndarray  # (T, n) feasible iterates
    tracking_error: np.ndarray  # (T,)
    cumulative_error: np.ndarray  # (T,)
    x_raw: np.ndarray | None = None
    phases: list | None = None  # per-step supervisor phase
    events: list | None = None  # event dicts, supervisor only
    d_hat: np.ndarray | None = None  # (T, m) estimate snapshots
    controllers: list | None = None  # installed controller records


@dataclass
class Trace:
    config: dict
    x_star: np.ndarray  # (T, n)
    algorithms: list  # list[AlgorithmTrace], config order
    b_checksum: str
    scenario: dict | None = None
    oracle_stats: dict | None = None

    @property
    def horizon(self) -> int:
        return self.x_star.shape[0]

    def algorithm(self, name: str) -> AlgorithmTrace:
        for alg in self.algorithms:
            if alg.name == name:
                return alg
        raise KeyError(name)


def _schedule_arrays(scenario: Scenario):
    T, n = scenario.horizon, scenario.n
    B = np.empty((T, n))
    lower = np.empty((T, n))
    upper = np.empty((T, n))
    for k in range(T):
        B[k] = linear_term(scenario, k)
        box = scenario.box_at(k)
        lower[k] = box.lower
        upper[k] = box.upper
    return B, lower, upper


def _oracle_solutions(A, B, lower, upper, tol, max_iter):
    eigs = np.linalg.eigvalsh(A)
    step = 2.0 / (eigs[0] + eigs[-1])
    X, residuals, iterations = _kernels.boxqp_track(
        A, B, lower, upper, np.zeros(B.shape[1]), step, tol, max_iter
    )
    bad = np.nonzero(residuals > tol)[0]
    if bad.size:
        k = int(bad[0])
        raise RunError(
            f"oracle failed at step {k}: residual {residuals[k]:.3g} after "
            f"{iterations[k]} iterations"
        ) from IterationLimitError(float(residuals[k]), int(iterations[k]))
    return X, {
        "max_residual": float(residuals.max()),
        "total_iterations": int(iterations.sum()),
        "step": step,
    }


def _run_pogd(spec, problem, B, lower, upper):
    h = spec.h if spec.h is not None else default_pogd_stepsize(problem.spectral_bounds)
    if not 0 < h < 2.0 / problem.spectral_bounds[1]:
        raise ConfigError(f"pogd stepsize {h} must lie in (0, 2/{problem.spectral_bounds[1]})")
    x0 = np.clip(np.zeros(problem.dim), lower[0], upper[0])
    X = _kernels.pogd_run(problem.hessian, B, lower, upper, x0, h)
    return X, None, None


def _run_cb_family(spec, problem, B, lower, upper):
    model_spec = spec.model if spec.model is not None else {"kind": "sin_squared", "omega0": 10.0}
    model = model_from_config(model_spec)
    realization = companion_realization(model)
    gains = synthesize(model, problem.spectral_bounds)
    rho = spec.rho if spec.kind == "pcbw" else 0.0
    project = spec.kind != "cb"
    x0 = np.zeros(problem.dim)
    W0 = np.zeros((model.order, problem.dim))
    X_raw, X_feas, _ = _kernels.cb_run(
        realization.f_matrix,
        realization.g_vector,
        gains.effective_row,
        problem.hessian,
        B,
        lower,
        upper,
        x0,
        W0,
        rho,
        project,
    )
    return X_feas, X_raw, [(0, gains.as_dict())]


def _run_simbo(spec, problem, supervisor_config, horizon):
    sup = new_supervisor(supervisor_config, problem)
    n = problem.dim
    X = np.empty((horizon, n))
    phases = []
    d_hat = np.empty((horizon, supervisor_config.model_order))
    for k in range(horizon):
        try:
            sup, x = simbo_step(sup, problem, k)
        except Exception as exc:  # pragma: no cover - defensive context
            raise RunError(f"supervisor failed at step {k}: {exc}") from exc
        X[k] = x
        phases.append(sup.phase.value)
        d_hat[k] = sup.rls_state.d_hat
    events = [e.as_dict() for e in sup.event_log]
    return X, phases, events, d_hat, list(sup.controller_history)


def run_experiment(config: ExperimentConfig) -> Trace:
    """Run every configured algorithm against the shared scenario and oracle."""
    scenario = make_microgrid_scenario(config.scenario, config.seed)
    problem = problem_from_scenario(scenario)
    B, lower, upper = _schedule_arrays(scenario)
    checksum = hashlib.sha256(B.tobytes()).hexdigest()
    x_star, oracle_stats = _oracle_solutions(
        problem.hessian, B, lower, upper, config.oracle_tol, config.oracle_max_iter
    )

    traces = []
    for spec in config.algorithms:
        phases = events = d_hat = controllers = x_raw = None
        if spec.kind == "pogd":
            X, x_raw, controllers = _run_pogd(spec, problem, B, lower, upper)
        elif spec.kind in ("cb", "pcb", "pcbw"):
            X, x_raw, controllers = _run_cb_family(spec, problem, B, lower, upper)
        else:
            X, phases, events, d_hat, controllers = _run_simbo(
                spec, problem, config.supervisor, scenario.horizon
            )
        err = np.linalg.norm(X - x_star, axis=1)
        traces.append(
            AlgorithmTrace(
                name=spec.name,
                kind=spec.kind,
                x=X,
                tracking_error=err,
                cumulative_error=np.cumsum(err),
                x_raw=x_raw,
                phases=phases,
                events=events,
                d_hat=d_hat,
                controllers=controllers,
            )
        )

    if hashlib.sha256(B.tobytes()).hexdigest() != checksum:
        raise RunError("shared linear-term stream was mutated during the run")
    return Trace(
        config=config.to_dict(),
        x_star=x_star,
        algorithms=traces,
        b_checksum=checksum,
        scenario=scenario.to_dict(),
        oracle_stats=oracle_stats,
    )


# ---------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True)
class AlgorithmSummary:
    name: str
    kind: str
    final_cumulative_error: float
    steady_median_error: float
    steady_window: int
    phase_switch_steps: tuple = ()
    first_structured_step: int | None = None


def best_steady_median(errors: np.ndarray, window: int = STEADY_WINDOW) -> float:
    """Smallest median tracking error over any contiguous window."""
    w = int(min(window, errors.size))
    if w < 1:
        raise ValueError("empty error sequence")
    views = np.lib.stride_tricks.sliding_window_view(errors, w)
    return float(np.median(views, axis=1).min())


def summarize(trace: Trace, steady_window: int = STEADY_WINDOW) -> list:
    """Per-algorithm summary rows, in trace order."""
    if trace.horizon < 1:
        raise ValueError("empty trace")
    rows = []
    for alg in trace.algorithms:
        switches = tuple(
            e["step"]
            for e in (alg.events or [])
            if e["kind"] in ("phase_change", "resynthesis")
        )
        first_structured = next(
            (
                e["step"]
                for e in (alg.events or [])
                if e["kind"] == "phase_change" and "->structured" in e["detail"]
            ),
            None,
        )
        rows.append(
            AlgorithmSummary(
                name=alg.name,
                kind=alg.kind,
                final_cumulative_error=float(alg.cumulative_error[-1]),
                steady_median_error=best_steady_median(alg.tracking_error, steady_window),
                steady_window=int(min(steady_window, trace.horizon)),
                phase_switch_steps=switches,
                first_structured_step=first_structured,
            )
        )
    return rows


def summary_to_text(rows) -> str:
    lines = [
        f"{'algorithm':<14} {'kind':<6} {'final cum. error':>18} {'steady median':>14}  phase switches"
    ]
    for r in rows:
        switches = ",".join(str(s) for s in r.phase_switch_steps) or "-"
        lines.append(
            f"{r.name:<14} {r.kind:<6} {r.final_cumulative_error:>18.6e} "
            f"{r.steady_median_error:>14.3e}  {switches}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Exports


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def trace_to_csv(trace: Trace) -> str:
    """Plot-ready CSV: k, alg, x_1.., xstar_1.., err, cum_err, phase."""
    n = trace.x_star.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (
        ["k", "alg"]
        + [f"x_{i + 1}" for i in range(n)]
        + [f"xstar_{i + 1}" for i in range(n)]
        + ["err", "cum_err", "phase"]
    )
    writer.writerow(header)
    for alg in trace.algorithms:
        phases = alg.phases if alg.phases is not None else ["-"] * trace.horizon
        for k in range(trace.horizon):
            writer.writerow(
                [k, alg.name]
                + [_fmt(v) for v in alg.x[k]]
                + [_fmt(v) for v in trace.x_star[k]]
                + [_fmt(alg.tracking_error[k]), _fmt(alg.cumulative_error[k]), phases[k]]
            )
    return buf.getvalue()


def trace_to_json_dict(trace: Trace) -> dict:
    algs = {}
    for alg in trace.algorithms:
        entry = {
            "kind": alg.kind,
            "x": alg.x.tolist(),
            "tracking_error": alg.tracking_error.tolist(),
            "cumulative_error": alg.cumulative_error.tolist(),
        }
        if alg.phases is not None:
            entry["phases"] = list(alg.phases)
        if alg.events is not None:
            entry["events"] = alg.events
        if alg.d_hat is not None:
            entry["d_hat"] = alg.d_hat.tolist()
        if alg.controllers is not None:
            entry["controllers"] = [[int(step), dict(g)] for step, g in alg.controllers]
        algs[alg.name] = entry
    return {
        "schema": "mgopt.trace.v1",
        "config": trace.config,
        "order": [a.name for a in trace.algorithms],
        "x_star": trace.x_star.tolist(),
        "algorithms": algs,
        "b_checksum": trace.b_checksum,
        "scenario": trace.scenario,
        "oracle_stats": trace.oracle_stats,
    }


def trace_from_json_dict(data: dict) -> Trace:
    algs = []
    for name in data["order"]:
        entry = data["algorithms"][name]
        err = np.asarray(entry["tracking_error"], dtype=float)
        algs.append(
            AlgorithmTrace(
                name=name,
                kind=entry["kind"],
                x=np.asarray(entry["x"], dtype=float),
                tracking_error=err,
                cumulative_error=np.asarray(entry["cumulative_error"], dtype=float),
                phases=entry.get("phases"),
                events=entry.get("events"),
                d_hat=np.asarray(entry["d_hat"], dtype=float) if "d_hat" in entry else None,
                controllers=entry.get("controllers"),
            )
        )
    return Trace(
        config=data.get("config", {}),
        x_star=np.asarray(data["x_star"], dtype=float),
        algorithms=algs,
        b_checksum=data.get("b_checksum", ""),
        scenario=data.get("scenario"),
        oracle_stats=data.get("oracle_stats"),
    )


def export_trace(trace: Trace, path, fmt: str = CSV_FORMAT):
    """Write the trace to `path`; bit-stable for a fixed trace."""
    if fmt == CSV_FORMAT:
        payload = trace_to_csv(trace)
    elif fmt == JSON_FORMAT:
        payload = json.dumps(trace_to_json_dict(trace), sort_keys=True, separators=(",", ":"))
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write(payload)
    return path


def load_trace_csv(path) -> dict:
    """Parse an exported CSV back into per-algorithm arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = sum(1 for c in header if c.startswith("x_") and not c.startswith("xstar"))
        out = {}
        for row in reader:
            rec = out.setdefault(
                row[1], {"k": [], "x": [], "x_star": [], "err": [], "cum_err": [], "phase": []}
            )
            rec["k"].append(int(row[0]))
            rec["x"].append([float(v) for v in row[2 : 2 + n]])
            rec["x_star"].append([float(v) for v in row[2 + n : 2 + 2 * n]])
            rec["err"].append(float(row[2 + 2 * n]))
            rec["cum_err"].append(float(row[3 + 2 * n]))
            rec["phase"].append(row[4 + 2 * n])
    for rec in out.values():
        for key in ("x", "x_star", "err", "cum_err"):
            rec[key] = np.asarray(rec[key])
    return out


def load_trace_json(path) -> Trace:
    with open(path) as fh:
        return trace_from_json_dict(json.load(fh))
