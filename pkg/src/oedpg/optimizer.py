"""Projected stochastic gradient descent over the Bernoulli policy.

Each iteration samples an ensemble of designs from the current policy,
scores them through the memoizing objective cache, forms the
score-function gradient estimate (optionally shifted by an empirical or
variance-minimizing baseline), takes a steepest-descent step, and clamps
back onto the unit box.  The run ends on a projected-gradient tolerance
or an iteration cap, after which the final policy is sampled and the best
sampled design returned.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from oedpg._fileio import atomic_write_text, format_float
from oedpg.bayes import InverseProblem
from oedpg.bernoulli import (
    DesignVector,
    PolicyParameter,
    sample_bits,
    score_matrix,
)
from oedpg.enumeration import (
    exact_gradient,
    exact_stochastic_objective,
)
from oedpg.objective import EvaluationCache, ObjectiveSpec, evaluate

__all__ = [
    "BaselineMode",
    "ProjectionMode",
    "StepSchedule",
    "OptimizerConfig",
    "IterationRecord",
    "RunRecord",
    "project",
    "stochastic_gradient",
    "empirical_baseline",
    "optimal_baseline",
    "optimize",
    "write_trace",
    "write_samples",
    "write_summary",
]

# Iterates this close to a bound are snapped onto it before sampling, so
# roundoff-interior components cannot blow up the score.
_SNAP_TOL = 1e-12

# Exact tracking enumerates the whole design space each iteration.
_TRACK_GUARD = 20
_EXACT_STOP_GUARD = 12


class StepSchedule(str, Enum):
    CONSTANT = "constant"
    DECREASING = "decreasing"  # step_size / iteration


class BaselineMode(str, Enum):
    NONE = "none"
    EMPIRICAL = "empirical"
    OPTIMAL = "optimal"


class ProjectionMode(str, Enum):
    TRUNCATION = "truncation"
    METRIC = "metric"


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters of the projected stochastic descent run."""

    theta0: object = 0.5
    step_size: float = 0.25
    step_schedule: StepSchedule = StepSchedule.CONSTANT
    ens_size: int = 32
    baseline: BaselineMode = BaselineMode.NONE
    baseline_batches: int = 10
    final_samples: int = 10
    pgtol: float = 1e-8
    max_iters: int = 20
    seed: int = 0
    projection: ProjectionMode = ProjectionMode.TRUNCATION
    track_exact_objective: bool = False
    exact_stopping: bool = False

    def __post_init__(self):
        object.__setattr__(self, "step_schedule", StepSchedule(self.step_schedule))
        object.__setattr__(self, "baseline", BaselineMode(self.baseline))
        object.__setattr__(self, "projection", ProjectionMode(self.projection))
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.ens_size < 1 or self.baseline_batches < 1 or self.final_samples < 1:
            raise ValueError("ensemble, batch, and sample counts must be >= 1")
        if self.pgtol <= 0.0:
            raise ValueError("pgtol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        if np.any(theta0 < 0.0) or np.any(theta0 > 1.0):
            raise ValueError("theta0 components must lie in [0, 1]")

    def initial_theta(self, nsens: int) -> np.ndarray:
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        if theta0.size == 1:
            return np.full(nsens, float(theta0[0]))
        if theta0.size != nsens:
            raise ValueError(
                f"theta0 has {theta0.size} components, problem has {nsens} sensors"
            )
        return theta0.astype(float).copy()

    def step_at(self, iteration: int) -> float:
        if self.step_schedule is StepSchedule.CONSTANT:
            return self.step_size
        return self.step_size / iteration

    def echo(self) -> dict:
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        return {
            "theta0": [float(t) for t in theta0],
            "step_size": self.step_size,
            "step_schedule": self.step_schedule.value,
            "ens_size": self.ens_size,
            "baseline": self.baseline.value,
            "baseline_batches": self.baseline_batches,
            "final_samples": self.final_samples,
            "pgtol": self.pgtol,
            "max_iters": self.max_iters,
            "seed": self.seed,
            "projection": self.projection.value,
            "track_exact_objective": self.track_exact_objective,
            "exact_stopping": self.exact_stopping,
        }


@dataclass(frozen=True)
class IterationRecord:
    """One optimizer iteration, measured at the pre-update iterate."""

    iteration: int
    theta: np.ndarray
    objective_estimate: float
    exact_objective: float | None
    gradient_norm: float
    new_evaluations: int
    baseline: float


@dataclass
class RunRecord:
    """Everything a finished run produced, ready for serialization."""

    config: OptimizerConfig
    iterations: list[IterationRecord]
    final_theta: np.ndarray
    sampled_bits: np.ndarray
    sampled_values: np.ndarray
    selected: DesignVector
    selected_value: float
    stop_reason: str
    total_evaluations: int
    new_evaluations: int

    @property
    def nsens(self) -> int:
        return self.final_theta.size

    def trace_header(self) -> list[str]:
        theta_cols = [f"theta_{i + 1}" for i in range(self.nsens)]
        return (
            ["n"]
            + theta_cols
            + ["obj_estimate", "exact_obj", "grad_norm", "new_evals", "baseline"]
        )

    def trace_rows(self) -> list[list[str]]:
        rows = []
        for rec in self.iterations:
            rows.append(
                [str(rec.iteration)]
                + [format_float(t) for t in rec.theta]
                + [
                    format_float(rec.objective_estimate),
                    "" if rec.exact_objective is None else format_float(rec.exact_objective),
                    format_float(rec.gradient_norm),
                    str(rec.new_evaluations),
                    format_float(rec.baseline),
                ]
            )
        return rows

    def summary(self) -> dict:
        return {
            "seed": self.config.seed,
            "optimizer": self.config.echo(),
            "stop_reason": self.stop_reason,
            "iterations": len(self.iterations),
            "total_evaluations": self.total_evaluations,
            "new_evaluations": self.new_evaluations,
            "final_theta": [float(t) for t in self.final_theta],
            "selected_design": self.selected.as_string(),
            "selected_index": self.selected.index,
            "selected_active_count": self.selected.active_count,
            "selected_value": float(self.selected_value),
        }


def write_trace(record: RunRecord, path) -> None:
    """Per-iteration CSV trace, written atomically.

    Fields never contain separators, so rows are joined directly; with a
    fixed seed the file is byte-identical across runs.
    """
    lines = [",".join(record.trace_header())]
    lines.extend(",".join(row) for row in record.trace_rows())
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_samples(record: RunRecord, path) -> None:
    """CSV of the designs drawn from the final policy and their J values."""
    lines = ["bits,J"]
    for pos in range(record.sampled_bits.shape[0]):
        design = DesignVector(record.sampled_bits[pos])
        lines.append(f"{design.as_string()},{format_float(record.sampled_values[pos])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary(record: RunRecord, path, extra: dict | None = None) -> None:
    """JSON summary of the run; ``extra`` entries are merged in sorted order."""
    payload = record.summary()
    if extra:
        payload.update(extra)
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def project(theta, mode: ProjectionMode = ProjectionMode.TRUNCATION) -> PolicyParameter:
    """Clamp onto the unit box.

    Truncation and the metric (closest-point) projection coincide on a
    box, so both modes share one formula; the mode argument documents
    intent at call sites.
    """
    ProjectionMode(mode)
    clipped = np.clip(np.atleast_1d(np.asarray(theta, dtype=float)), 0.0, 1.0)
    return PolicyParameter(clipped)


def _bits_matrix(designs) -> np.ndarray:
    if isinstance(designs, np.ndarray):
        return np.atleast_2d(designs)
    return np.stack([d.bits for d in designs])


def stochastic_gradient(
    theta: PolicyParameter, designs, values, baseline: float = 0.0
) -> np.ndarray:
    """Score-function gradient estimate from an evaluated batch.

    Mean over the batch of (J - baseline) times the score; degenerate
    policy components contribute exactly zero.
    """
    bits = _bits_matrix(designs)
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if bits.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    if values.shape != (bits.shape[0],):
        raise ValueError("one J value per design is required")
    scores = score_matrix(bits, theta)
    return ((values - baseline)[:, None] * scores).mean(axis=0)


def empirical_baseline(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    cache: EvaluationCache | None = None,
) -> float:
    """Average of the all-off and all-on objective values."""
    n = problem.nsens
    lo = evaluate(problem, spec, DesignVector(np.zeros(n, dtype=np.int8)), cache)
    hi = evaluate(problem, spec, DesignVector(np.ones(n, dtype=np.int8)), cache)
    return 0.5 * (lo + hi)


def optimal_baseline(
    theta: PolicyParameter,
    ens_size: int,
    batches: int,
    rng: np.random.Generator,
    evaluator,
) -> float:
    """Variance-minimizing baseline estimated from fresh sample batches.

    Per batch, the sample means of J*score and of the score are combined
    as their inner product; the batch average is scaled by the ensemble
    size over the policy's total score variance.  Degenerate components
    carry zero score and are excluded from the variance sum; a fully
    degenerate policy gets baseline 0 (the gradient is zero anyway).
    """
    if ens_size < 1 or batches < 1:
        raise ValueError("ensemble size and batch count must be >= 1")
    interior = theta.is_interior()
    if not np.any(interior):
        return 0.0
    p = theta.probs[interior]
    variance_sum = float(np.sum(1.0 / (p - p * p)))
    acc = 0.0
    for _ in range(batches):
        bits = sample_bits(theta, ens_size, rng)
        scores = score_matrix(bits, theta)
        values = np.array([evaluator(DesignVector(b)) for b in bits])
        score_mean = scores.mean(axis=0)
        weighted_mean = (values[:, None] * scores).mean(axis=0)
        acc += float(weighted_mean @ score_mean)
    return acc * ens_size / (batches * variance_sum)


def _snap(theta: np.ndarray) -> np.ndarray:
    out = theta.copy()
    out[np.abs(out) <= _SNAP_TOL] = 0.0
    out[np.abs(out - 1.0) <= _SNAP_TOL] = 1.0
    return out


def _evaluate_batch(problem, spec, bits, cache, workers) -> np.ndarray:
    values = np.empty(bits.shape[0])

    def fill(chunk: range) -> None:
        for pos in chunk:
            values[pos] = evaluate(problem, spec, DesignVector(bits[pos]), cache)

    if workers <= 1:
        fill(range(bits.shape[0]))
    else:
        step = -(-bits.shape[0] // workers)
        chunks = [
            range(start, min(start + step, bits.shape[0]))
            for start in range(0, bits.shape[0], step)
        ]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))
    return values


def optimize(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    config: OptimizerConfig,
    rng: np.random.Generator | None = None,
    cache: EvaluationCache | None = None,
    workers: int = 1,
) -> RunRecord:
    """Run projected stochastic descent and sample the final policy.

    The returned record carries the full per-iteration trace.  With a
    fixed seed the record is bit-identical across runs; passing a
    pre-warmed cache changes evaluation counters but never values or
    iterates.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if cache is None:
        cache = EvaluationCache()
    nsens = problem.nsens
    theta = _snap(np.clip(config.initial_theta(nsens), 0.0, 1.0))
    if config.track_exact_objective and nsens > _TRACK_GUARD:
        raise ValueError(
            f"exact objective tracking enumerates 2^{nsens} designs; "
            f"allowed only up to {_TRACK_GUARD} sensors"
        )
    if config.exact_stopping and nsens > _EXACT_STOP_GUARD:
        raise ValueError(
            f"exact stopping enumerates 2^{nsens} designs per iteration; "
            f"allowed only up to {_EXACT_STOP_GUARD} sensors"
        )

    def evaluator(design: DesignVector) -> float:
        return evaluate(problem, spec, design, cache)

    # Counters are reported relative to the run start, so a pre-warmed
    # cache changes them without changing any iterate.
    new_at_start = cache.new_evaluations
    total_at_start = cache.total_evaluations
    records: list[IterationRecord] = []
    stop_reason = "max_iters"
    for iteration in range(1, config.max_iters + 1):
        policy = PolicyParameter(theta)
        evals_before = cache.new_evaluations
        bits = sample_bits(policy, config.ens_size, rng)
        values = _evaluate_batch(problem, spec, bits, cache, workers)
        if config.baseline is BaselineMode.NONE:
            baseline = 0.0
        elif config.baseline is BaselineMode.EMPIRICAL:
            baseline = empirical_baseline(problem, spec, cache)
        else:
            baseline = optimal_baseline(
                policy, config.ens_size, config.baseline_batches, rng, evaluator
            )
        gradient = stochastic_gradient(policy, bits, values, baseline)
        exact_objective = None
        if config.track_exact_objective:
            exact_objective = exact_stochastic_objective(
                problem, spec, policy, cache, guard=_TRACK_GUARD
            )
        stopping_gradient = gradient
        if config.exact_stopping:
            stopping_gradient = exact_gradient(
                problem, spec, policy, cache, guard=_EXACT_STOP_GUARD
            )
        eta = config.step_at(iteration)
        pg_magnitude = (
            float(np.linalg.norm(np.clip(theta - stopping_gradient, 0.0, 1.0) - theta))
            / eta
        )
        theta = _snap(np.clip(theta - eta * gradient, 0.0, 1.0))
        records.append(
            IterationRecord(
                iteration=iteration,
                theta=policy.probs,
                objective_estimate=float(values.mean()),
                exact_objective=exact_objective,
                gradient_norm=float(np.linalg.norm(gradient)),
                new_evaluations=cache.new_evaluations - evals_before,
                baseline=baseline,
            )
        )
        if pg_magnitude <= config.pgtol:
            stop_reason = "pgtol"
            break

    final_policy = PolicyParameter(theta)
    final_bits = sample_bits(final_policy, config.final_samples, rng)
    final_values = _evaluate_batch(problem, spec, final_bits, cache, workers)
    best_pos = 0
    best_key = (final_values[0], DesignVector(final_bits[0]).index)
    for pos in range(1, final_bits.shape[0]):
        key = (final_values[pos], DesignVector(final_bits[pos]).index)
        if key < best_key:
            best_key = key
            best_pos = pos
    selected = DesignVector(final_bits[best_pos])
    return RunRecord(
        config=config,
        iterations=records,
        final_theta=theta,
        sampled_bits=final_bits,
        sampled_values=final_values,
        selected=selected,
        selected_value=float(final_values[best_pos]),
        stop_reason=stop_reason,
        total_evaluations=cache.total_evaluations - total_at_start,
        new_evaluations=cache.new_evaluations - new_at_start,
    )
