"""The regularized design objective J(xi) = criterion + alpha * penalty.

Criteria measure posterior uncertainty (trace or log-determinant of the
posterior covariance, plus the toy's linear closed form); penalties steer
the active-sensor count.  The memoizing :class:`EvaluationCache` keys
values by the canonical design index so optimization loops never pay for
a design twice, and counts lookups so runs can report how many fresh
evaluations each iteration cost.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from oedpg.bayes import (
    InverseProblem,
    relaxed_precision,
    spd_logdet,
    spd_trace_inverse,
    weighted_precision,
)
from oedpg.bernoulli import DesignVector

__all__ = [
    "Criterion",
    "Penalty",
    "ObjectiveSpec",
    "EvaluationCache",
    "criterion_value",
    "relaxed_criterion_value",
    "penalty_value",
    "evaluate",
    "is_toy_problem",
]


class Criterion(str, Enum):
    A_OPTIMAL = "a_optimal"
    D_OPTIMAL = "d_optimal"
    TOY_CLOSED_FORM = "toy_closed_form"


class Penalty(str, Enum):
    NONE = "none"
    L0 = "l0"
    BUDGET = "budget"


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which criterion to minimize and how activations are penalized."""

    criterion: Criterion = Criterion.A_OPTIMAL
    penalty: Penalty = Penalty.NONE
    alpha: float = 0.0
    budget: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "penalty", Penalty(self.penalty))
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.alpha < 0.0:
            raise ValueError("penalty weight alpha must be nonnegative")
        if self.penalty is Penalty.BUDGET:
            if self.budget is None:
                raise ValueError("budget penalty requires a budget")
            object.__setattr__(self, "budget", int(self.budget))
            if self.budget < 1:
                raise ValueError("budget must be a positive integer")
        elif self.budget is not None:
            raise ValueError("budget only applies to the budget penalty")


_TOY_FORWARD = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]])
_TOY_PRIOR = np.diag([4.0, 1.0, 0.25, 1.0])
_TOY_NOISE = np.diag([0.25, 1.0])


def is_toy_problem(problem: InverseProblem) -> bool:
    """Whether ``problem`` is exactly the built-in 2-sensor toy."""
    return (
        problem.nsens == 2
        and problem.forward.shape == (2, 4)
        and np.array_equal(problem.forward, _TOY_FORWARD)
        and np.array_equal(problem.prior_cov, _TOY_PRIOR)
        and np.array_equal(problem.noise_cov, _TOY_NOISE)
        and problem.mass is None
        and all(
            np.array_equal(rows, [i]) for i, rows in enumerate(problem.sensor_map)
        )
    )


def criterion_value(
    problem: InverseProblem, spec: ObjectiveSpec, design: DesignVector
) -> float:
    """Uncertainty criterion of the design's posterior (no penalty)."""
    if spec.criterion is Criterion.TOY_CLOSED_FORM:
        if not is_toy_problem(problem):
            raise ValueError("toy_closed_form is defined only for the toy problem")
        bits = design.bits
        return float(2.0 * bits[0] + 0.5 * bits[1] + 6.25)
    precision = weighted_precision(problem, design)
    if spec.criterion is Criterion.A_OPTIMAL:
        return spd_trace_inverse(precision)
    return -spd_logdet(precision)


def relaxed_criterion_value(
    problem: InverseProblem, spec: ObjectiveSpec, weights
) -> float:
    """Criterion with fractional sensor weights in place of binary bits.

    Coincides with :func:`criterion_value` at binary weights; used for
    the deterministic objective surface over the policy box.
    """
    if spec.criterion is Criterion.TOY_CLOSED_FORM:
        if not is_toy_problem(problem):
            raise ValueError("toy_closed_form is defined only for the toy problem")
        w = np.asarray(weights, dtype=float)
        return float(2.0 * w[0] + 0.5 * w[1] + 6.25)
    precision = relaxed_precision(problem, weights)
    if spec.criterion is Criterion.A_OPTIMAL:
        return spd_trace_inverse(precision)
    return -spd_logdet(precision)


def penalty_value(spec: ObjectiveSpec, design: DesignVector) -> float:
    """Activation penalty: 0, the active count, or |active - budget|."""
    if spec.penalty is Penalty.NONE:
        return 0.0
    count = design.active_count
    if spec.penalty is Penalty.L0:
        return float(count)
    return float(abs(count - spec.budget))


class EvaluationCache:
    """Memoizes J by design index; first writer wins under contention.

    The expensive criterion part is memoized separately from the final
    J so a :meth:`fork` can reuse criterion values under a different
    penalty.  A cache binds itself to the first objective it serves and
    rejects any other, since the design index alone is the key.
    """

    def __init__(self, _shared_criterion: dict | None = None,
                 _criterion_kind: Criterion | None = None):
        self._lock = threading.Lock()
        self._values: dict[int, float] = {}
        self._criterion = {} if _shared_criterion is None else _shared_criterion
        self._criterion_kind = _criterion_kind
        self._spec: ObjectiveSpec | None = None
        self.hits = 0
        self.misses = 0

    @property
    def new_evaluations(self) -> int:
        """Count of designs computed fresh (equals the cache size)."""
        return self.misses

    @property
    def total_evaluations(self) -> int:
        return self.hits + self.misses

    def __len__(self) -> int:
        return len(self._values)

    def __contains__(self, index: int) -> bool:
        return index in self._values

    def value(self, index: int) -> float:
        return self._values[index]

    def fork(self) -> "EvaluationCache":
        """Fresh cache sharing this one's criterion memo.

        Lets a different penalty (same criterion) skip the dense solves
        already paid for.
        """
        return EvaluationCache(
            _shared_criterion=self._criterion, _criterion_kind=self._criterion_kind
        )

    def _bind(self, spec: ObjectiveSpec) -> None:
        if self._spec is None:
            if self._criterion_kind is not None and self._criterion_kind != spec.criterion:
                raise ValueError(
                    "cache was forked from a different criterion "
                    f"({self._criterion_kind.value} vs {spec.criterion.value})"
                )
            self._spec = spec
            self._criterion_kind = spec.criterion
        elif self._spec != spec:
            raise ValueError("cache is already bound to a different objective")

    def dump(self, path) -> None:
        """Two-column table (index, J) sorted by index, full precision."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "value"])
            for k in sorted(self._values):
                writer.writerow([k, repr(self._values[k])])

    @classmethod
    def load(cls, path) -> "EvaluationCache":
        """Rebuild a cache from :meth:`dump` output (values only)."""
        cache = cls()
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["index", "value"]:
                raise ValueError("not a cache table: expected 'index,value' header")
            for row in reader:
                cache._values[int(row[0])] = float(row[1])
        cache.misses = len(cache._values)
        return cache


def evaluate(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    design: DesignVector,
    cache: EvaluationCache | None = None,
) -> float:
    """J(design) = criterion + alpha * penalty, memoized when given a cache."""
    if cache is None:
        return criterion_value(problem, spec, design) + spec.alpha * penalty_value(
            spec, design
        )
    key = design.index
    with cache._lock:
        cache._bind(spec)
        if key in cache._values:
            cache.hits += 1
            return cache._values[key]
        crit = cache._criterion.get(key)
    if crit is None:
        crit = criterion_value(problem, spec, design)
    value = crit + spec.alpha * penalty_value(spec, design)
    with cache._lock:
        if key in cache._values:
            cache.hits += 1
            return cache._values[key]
        cache._criterion.setdefault(key, crit)
        cache._values[key] = value
        cache.misses += 1
    return value
