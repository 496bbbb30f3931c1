"""Exact ground truth by exhaustive enumeration of the design space.

For small sensor counts every design can be evaluated, which turns the
stochastic objective, its gradient, and its Hessian entries into finite
sums that validate all estimators.  A guard refuses anything beyond the
configured sensor count rather than silently approximating; exactness is
the whole point of this module.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from oedpg.bayes import InverseProblem
from oedpg.bernoulli import DesignVector, PolicyParameter
from oedpg.objective import EvaluationCache, ObjectiveSpec, evaluate

__all__ = [
    "DEFAULT_GUARD",
    "EnumerationGuardError",
    "EnumerationResult",
    "all_design_bits",
    "brute_force",
    "exact_stochastic_objective",
    "exact_gradient",
    "exact_hessian_entry",
    "expectation_from_table",
    "gradient_from_table",
    "hessian_entry_from_table",
]

# 2^20 evaluations is the largest enumeration considered sane here.
DEFAULT_GUARD = 20


class EnumerationGuardError(RuntimeError):
    """Raised when an enumeration would exceed the sensor-count guard."""


def _check_guard(nsens: int, guard: int) -> None:
    if nsens > guard:
        raise EnumerationGuardError(
            f"enumeration over 2^{nsens} designs exceeds the guard of {guard} sensors"
        )


def all_design_bits(nsens: int) -> np.ndarray:
    """All designs as a (2^nsens, nsens) bit matrix, row k-1 = index k."""
    ks = np.arange(1 << nsens, dtype=np.int64)
    return ((ks[:, None] >> np.arange(nsens)) & 1).astype(np.int8)


@dataclass(frozen=True)
class EnumerationResult:
    """Full design table: bits and J values ordered by design index."""

    bits: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.bits.shape[0],):
            raise ValueError("values length must match the number of designs")
        if self.bits.shape[0] != 1 << self.nsens:
            raise ValueError("table must cover all 2^nsens designs")

    @property
    def nsens(self) -> int:
        return self.bits.shape[1]

    @property
    def indices(self) -> np.ndarray:
        return np.arange(1, self.bits.shape[0] + 1, dtype=np.int64)

    @property
    def active_counts(self) -> np.ndarray:
        return self.bits.sum(axis=1).astype(np.int64)

    @property
    def minimum(self) -> float:
        return float(np.min(self.values))

    @property
    def argmin_indices(self) -> list[int]:
        """1-based indices of all minimizers, in index order."""
        return [int(k) + 1 for k in np.flatnonzero(self.values == self.minimum)]

    def argmin_design(self) -> DesignVector:
        return DesignVector(self.bits[self.argmin_indices[0] - 1])

    def group_by_active_count(self) -> dict[int, np.ndarray]:
        """Row positions of the table grouped by number of active sensors."""
        counts = self.active_counts
        return {
            int(c): np.flatnonzero(counts == c) for c in np.unique(counts)
        }

    def to_csv(self, path) -> None:
        """Columns k, bits (component order), active count, J."""
        counts = self.active_counts
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "bits", "active_count", "J"])
            for pos in range(self.bits.shape[0]):
                bits_str = "".join(str(int(b)) for b in self.bits[pos])
                writer.writerow(
                    [pos + 1, bits_str, int(counts[pos]), repr(float(self.values[pos]))]
                )


def brute_force(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    cache: EvaluationCache | None = None,
    guard: int = DEFAULT_GUARD,
    workers: int = 1,
) -> EnumerationResult:
    """Evaluate every design once and return the full table.

    All evaluations go through the shared cache; disjoint index chunks may
    run on worker threads, and the table is assembled by index so the
    result never depends on completion order.
    """
    nsens = problem.nsens
    _check_guard(nsens, guard)
    bits = all_design_bits(nsens)
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
    return EnumerationResult(bits=bits, values=values)


def _pmf_vector(bits: np.ndarray, theta: PolicyParameter) -> np.ndarray:
    """pmf of every design; rows of ``bits`` ordered by design index."""
    factors = np.where(bits == 1, theta.probs, 1.0 - theta.probs)
    return factors.prod(axis=1)


def expectation_from_table(values: np.ndarray, theta: PolicyParameter) -> float:
    """Expected J under the policy, from a complete J table."""
    values = np.asarray(values, dtype=float)
    if values.shape != (1 << theta.nsens,):
        raise ValueError("table length must be 2^nsens")
    return float(values @ _pmf_vector(all_design_bits(theta.nsens), theta))


def gradient_from_table(values: np.ndarray, theta: PolicyParameter) -> np.ndarray:
    """Gradient of the expected J: sum of J times the pmf gradient."""
    values = np.asarray(values, dtype=float)
    n = theta.nsens
    if values.shape != (1 << n,):
        raise ValueError("table length must be 2^nsens")
    bits = all_design_bits(n)
    f = np.where(bits == 1, theta.probs, 1.0 - theta.probs)
    # leave-one-out products from prefix and suffix cumulative products
    loo = np.ones_like(f)
    left = np.cumprod(f, axis=1)
    right = np.cumprod(f[:, ::-1], axis=1)[:, ::-1]
    loo[:, 1:] *= left[:, :-1]
    loo[:, :-1] *= right[:, 1:]
    sign = np.where(bits == 1, 1.0, -1.0)
    return (sign * loo).T @ values


def hessian_entry_from_table(
    values: np.ndarray, theta: PolicyParameter, i: int, j: int
) -> float:
    """Mixed second derivative of the expected J; 1-based positions."""
    values = np.asarray(values, dtype=float)
    n = theta.nsens
    if values.shape != (1 << n,):
        raise ValueError("table length must be 2^nsens")
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"positions must lie in [1, {n}], got ({i}, {j})")
    if i == j:
        return 0.0
    bits = all_design_bits(n)
    f = np.where(bits == 1, theta.probs, 1.0 - theta.probs)
    f[:, [i - 1, j - 1]] = 1.0
    sign = np.where(bits[:, i - 1] == bits[:, j - 1], 1.0, -1.0)
    return float((sign * f.prod(axis=1)) @ values)


def _table_values(problem, spec, cache, guard) -> np.ndarray:
    return brute_force(problem, spec, cache=cache, guard=guard).values


def exact_stochastic_objective(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    theta: PolicyParameter,
    cache: EvaluationCache | None = None,
    guard: int = DEFAULT_GUARD,
) -> float:
    """Exact expected objective under the policy (finite sum over designs)."""
    _check_guard(problem.nsens, guard)
    if theta.nsens != problem.nsens:
        raise ValueError("policy dimension must match the sensor count")
    return expectation_from_table(_table_values(problem, spec, cache, guard), theta)


def exact_gradient(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    theta: PolicyParameter,
    cache: EvaluationCache | None = None,
    guard: int = DEFAULT_GUARD,
) -> np.ndarray:
    """Exact gradient of the expected objective with respect to theta."""
    _check_guard(problem.nsens, guard)
    if theta.nsens != problem.nsens:
        raise ValueError("policy dimension must match the sensor count")
    return gradient_from_table(_table_values(problem, spec, cache, guard), theta)


def exact_hessian_entry(
    problem: InverseProblem,
    spec: ObjectiveSpec,
    theta: PolicyParameter,
    i: int,
    j: int,
    cache: EvaluationCache | None = None,
    guard: int = DEFAULT_GUARD,
) -> float:
    """Exact Hessian entry (i, j) of the expected objective; diagonal is 0."""
    _check_guard(problem.nsens, guard)
    if theta.nsens != problem.nsens:
        raise ValueError("policy dimension must match the sensor count")
    return hessian_entry_from_table(
        _table_values(problem, spec, cache, guard), theta, i, j
    )
