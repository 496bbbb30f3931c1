"""Multivariate Bernoulli distribution over binary sensor designs.

Independent per-sensor activation probabilities define a product
distribution on {0,1}^n.  This module provides the probability mass
function and its first and second derivatives, the score function with
its total-variance identity, and seeded sampling.  All operations are
pure given an explicit generator; nothing here touches the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PolicyParameter",
    "DesignVector",
    "pmf",
    "pmf_gradient",
    "pmf_second_derivative",
    "score",
    "score_matrix",
    "score_total_variance",
    "sample",
    "sample_bits",
]

# Below this size the plain product is exact and cheap; above it the pmf is
# accumulated in the log domain to dodge underflow of long near-degenerate
# products.
_LOG_DOMAIN_CUTOFF = 30


@dataclass(frozen=True)
class PolicyParameter:
    """Activation probabilities theta in [0,1]^n, one per candidate sensor."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probs must be finite")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("every activation probability must lie in [0, 1]")
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def nsens(self) -> int:
        return self.probs.size

    def is_interior(self) -> np.ndarray:
        """Boolean mask of components strictly inside (0, 1)."""
        return (self.probs > 0.0) & (self.probs < 1.0)


@dataclass(frozen=True, eq=False)
class DesignVector:
    """Binary activation vector with its canonical 1-based integer index.

    Component i carries weight 2**(i-1) in the index, so the all-zeros
    design has index 1 and the all-ones design has index 2**n.
    """

    bits: np.ndarray

    def __post_init__(self):
        bits = np.atleast_1d(np.asarray(self.bits))
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("bits must be a nonempty vector")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bits must be 0 or 1")
        bits = bits.astype(np.int8)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_index(cls, index: int, nsens: int) -> "DesignVector":
        """Invert the index formula: design whose index is ``index``."""
        if not 1 <= index <= (1 << nsens):
            raise ValueError(f"index {index} outside [1, 2^{nsens}]")
        offset = int(index) - 1
        bits = [(offset >> i) & 1 for i in range(nsens)]
        return cls(np.array(bits, dtype=np.int8))

    @property
    def index(self) -> int:
        # Python ints keep this exact at any width.
        offset = 0
        for i, b in enumerate(self.bits):
            offset |= int(b) << i
        return 1 + offset

    @property
    def nsens(self) -> int:
        return self.bits.size

    @property
    def active_count(self) -> int:
        return int(np.sum(self.bits))

    def as_string(self) -> str:
        """Bits concatenated in component order, e.g. '10' for (1, 0)."""
        return "".join(str(int(b)) for b in self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DesignVector):
            return NotImplemented
        return self.bits.size == other.bits.size and bool(
            np.all(self.bits == other.bits)
        )

    def __hash__(self) -> int:
        return hash((self.bits.size, self.index))

    def __repr__(self) -> str:
        return f"DesignVector({self.as_string()})"


def _check_dims(design: DesignVector, theta: PolicyParameter) -> None:
    if design.nsens != theta.nsens:
        raise ValueError(
            f"design has {design.nsens} components, policy has {theta.nsens}"
        )


def _factors(design: DesignVector, theta: PolicyParameter) -> np.ndarray:
    """Per-component pmf factors theta_i^(xi_i) (1-theta_i)^(1-xi_i)."""
    return np.where(design.bits == 1, theta.probs, 1.0 - theta.probs)


def pmf(design: DesignVector, theta: PolicyParameter) -> float:
    """Probability of drawing ``design`` under the product distribution.

    Degenerate components are exact by the convention 0^0 = 1: a factor is
    theta_i when the bit is on and 1 - theta_i when it is off.
    """
    _check_dims(design, theta)
    factors = _factors(design, theta)
    if factors.size <= _LOG_DOMAIN_CUTOFF:
        return float(np.prod(factors))
    if np.any(factors == 0.0):
        return 0.0
    return float(np.exp(np.sum(np.log(factors))))


def pmf_gradient(design: DesignVector, theta: PolicyParameter) -> np.ndarray:
    """Gradient of the pmf with respect to the activation probabilities.

    Component j is the leave-one-out product of the pmf factors with sign
    +1 when bit j is on and -1 when it is off.
    """
    _check_dims(design, theta)
    f = _factors(design, theta)
    left = np.concatenate(([1.0], np.cumprod(f[:-1])))
    right = np.concatenate((np.cumprod(f[:0:-1])[::-1], [1.0]))
    sign = np.where(design.bits == 1, 1.0, -1.0)
    return sign * left * right


def pmf_second_derivative(
    design: DesignVector, theta: PolicyParameter, i: int, j: int
) -> float:
    """Mixed second derivative of the pmf for sensor positions i and j.

    Positions are 1-based, matching the design-index convention.  Diagonal
    entries vanish identically because each factor is affine in its own
    probability.
    """
    _check_dims(design, theta)
    n = theta.nsens
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"positions must lie in [1, {n}], got ({i}, {j})")
    if i == j:
        return 0.0
    f = _factors(design, theta)
    keep = np.ones(n, dtype=bool)
    keep[[i - 1, j - 1]] = False
    sign = 1.0 if design.bits[i - 1] == design.bits[j - 1] else -1.0
    return float(sign * np.prod(f[keep]))


def score(design: DesignVector, theta: PolicyParameter) -> np.ndarray:
    """Gradient of the log-pmf at ``design``.

    Interior components are xi_i/theta_i + (xi_i - 1)/(1 - theta_i).
    Components with theta_i in {0, 1} contribute exactly 0; a design that
    disagrees with a degenerate component is impossible under theta and is
    rejected.
    """
    _check_dims(design, theta)
    interior = theta.is_interior()
    if np.any(~interior & (design.bits != theta.probs)):
        raise ValueError("design is impossible under a degenerate policy component")
    out = np.zeros(theta.nsens)
    p = theta.probs[interior]
    x = design.bits[interior].astype(float)
    out[interior] = x / p + (x - 1.0) / (1.0 - p)
    return out


def score_matrix(bits: np.ndarray, theta: PolicyParameter) -> np.ndarray:
    """Row-wise score for a batch of designs given as a (m, n) bit matrix.

    Same conventions as :func:`score`; the batch form exists because the
    gradient estimators consume whole sample ensembles at once.
    """
    bits = np.atleast_2d(np.asarray(bits))
    if bits.shape[1] != theta.nsens:
        raise ValueError("bit matrix width does not match the policy dimension")
    interior = theta.is_interior()
    if np.any(~interior & (bits != theta.probs[np.newaxis, :])):
        raise ValueError("design is impossible under a degenerate policy component")
    out = np.zeros(bits.shape, dtype=float)
    p = theta.probs[interior]
    x = bits[:, interior].astype(float)
    out[:, interior] = x / p + (x - 1.0) / (1.0 - p)
    return out


def score_total_variance(theta: PolicyParameter) -> float:
    """Trace of the score covariance: sum of 1/(theta_i - theta_i^2).

    Defined only strictly inside the box; a boundary component makes the
    variance divergent.
    """
    p = theta.probs
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("score variance diverges at a boundary component")
    return float(np.sum(1.0 / (p - p * p)))


def sample_bits(theta: PolicyParameter, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` designs as an (n, nsens) bit matrix.

    Uniform draws in [0, 1) compared against the probabilities make the
    degenerate components exact: theta_i = 0 never activates, theta_i = 1
    always does.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    return (rng.random((n, theta.nsens)) < theta.probs).astype(np.int8)


def sample(
    theta: PolicyParameter, n: int, rng: np.random.Generator
) -> list[DesignVector]:
    """Draw ``n`` independent designs from the policy."""
    return [DesignVector(row) for row in sample_bits(theta, n, rng)]
