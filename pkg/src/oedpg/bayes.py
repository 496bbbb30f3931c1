"""Linear Gaussian inverse-problem core.

An :class:`InverseProblem` bundles the forward matrix, Gaussian prior and
noise, an optional mass weighting for the adjoint, and the map from each
candidate sensor to the observation rows it owns.  Activating a subset of
sensors weights the data term of the posterior precision; this module
computes that design-weighted precision, the posterior covariance and
mean, and (de)serializes problems as self-describing ``.npz`` containers.

All algebra is dense and direct: Cholesky factorizations, no iterative
solvers.  Problems are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh
from scipy.linalg.lapack import dtrtri

from oedpg.bernoulli import DesignVector

__all__ = [
    "InverseProblem",
    "PosteriorSummary",
    "weighted_precision",
    "relaxed_precision",
    "posterior_covariance",
    "posterior_mean",
    "save_problem",
    "load_problem",
    "spd_trace_inverse",
    "spd_logdet",
]


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _check_spd(name: str, a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(a - a.T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise ValueError(f"{name} must be symmetric")
    try:
        cholesky(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc


def spd_trace_inverse(matrix: np.ndarray) -> float:
    """Trace of the inverse of an SPD matrix via its Cholesky factor.

    tr(H^-1) is the squared Frobenius norm of inv(L) for H = L L^T, which
    avoids forming the full inverse.
    """
    low = cholesky(matrix, lower=True)
    inv_low, info = dtrtri(low, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("triangular inversion failed")
    return float(np.sum(inv_low * inv_low))


def spd_logdet(matrix: np.ndarray) -> float:
    """log det of an SPD matrix as twice the log-diagonal sum of its factor."""
    low = cholesky(matrix, lower=True)
    return 2.0 * float(np.sum(np.log(np.diag(low))))


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior covariance and, when data were supplied, posterior mean."""

    covariance: np.ndarray
    mean: np.ndarray | None = None


@dataclass(eq=False)
class InverseProblem:
    """Immutable linear Gaussian inverse problem with gated sensors.

    Parameters
    ----------
    forward : (nobs, nstate) array
        Parameter-to-observable map; row r observes one sensor at one time.
    prior_mean : (nstate,) array
    prior_cov : (nstate, nstate) SPD array
    noise_cov : (nobs, nobs) SPD array
    sensor_map : sequence of int arrays
        Entry i lists the 0-based observation rows owned by candidate
        sensor i; together the entries partition range(nobs).
    mass : (nstate, nstate) SPD array, optional
        Weighting of the adjoint (identity when omitted).  Anything other
        than a scalar multiple of the identity must commute with the data
        term for the weighted precision to stay symmetric.
    prior_precision : (nstate, nstate) SPD array, optional
        Supplied when the prior is naturally specified by its precision;
        otherwise computed from prior_cov.
    """

    forward: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_cov: np.ndarray
    sensor_map: tuple
    mass: np.ndarray | None = None
    prior_precision: np.ndarray | None = None

    def __post_init__(self):
        self.forward = _freeze(np.atleast_2d(self.forward))
        nobs, nstate = self.forward.shape
        self.prior_mean = _freeze(np.atleast_1d(self.prior_mean))
        self.prior_cov = _freeze(np.atleast_2d(self.prior_cov))
        self.noise_cov = _freeze(np.atleast_2d(self.noise_cov))
        if self.prior_mean.shape != (nstate,):
            raise ValueError("prior_mean length must match the state dimension")
        if self.prior_cov.shape != (nstate, nstate):
            raise ValueError("prior_cov shape must match the state dimension")
        if self.noise_cov.shape != (nobs, nobs):
            raise ValueError("noise_cov shape must match the observation count")
        _check_spd("prior_cov", self.prior_cov)
        _check_spd("noise_cov", self.noise_cov)

        sensor_map = tuple(
            np.array(rows, dtype=np.int64).ravel() for rows in self.sensor_map
        )
        if not sensor_map:
            raise ValueError("sensor_map must list at least one sensor")
        concat = np.concatenate(sensor_map)
        if not np.array_equal(np.sort(concat), np.arange(nobs)):
            raise ValueError("sensor_map must partition the observation rows")
        for rows in sensor_map:
            rows.flags.writeable = False
        self.sensor_map = sensor_map

        if self.mass is not None:
            self.mass = _freeze(np.atleast_2d(self.mass))
            if self.mass.shape != (nstate, nstate):
                raise ValueError("mass shape must match the state dimension")
            _check_spd("mass", self.mass)
            if np.array_equal(self.mass, np.eye(nstate)):
                self.mass = None  # identity carries no weighting

        if self.prior_precision is None:
            factor = cho_factor(self.prior_cov, lower=True)
            self.prior_precision = _symmetrize(cho_solve(factor, np.eye(nstate)))
        else:
            self.prior_precision = _freeze(np.atleast_2d(self.prior_precision))
            if self.prior_precision.shape != (nstate, nstate):
                raise ValueError("prior_precision shape must match the state")
            _check_spd("prior_precision", self.prior_precision)
        self.prior_precision = _freeze(self.prior_precision)

        # Noise-whitened forward map: rows g_r with G = noise_cov^(-1/2) F
        # (symmetric inverse square root).  Diagonal noise gets the cheap
        # scaling path.
        diag = np.diag(self.noise_cov)
        if np.count_nonzero(self.noise_cov - np.diag(diag)) == 0:
            self._noise_half_inv = None
            self._noise_root_scale = np.sqrt(diag)
            self._whitened = self.forward / self._noise_root_scale[:, None]
        else:
            vals, vecs = eigh(self.noise_cov)
            if np.min(vals) <= 0.0:
                raise ValueError("noise_cov must be positive definite")
            self._noise_half_inv = (vecs / np.sqrt(vals)) @ vecs.T
            self._noise_root_scale = None
            self._whitened = self._noise_half_inv @ self.forward
        self._whitened = _freeze(self._whitened)
        self._mass_factor = (
            None if self.mass is None else cho_factor(self.mass, lower=True)
        )
        self._blocks = None

    @property
    def nobs(self) -> int:
        return self.forward.shape[0]

    @property
    def nstate(self) -> int:
        return self.forward.shape[1]

    @property
    def nsens(self) -> int:
        return len(self.sensor_map)

    def sensor_blocks(self) -> np.ndarray:
        """Per-sensor contributions B_i to the whitened data term.

        B_i sums the outer products of sensor i's whitened forward rows, so
        the data term for any design is just the weighted sum of blocks.
        Built once on first use; (nsens, nstate, nstate).
        """
        if self._blocks is None:
            blocks = np.zeros((self.nsens, self.nstate, self.nstate))
            for i, rows in enumerate(self.sensor_map):
                g = self._whitened[rows]
                blocks[i] = g.T @ g
            blocks.flags.writeable = False
            self._blocks = blocks
        return self._blocks

    def expand_to_rows(self, per_sensor: np.ndarray) -> np.ndarray:
        """Spread one value per sensor to that sensor's observation rows."""
        out = np.empty(self.nobs)
        for i, rows in enumerate(self.sensor_map):
            out[rows] = per_sensor[i]
        return out


def relaxed_precision(problem: InverseProblem, weights) -> np.ndarray:
    """Design-weighted posterior precision for fractional sensor weights.

    Accepts any weight vector in [0, 1]^nsens; binary weights recover
    :func:`weighted_precision`.  Used directly for the relaxed objective
    surface.
    """
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if w.shape != (problem.nsens,):
        raise ValueError("weight vector length must equal the sensor count")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("sensor weights must lie in [0, 1]")
    data_term = np.tensordot(w, problem.sensor_blocks(), axes=1)
    if problem._mass_factor is not None:
        data_term = cho_solve(problem._mass_factor, data_term)
        scale = max(1.0, float(np.max(np.abs(data_term))))
        if np.max(np.abs(data_term - data_term.T)) > 1e-6 * scale:
            raise ValueError(
                "mass weighting breaks the symmetry of the data term; "
                "use a scalar multiple of the identity"
            )
    return _symmetrize(data_term + problem.prior_precision)


def weighted_precision(problem: InverseProblem, design: DesignVector) -> np.ndarray:
    """Posterior precision with the design's sensors active.

    Inactive sensors contribute nothing; the all-zeros design returns the
    prior precision exactly.
    """
    if design.nsens != problem.nsens:
        raise ValueError("design length must equal the candidate sensor count")
    return relaxed_precision(problem, design.bits.astype(float))


def posterior_covariance(
    problem: InverseProblem, design: DesignVector
) -> PosteriorSummary:
    """Dense posterior covariance: inverse of the weighted precision."""
    precision = weighted_precision(problem, design)
    factor = cho_factor(precision, lower=True)
    covariance = _symmetrize(cho_solve(factor, np.eye(problem.nstate)))
    return PosteriorSummary(covariance=covariance)


def posterior_mean(
    problem: InverseProblem, design: DesignVector, data: np.ndarray
) -> np.ndarray:
    """Posterior mean for the given design and observation vector.

    Solves the weighted normal equations; with no active sensor the prior
    mean comes back unchanged.
    """
    data = np.atleast_1d(np.asarray(data, dtype=float))
    if data.shape != (problem.nobs,):
        raise ValueError("data length must equal the observation count")
    precision = weighted_precision(problem, design)
    row_weights = problem.expand_to_rows(design.bits.astype(float))
    # F* W y with W = noise^(-1/2) diag(row weights) noise^(-1/2): reuse
    # the whitened rows so F^T W y = G^T (weights * half-whitened data).
    if problem._noise_half_inv is None:
        half = data / problem._noise_root_scale
    else:
        half = problem._noise_half_inv @ data
    rhs_data = problem._whitened.T @ (row_weights * half)
    if problem._mass_factor is not None:
        rhs_data = cho_solve(problem._mass_factor, rhs_data)
    rhs = problem.prior_precision @ problem.prior_mean + rhs_data
    factor = cho_factor(precision, lower=True)
    return cho_solve(factor, rhs)


def save_problem(problem: InverseProblem, path) -> None:
    """Write a problem as a ``.npz`` container of named dense blocks.

    The ragged sensor map is stored as concatenated row indices plus
    offsets.  The prior precision rides along so a reloaded problem does
    not re-invert the prior.
    """
    offsets = np.cumsum([0] + [rows.size for rows in problem.sensor_map])
    np.savez(
        path,
        forward=problem.forward,
        prior_mean=problem.prior_mean,
        prior_cov=problem.prior_cov,
        noise_cov=problem.noise_cov,
        mass=problem.mass if problem.mass is not None else np.eye(problem.nstate),
        sensor_map_indices=np.concatenate(problem.sensor_map),
        sensor_map_offsets=offsets,
        prior_precision=problem.prior_precision,
    )


def load_problem(path) -> InverseProblem:
    """Rebuild a problem from a container written by :func:`save_problem`."""
    path = Path(path)
    with np.load(path) as blocks:
        required = {
            "forward",
            "prior_mean",
            "prior_cov",
            "noise_cov",
            "mass",
            "sensor_map_indices",
            "sensor_map_offsets",
        }
        missing = required - set(blocks.files)
        if missing:
            raise ValueError(
                f"{path} is not a problem container; missing blocks: "
                + ", ".join(sorted(missing))
            )
        offsets = blocks["sensor_map_offsets"]
        indices = blocks["sensor_map_indices"]
        sensor_map = tuple(
            indices[offsets[i] : offsets[i + 1]] for i in range(offsets.size - 1)
        )
        return InverseProblem(
            forward=blocks["forward"],
            prior_mean=blocks["prior_mean"],
            prior_cov=blocks["prior_cov"],
            noise_cov=blocks["noise_cov"],
            sensor_map=sensor_map,
            mass=blocks["mass"],
            prior_precision=(
                blocks["prior_precision"] if "prior_precision" in blocks.files else None
            ),
        )
