"""Tests for the design-weighted posterior algebra and the problem container."""

import numpy as np
import pytest

from _helpers import random_problem, toy_problem_literal
from oedpg.bayes import (
    InverseProblem,
    load_problem,
    posterior_covariance,
    posterior_mean,
    relaxed_precision,
    save_problem,
    spd_logdet,
    spd_trace_inverse,
    weighted_precision,
)
from oedpg.bernoulli import DesignVector


def design(*bits):
    return DesignVector(np.array(bits, dtype=np.int8))


def reference_precision(problem, bits):
    """Independent dense assembly: F^T W F + inv(prior), W built explicitly."""
    row_weights = np.zeros(problem.nobs)
    for i, rows in enumerate(problem.sensor_map):
        row_weights[rows] = bits[i]
    vals, vecs = np.linalg.eigh(problem.noise_cov)
    half_inv = (vecs / np.sqrt(vals)) @ vecs.T
    w = half_inv @ np.diag(row_weights) @ half_inv
    return problem.forward.T @ w @ problem.forward + np.linalg.inv(problem.prior_cov)


def toy_block_trace(xi1, xi2):
    """Closed-form posterior trace for the toy via 2x2 block inversion."""
    upper = np.array([[xi1 + 0.25, xi1], [xi1, xi1 + 1.0]])
    lower = np.array([[0.25 * xi2 + 4.0, 0.25 * xi2], [0.25 * xi2, 0.25 * xi2 + 1.0]])
    return np.trace(np.linalg.inv(upper)) + np.trace(np.linalg.inv(lower))


class TestWeightedPrecision:
    def test_all_zeros_returns_prior_precision(self):
        problem = toy_problem_literal()
        np.testing.assert_allclose(
            weighted_precision(problem, design(0, 0)),
            np.diag([0.25, 1.0, 4.0, 1.0]),
            atol=1e-14,
        )

    def test_toy_single_sensor_blocks(self):
        problem = toy_problem_literal()
        h = weighted_precision(problem, design(1, 0))
        np.testing.assert_allclose(h[:2, :2], [[1.25, 1.0], [1.0, 2.0]], atol=1e-14)
        np.testing.assert_allclose(h[2:, 2:], np.diag([4.0, 1.0]), atol=1e-14)
        np.testing.assert_allclose(h[:2, 2:], 0.0, atol=1e-14)

    def test_matches_explicit_assembly(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            nsens = int(rng.integers(2, 6))
            problem = random_problem(rng, nsens, rows_per_sensor=int(rng.integers(1, 3)))
            bits = (rng.random(nsens) < 0.5).astype(np.int8)
            h = weighted_precision(problem, DesignVector(bits))
            np.testing.assert_allclose(
                h, reference_precision(problem, bits), rtol=1e-10, atol=1e-10
            )

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        problem = random_problem(rng, 4)
        h = weighted_precision(problem, design(1, 0, 1, 1))
        assert np.max(np.abs(h - h.T)) <= 1e-12

    def test_scalar_mass_rescales_data_term(self):
        problem = toy_problem_literal()
        scaled = InverseProblem(
            forward=problem.forward,
            prior_mean=problem.prior_mean,
            prior_cov=problem.prior_cov,
            noise_cov=problem.noise_cov,
            sensor_map=problem.sensor_map,
            mass=2.0 * np.eye(4),
        )
        h_plain = weighted_precision(problem, design(1, 1))
        h_scaled = weighted_precision(scaled, design(1, 1))
        prior_prec = np.diag([0.25, 1.0, 4.0, 1.0])
        np.testing.assert_allclose(
            h_scaled - prior_prec, 0.5 * (h_plain - prior_prec), atol=1e-12
        )

    def test_fractional_weights(self):
        problem = toy_problem_literal()
        h = relaxed_precision(problem, [0.5, 0.0])
        full = weighted_precision(problem, design(1, 0))
        prior_prec = np.diag([0.25, 1.0, 4.0, 1.0])
        np.testing.assert_allclose(h - prior_prec, 0.5 * (full - prior_prec), atol=1e-14)

    def test_rejects_bad_weights(self):
        problem = toy_problem_literal()
        with pytest.raises(ValueError):
            relaxed_precision(problem, [0.5, 1.5])
        with pytest.raises(ValueError):
            weighted_precision(problem, design(1, 0, 1))


class TestPosteriorCovariance:
    def test_no_data_returns_prior(self):
        problem = toy_problem_literal()
        cov = posterior_covariance(problem, design(0, 0)).covariance
        np.testing.assert_allclose(cov, problem.prior_cov, atol=1e-10)

    def test_toy_trace_all_on(self):
        problem = toy_problem_literal()
        cov = posterior_covariance(problem, design(1, 1)).covariance
        assert np.trace(cov) == pytest.approx(3.214286, abs=5e-7)
        assert np.trace(cov) == pytest.approx(toy_block_trace(1, 1), abs=1e-12)

    def test_toy_trace_first_only(self):
        problem = toy_problem_literal()
        cov = posterior_covariance(problem, design(1, 0)).covariance
        assert np.trace(cov) == pytest.approx(3.416667, abs=5e-7)
        assert np.trace(cov) == pytest.approx(toy_block_trace(1, 0), abs=1e-12)

    def test_symmetric_spd(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            problem = random_problem(rng, 5)
            bits = (rng.random(5) < 0.5).astype(np.int8)
            cov = posterior_covariance(problem, DesignVector(bits)).covariance
            assert np.max(np.abs(cov - cov.T)) <= 1e-12
            np.linalg.cholesky(cov)

    def test_consistency_with_precision(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            problem = random_problem(rng, 4)
            bits = (rng.random(4) < 0.5).astype(np.int8)
            d = DesignVector(bits)
            product = (
                posterior_covariance(problem, d).covariance
                @ weighted_precision(problem, d)
            )
            np.testing.assert_allclose(product, np.eye(problem.nstate), atol=1e-8)

    def test_monotone_in_active_set(self):
        # adding sensors never increases the posterior trace
        rng = np.random.default_rng(13)
        for _ in range(10):
            nsens = int(rng.integers(2, 7))
            problem = random_problem(rng, nsens)
            bits = (rng.random(nsens) < 0.5).astype(np.int8)
            more = bits.copy()
            off = np.flatnonzero(more == 0)
            if off.size:
                more[rng.choice(off)] = 1
            t_small = np.trace(posterior_covariance(problem, DesignVector(bits)).covariance)
            t_big = np.trace(posterior_covariance(problem, DesignVector(more)).covariance)
            assert t_big <= t_small + 1e-10


class TestSpdHelpers:
    def test_trace_inverse_matches_dense(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((30, 30))
        h = a @ a.T + 30 * np.eye(30)
        assert spd_trace_inverse(h) == pytest.approx(
            np.trace(np.linalg.inv(h)), rel=1e-12
        )

    def test_logdet_matches_dense(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((20, 20))
        h = a @ a.T + 20 * np.eye(20)
        assert spd_logdet(h) == pytest.approx(np.linalg.slogdet(h)[1], rel=1e-12)


class TestPosteriorMean:
    def test_no_sensors_returns_prior_mean(self):
        rng = np.random.default_rng(5)
        problem = random_problem(rng, 3)
        mean = posterior_mean(problem, design(0, 0, 0), rng.standard_normal(3))
        np.testing.assert_allclose(mean, problem.prior_mean, atol=1e-10)

    def test_zero_prior_zero_data(self):
        problem = toy_problem_literal()
        mean = posterior_mean(problem, design(1, 1), np.zeros(2))
        np.testing.assert_allclose(mean, np.zeros(4), atol=1e-14)

    def test_matches_normal_equations(self):
        # independent oracle: assemble and solve the weighted normal
        # equations densely
        rng = np.random.default_rng(19)
        for _ in range(5):
            nsens = int(rng.integers(2, 5))
            problem = random_problem(rng, nsens, rows_per_sensor=2)
            bits = np.ones(nsens, dtype=np.int8)
            data = problem.forward @ rng.standard_normal(problem.nstate)
            h = reference_precision(problem, bits)
            vals, vecs = np.linalg.eigh(problem.noise_cov)
            half_inv = (vecs / np.sqrt(vals)) @ vecs.T
            w = half_inv @ np.diag(np.ones(problem.nobs)) @ half_inv
            rhs = (
                np.linalg.inv(problem.prior_cov) @ problem.prior_mean
                + problem.forward.T @ w @ data
            )
            expected = np.linalg.solve(h, rhs)
            actual = posterior_mean(problem, DesignVector(bits), data)
            np.testing.assert_allclose(actual, expected, rtol=1e-8, atol=1e-10)

    def test_dimension_mismatch(self):
        problem = toy_problem_literal()
        with pytest.raises(ValueError):
            posterior_mean(problem, design(1, 1), np.zeros(3))


class TestValidation:
    def test_rejects_indefinite_prior(self):
        with pytest.raises(ValueError):
            InverseProblem(
                forward=np.eye(2),
                prior_mean=np.zeros(2),
                prior_cov=np.diag([1.0, -1.0]),
                noise_cov=np.eye(2),
                sensor_map=(np.array([0]), np.array([1])),
            )

    def test_rejects_bad_sensor_map(self):
        with pytest.raises(ValueError):
            InverseProblem(
                forward=np.eye(2),
                prior_mean=np.zeros(2),
                prior_cov=np.eye(2),
                noise_cov=np.eye(2),
                sensor_map=(np.array([0]), np.array([0])),
            )

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            InverseProblem(
                forward=np.eye(2),
                prior_mean=np.zeros(3),
                prior_cov=np.eye(2),
                noise_cov=np.eye(2),
                sensor_map=(np.array([0]), np.array([1])),
            )


class TestContainer:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(23)
        problem = random_problem(rng, 4, rows_per_sensor=3)
        path = tmp_path / "problem.npz"
        save_problem(problem, path)
        loaded = load_problem(path)
        np.testing.assert_array_equal(loaded.forward, problem.forward)
        np.testing.assert_array_equal(loaded.prior_cov, problem.prior_cov)
        np.testing.assert_array_equal(loaded.noise_cov, problem.noise_cov)
        np.testing.assert_array_equal(loaded.prior_mean, problem.prior_mean)
        np.testing.assert_array_equal(
            loaded.prior_precision, problem.prior_precision
        )
        assert loaded.nsens == problem.nsens
        for a, b in zip(loaded.sensor_map, problem.sensor_map):
            np.testing.assert_array_equal(a, b)

    def test_roundtrip_preserves_posterior(self, tmp_path):
        rng = np.random.default_rng(29)
        problem = random_problem(rng, 3)
        path = tmp_path / "problem.npz"
        save_problem(problem, path)
        loaded = load_problem(path)
        d = design(1, 0, 1)
        np.testing.assert_array_equal(
            posterior_covariance(loaded, d).covariance,
            posterior_covariance(problem, d).covariance,
        )

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.npz"
        np.savez(path, stuff=np.eye(2))
        with pytest.raises(ValueError, match="missing blocks"):
            load_problem(path)
