"""Tests for brute-force enumeration and the exact objective/derivative sums."""

import numpy as np
import pytest

from _helpers import random_problem, toy_problem_literal
from oedpg.bernoulli import DesignVector, PolicyParameter, pmf, pmf_gradient
from oedpg.enumeration import (
    EnumerationGuardError,
    all_design_bits,
    brute_force,
    exact_gradient,
    exact_hessian_entry,
    exact_stochastic_objective,
    expectation_from_table,
    gradient_from_table,
    hessian_entry_from_table,
)
from oedpg.objective import (
    Criterion,
    EvaluationCache,
    ObjectiveSpec,
    Penalty,
    evaluate,
)
from oedpg.bayes import InverseProblem


CLOSED_FORM = ObjectiveSpec(criterion=Criterion.TOY_CLOSED_FORM)
A_OPT = ObjectiveSpec(criterion=Criterion.A_OPTIMAL)


def policy(*probs):
    return PolicyParameter(np.array(probs, dtype=float))


def constant_objective_problem(nsens, nstate=3):
    """Zero forward map: every design scores trace(prior), a constant J."""
    return InverseProblem(
        forward=np.zeros((nsens, nstate)),
        prior_mean=np.zeros(nstate),
        prior_cov=np.eye(nstate),
        noise_cov=np.eye(nsens),
        sensor_map=tuple(np.array([i]) for i in range(nsens)),
    )


def fd_gradient(fun, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (fun(hi) - fun(lo)) / (2.0 * step)
    return out


class TestDesignTable:
    def test_bit_ordering_matches_index(self):
        bits = all_design_bits(3)
        assert bits.shape == (8, 3)
        for pos in range(8):
            assert DesignVector(bits[pos]).index == pos + 1

    def test_toy_closed_form_table(self):
        result = brute_force(toy_problem_literal(), CLOSED_FORM)
        assert result.bits.shape[0] == 4
        np.testing.assert_array_equal(result.values, [6.25, 8.25, 6.75, 8.75])
        assert result.minimum == 6.25
        assert result.argmin_indices == [1]
        assert result.argmin_design() == DesignVector(np.array([0, 0]))

    def test_toy_a_optimal_minimum_all_on(self):
        result = brute_force(toy_problem_literal(), A_OPT)
        assert result.argmin_indices == [4]
        assert result.minimum == pytest.approx(3.214286, abs=5e-7)

    def test_guard_refusal(self):
        rng = np.random.default_rng(0)
        problem = random_problem(rng, 5)
        with pytest.raises(EnumerationGuardError):
            brute_force(problem, A_OPT, guard=4)

    def test_worker_count_does_not_change_table(self):
        rng = np.random.default_rng(1)
        problem = random_problem(rng, 7)
        serial = brute_force(problem, A_OPT)
        threaded = brute_force(problem, A_OPT, workers=4)
        np.testing.assert_array_equal(serial.values, threaded.values)

    def test_each_design_evaluated_once(self):
        rng = np.random.default_rng(2)
        problem = random_problem(rng, 6)
        cache = EvaluationCache()
        brute_force(problem, A_OPT, cache=cache)
        assert len(cache) == 64
        assert cache.misses == 64
        brute_force(problem, A_OPT, cache=cache)
        assert cache.misses == 64
        assert cache.hits == 64

    def test_budget_argmin_under_large_alpha(self):
        rng = np.random.default_rng(3)
        problem = random_problem(rng, 8)
        spec = ObjectiveSpec(
            criterion=Criterion.A_OPTIMAL,
            penalty=Penalty.BUDGET,
            alpha=1000.0,
            budget=3,
        )
        result = brute_force(problem, spec)
        for k in result.argmin_indices:
            assert DesignVector.from_index(k, 8).active_count == 3
        groups = result.group_by_active_count()
        assert groups[3].size == 56  # C(8,3)

    def test_csv_export(self, tmp_path):
        result = brute_force(toy_problem_literal(), CLOSED_FORM)
        path = tmp_path / "designs.csv"
        result.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "k,bits,active_count,J"
        assert lines[1] == "1,00,0,6.25"
        assert lines[2] == "2,10,1,8.25"
        assert len(lines) == 5


class TestExactObjective:
    def test_vertex_coincidence(self):
        rng = np.random.default_rng(42)
        problems = [toy_problem_literal()] + [
            random_problem(rng, n) for n in (3, 6)
        ]
        for problem in problems:
            cache = EvaluationCache()
            for bits in all_design_bits(problem.nsens):
                theta = PolicyParameter(bits.astype(float))
                expected = exact_stochastic_objective(problem, A_OPT, theta, cache)
                direct = evaluate(problem, A_OPT, DesignVector(bits), cache)
                assert expected == pytest.approx(direct, abs=1e-12)

    def test_hull_containment(self):
        rng = np.random.default_rng(7)
        problem = random_problem(rng, 6)
        cache = EvaluationCache()
        table = brute_force(problem, A_OPT, cache=cache)
        lo, hi = table.values.min(), table.values.max()
        for _ in range(200):
            theta = PolicyParameter(rng.uniform(0, 1, size=6))
            value = exact_stochastic_objective(problem, A_OPT, theta, cache)
            assert lo - 1e-10 <= value <= hi + 1e-10

    def test_toy_uniform_average(self):
        value = exact_stochastic_objective(
            toy_problem_literal(), CLOSED_FORM, policy(0.5, 0.5)
        )
        assert value == pytest.approx(7.5, abs=1e-12)

    def test_guard(self):
        rng = np.random.default_rng(8)
        problem = random_problem(rng, 6)
        with pytest.raises(EnumerationGuardError):
            exact_stochastic_objective(
                problem, A_OPT, policy(*([0.5] * 6)), guard=5
            )

    def test_table_expectation_matches_pmf_loop(self):
        # independent oracle: accumulate pmf * J design by design through
        # the scalar pmf, a different code path from the vectorized table
        rng = np.random.default_rng(11)
        n = 5
        values = rng.standard_normal(2**n)
        theta = PolicyParameter(rng.uniform(0.1, 0.9, size=n))
        acc = 0.0
        for pos, bits in enumerate(all_design_bits(n)):
            acc += values[pos] * pmf(DesignVector(bits), theta)
        assert expectation_from_table(values, theta) == pytest.approx(acc, rel=1e-12)


class TestExactGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        cases = [
            (toy_problem_literal(), CLOSED_FORM),
            (toy_problem_literal(), A_OPT),
            (random_problem(rng, 6), A_OPT),
        ]
        for problem, spec in cases:
            cache = EvaluationCache()
            table = brute_force(problem, spec, cache=cache).values
            for _ in range(10):
                probs = rng.uniform(0.05, 0.95, size=problem.nsens)
                grad = gradient_from_table(table, PolicyParameter(probs))
                ref = fd_gradient(
                    lambda p: expectation_from_table(table, PolicyParameter(p)),
                    probs,
                )
                np.testing.assert_allclose(grad, ref, rtol=1e-7, atol=1e-9)

    def test_constant_objective_zero_gradient(self):
        problem = constant_objective_problem(5)
        theta = policy(*np.linspace(0.2, 0.8, 5))
        grad = exact_gradient(problem, A_OPT, theta)
        np.testing.assert_allclose(grad, np.zeros(5), atol=1e-12)

    def test_toy_closed_form_linear_gradient(self):
        grad = exact_gradient(toy_problem_literal(), CLOSED_FORM, policy(0.5, 0.5))
        np.testing.assert_allclose(grad, [2.0, 0.5], atol=1e-12)

    def test_matches_pmf_gradient_sum(self):
        # independent oracle via the scalar pmf_gradient
        rng = np.random.default_rng(17)
        n = 4
        values = rng.standard_normal(2**n)
        theta = PolicyParameter(rng.uniform(0.1, 0.9, size=n))
        acc = np.zeros(n)
        for pos, bits in enumerate(all_design_bits(n)):
            acc += values[pos] * pmf_gradient(DesignVector(bits), theta)
        np.testing.assert_allclose(
            gradient_from_table(values, theta), acc, rtol=1e-12, atol=1e-14
        )

    def test_norm_bound(self):
        rng = np.random.default_rng(19)
        for n in (4, 7, 10):
            values = rng.standard_normal(2**n) * rng.uniform(0.5, 5)
            bound = np.sqrt(n * 2**n) * np.max(np.abs(values))
            for _ in range(30):
                theta = PolicyParameter(rng.uniform(0, 1, size=n))
                assert np.linalg.norm(gradient_from_table(values, theta)) <= bound


class TestExactHessian:
    def test_diagonal_zero(self):
        rng = np.random.default_rng(23)
        problem = random_problem(rng, 4)
        theta = policy(0.3, 0.5, 0.7, 0.2)
        for i in range(1, 5):
            assert exact_hessian_entry(problem, A_OPT, theta, i, i) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(29)
        values = rng.standard_normal(2**5)
        theta = PolicyParameter(rng.uniform(0.1, 0.9, size=5))
        for i in range(1, 6):
            for j in range(i + 1, 6):
                assert hessian_entry_from_table(
                    values, theta, i, j
                ) == pytest.approx(
                    hessian_entry_from_table(values, theta, j, i), rel=1e-12
                )

    def test_matches_finite_differences_of_gradient(self):
        rng = np.random.default_rng(31)
        n = 4
        values = rng.standard_normal(2**n)
        for _ in range(10):
            probs = rng.uniform(0.1, 0.9, size=n)
            i = int(rng.integers(1, n + 1))
            j = int(rng.integers(1, n + 1))
            entry = hessian_entry_from_table(values, PolicyParameter(probs), i, j)
            ref = fd_gradient(
                lambda p: gradient_from_table(values, PolicyParameter(p))[i - 1],
                probs,
            )[j - 1]
            assert entry == pytest.approx(ref, abs=1e-6)

    def test_entry_bound(self):
        rng = np.random.default_rng(37)
        for n in (4, 8):
            values = rng.standard_normal(2**n) * 3.0
            bound = np.sqrt(2**n) * np.max(np.abs(values))
            for _ in range(20):
                theta = PolicyParameter(rng.uniform(0, 1, size=n))
                i = int(rng.integers(1, n + 1))
                j = int(rng.integers(1, n + 1))
                assert (
                    abs(hessian_entry_from_table(values, theta, i, j)) <= bound + 1e-12
                )

    def test_position_out_of_range(self):
        values = np.zeros(4)
        with pytest.raises(IndexError):
            hessian_entry_from_table(values, policy(0.5, 0.5), 0, 1)
