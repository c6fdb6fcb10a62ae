import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdee.errors import DimensionMismatch, NonFiniteInput, TooLarge
from hdee.lp_core import (
    DantzigProblem,
    SolverConfig,
    Status,
    check_feasibility,
    enumerate_oracle,
    min_feasible_lambda,
    solve_dantzig,
)

ALL_CONFIGS = [
    SolverConfig(),
    SolverConfig(pricing="bland"),
    SolverConfig(method="primal"),
    SolverConfig(method="primal", pricing="bland"),
]


def random_problem(rng, m=None, p=None, feasible=True):
    m = m or int(rng.integers(1, 7))
    p = p or int(rng.integers(1, 7))
    A = rng.standard_normal((m, p))
    b = rng.standard_normal(m)
    lam = float(rng.uniform(0.05, 1.0))
    prob = DantzigProblem(A, b, lam)
    if feasible and min_feasible_lambda(A, b) >= lam:
        # shift b into reach
        b = A @ rng.standard_normal(p) + rng.uniform(-lam, lam, m) * 0.5
        prob = DantzigProblem(A, b, lam)
    return prob


class TestExamples:
    def test_identity_band(self):
        sol = solve_dantzig(DantzigProblem(np.eye(2), np.array([1.0, 0.5]), 0.25))
        assert sol.status is Status.OPTIMAL
        np.testing.assert_allclose(sol.x, [0.75, 0.25], atol=1e-12)
        assert sol.objective == pytest.approx(1.0)

    def test_origin_feasible(self):
        sol = solve_dantzig(DantzigProblem(np.eye(3), np.array([0.1, -0.2, 0.3]), 0.5))
        np.testing.assert_array_equal(sol.x, 0.0)
        assert sol.iterations == 0

    def test_exact_system(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, 2.0])
        sol = solve_dantzig(DantzigProblem(A, b, 0.0))
        np.testing.assert_allclose(A @ sol.x, b, atol=1e-12)

    def test_infeasible(self):
        # rank one A cannot reach b = (1, -1) within 0.1
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        for cfg in ALL_CONFIGS:
            sol = solve_dantzig(DantzigProblem(A, np.array([1.0, -1.0]), 0.1), cfg)
            assert sol.status is Status.INFEASIBLE

    def test_empty_dimensions(self):
        assert solve_dantzig(DantzigProblem(np.zeros((0, 3)), np.zeros(0), 0.1)).x.shape == (3,)
        sol = solve_dantzig(DantzigProblem(np.zeros((2, 0)), np.array([1.0, 0.0]), 0.5))
        assert sol.status is Status.INFEASIBLE


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            DantzigProblem(np.eye(2), np.zeros(3), 0.1)

    def test_nonfinite(self):
        with pytest.raises(NonFiniteInput):
            DantzigProblem(np.array([[np.nan]]), np.zeros(1), 0.1)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            DantzigProblem(np.eye(1), np.zeros(1), -1.0)

    def test_feasibility_length(self):
        with pytest.raises(DimensionMismatch):
            check_feasibility(DantzigProblem(np.eye(2), np.zeros(2), 0.1), np.zeros(3))

    def test_oracle_size_cap(self):
        with pytest.raises(TooLarge):
            enumerate_oracle(DantzigProblem(np.eye(7), np.zeros(7), 0.1))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            SolverConfig(method="interior")


class TestAgainstOracle:
    @pytest.mark.parametrize("cfg", ALL_CONFIGS, ids=["dual", "dual-bland", "primal", "primal-bland"])
    def test_random_instances(self, cfg):
        rng = np.random.default_rng(11)
        for _ in range(60):
            prob = random_problem(rng)
            sol = solve_dantzig(prob, cfg)
            ref = enumerate_oracle(prob)
            assert sol.status is ref.status
            if ref.optimal:
                assert abs(sol.objective - ref.objective) <= 1e-7
                assert sol.residual_inf <= prob.lam + 1e-9

    def test_degenerate_instances(self):
        # repeated rows and integer data make ties in both ratio tests
        rng = np.random.default_rng(5)
        for _ in range(40):
            base = rng.integers(-2, 3, size=(3, 4)).astype(float)
            A = np.vstack([base, base[:2]])
            b = rng.integers(-2, 3, size=5).astype(float)
            b[3:] = b[:2]
            prob = DantzigProblem(A, b, 0.5)
            ref = enumerate_oracle(prob)
            for cfg in ALL_CONFIGS:
                sol = solve_dantzig(prob, cfg)
                assert sol.status is ref.status
                if ref.optimal:
                    assert abs(sol.objective - ref.objective) <= 1e-7

    def test_rank_deficient_wide(self):
        # more columns than rows and duplicated columns
        rng = np.random.default_rng(8)
        for _ in range(30):
            A = rng.standard_normal((3, 4))
            A = np.hstack([A, A[:, :2]])
            prob = DantzigProblem(A, rng.standard_normal(3), 0.2)
            ref = enumerate_oracle(prob)
            sol = solve_dantzig(prob)
            assert abs(sol.objective - ref.objective) <= 1e-7


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_properties(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng)
    sol = solve_dantzig(prob)
    assert sol.optimal
    assert sol.residual_inf <= prob.lam + 1e-9
    assert sol.objective == pytest.approx(np.abs(sol.x).sum())
    # scaling (A, b, lam) by the same factor leaves the solution unchanged
    scaled = solve_dantzig(DantzigProblem(3.0 * prob.A, 3.0 * prob.b, 3.0 * prob.lam))
    assert scaled.objective == pytest.approx(sol.objective, abs=1e-8)


def test_objective_monotone_in_lambda():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((5, 5))
    b = rng.standard_normal(5)
    objs = [solve_dantzig(DantzigProblem(A, b, lam)).objective for lam in (0.0, 0.1, 0.3, 0.6, 1.0, 5.0)]
    assert all(x >= y - 1e-12 for x, y in zip(objs, objs[1:]))
    assert objs[-1] == 0.0


def test_min_feasible_lambda():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    # best fit of (1, -1) by multiples of (1, 1) has sup error 1
    assert min_feasible_lambda(A, np.array([1.0, -1.0])) == pytest.approx(1.0)
    assert min_feasible_lambda(np.eye(2), np.array([3.0, 4.0])) == 0.0
    lam = min_feasible_lambda(A, np.array([1.0, -1.0]))
    assert solve_dantzig(DantzigProblem(A, np.array([1.0, -1.0]), lam * 1.01)).optimal
    assert not solve_dantzig(DantzigProblem(A, np.array([1.0, -1.0]), lam * 0.99)).optimal


def test_moderate_size_against_independent_solver():
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(4)
    X = rng.standard_normal((40, 60))
    S = X.T @ X / 40
    e = np.zeros(60)
    e[0] = 1.0
    lam = 0.6
    sol = solve_dantzig(DantzigProblem(S, e, lam))
    assert sol.optimal
    A_ub = np.block([[S, -S], [-S, S]])
    ref = linprog(np.ones(120), A_ub=A_ub, b_ub=np.r_[e + lam, lam - e], bounds=(0, None), method="highs")
    assert sol.objective == pytest.approx(ref.fun, abs=1e-8)
