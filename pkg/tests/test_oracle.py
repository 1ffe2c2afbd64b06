"""Tests for the centralized reference solvers (method of multipliers + grid)."""

import numpy as np
import pytest

from duca.errors import InfeasibleProblemError, TooLargeError
from duca.localsolver import dual_value_batch
from duca.oracle import (
    CertificateCore,
    centralized_solve,
    duality_gap_check,
    grid_oracle,
)
from duca.problem import Problem, generate_example


def quadratic_single_agent(m=0):
    """f(x) = x^2 - 4x + |x| on the ball |x| <= 3, optionally with g(x) = x^2 - 1."""
    if m:
        a_prime = [np.zeros((1, 1))]
        c_prime = [np.ones(1)]
    else:
        a_prime = [np.zeros((0, 1))]
        c_prime = [np.zeros(0)]
    return Problem.from_agent_data(
        P=[[[1.0]]],
        Q=[[-4.0]],
        a=[[0.0]],
        c=[9.0],
        a_prime=a_prime,
        c_prime=c_prime,
        B=[np.zeros((0, 1))],
        c_eq=[np.zeros(0)],
        l1_weight=1.0,
    )


def linear_pair_with_equality():
    """f_i(x_i) = x_i on [-1, 1], coupled by x_1 + x_2 = 0."""
    return Problem.from_agent_data(
        P=[[[0.0]], [[0.0]]],
        Q=[[1.0], [1.0]],
        a=[[0.0], [0.0]],
        c=[1.0, 1.0],
        a_prime=[np.zeros((0, 1)), np.zeros((0, 1))],
        c_prime=[np.zeros(0), np.zeros(0)],
        B=[[[1.0]], [[1.0]]],
        c_eq=[[0.0], [0.0]],
        l1_weight=0.0,
    )


def infeasible_single_agent():
    """Ball around 0, coupled inequality centered far away: empty feasible set."""
    return Problem(
        n_agents=1,
        dims=(1,),
        m=1,
        p=0,
        P=np.zeros((1, 1, 1)),
        Q=np.zeros((1, 1)),
        a=np.zeros((1, 1)),
        c=np.array([1.0]),
        a_prime=np.full((1, 1, 1), 10.0),
        c_prime=np.ones((1, 1)),
        B=np.zeros((1, 0, 1)),
        c_eq=np.zeros((1, 0)),
        l1_weight=0.0,
        validate=False,
    )


class TestCentralizedSolve:
    def test_single_agent_quadratic(self):
        # min x^2 - 4x + |x| is at 2x - 4 + 1 = 0, i.e. x = 1.5, value -2.25.
        core = centralized_solve(quadratic_single_agent(), tol=1e-9)
        assert core.f_star == pytest.approx(-2.25, abs=1e-8)
        assert core.x_star.x[0] == pytest.approx(1.5, abs=1e-7)
        assert core.y_star.shape == (0,)

    def test_single_agent_with_active_inequality(self):
        # Adding x^2 <= 1 moves the optimum to x = 1 with multiplier 0.5.
        core = centralized_solve(quadratic_single_agent(m=1), tol=1e-9)
        assert core.f_star == pytest.approx(-2.0, abs=1e-8)
        assert core.x_star.x[0] == pytest.approx(1.0, abs=1e-7)
        assert core.y_star[0] == pytest.approx(0.5, abs=1e-6)
        assert core.stationarity <= 1e-9
        assert core.feasibility <= 1e-9

    def test_linear_pair_with_equality(self):
        # Both objectives pull down but the coupling pins x_1 + x_2 = 0.
        core = centralized_solve(linear_pair_with_equality(), tol=1e-9)
        assert core.f_star == pytest.approx(0.0, abs=1e-8)
        assert abs(core.x_star.x.sum()) <= 1e-8

    def test_certificate_fields_on_generated_instance(self):
        pb = generate_example(4, 2, 2, 1, seed=7)
        core = centralized_solve(pb, tol=1e-9)
        assert core.stationarity <= 1e-9
        assert core.feasibility <= 1e-9
        assert abs(core.complementarity) <= 1e-8
        assert core.kkt_residual == pytest.approx(
            max(core.stationarity, core.feasibility, abs(core.complementarity) / 10.0)
        )
        assert np.all(core.y_star[: pb.m] >= 0.0)

    def test_generated_family_minimizes_at_origin(self):
        # Every generated instance has |Q| < l1 weight coordinatewise, so the
        # origin is stationary for each f_i and strictly feasible for the
        # coupled constraints: the optimum is exactly zero.
        for seed in (0, 3, 11):
            pb = generate_example(5, 3, 2, 2, seed=seed)
            assert np.all(np.abs(pb.Q) < pb.l1_weight)
            core = centralized_solve(pb, tol=1e-9)
            assert core.f_star == pytest.approx(0.0, abs=1e-10)
            assert np.max(np.abs(core.x_star.x)) <= 1e-9
            assert np.max(np.abs(core.y_star)) <= 1e-9

    def test_infeasible_instance_raises(self):
        with pytest.raises(InfeasibleProblemError):
            centralized_solve(infeasible_single_agent())


class TestGridOracle:
    def test_matches_centralized_on_singleton(self):
        # Constraint slack scales with the inequality's Lipschitz constant (6
        # on the radius-3 ball), so the value can dip ~3x resolution below.
        got = grid_oracle(quadratic_single_agent(m=1), resolution=1e-5)
        assert got["f_best"] == pytest.approx(-2.0, abs=1e-4)
        assert got["x_best"][0] == pytest.approx(1.0, abs=1e-3)

    def test_equality_coupled_pair(self):
        got = grid_oracle(linear_pair_with_equality(), resolution=1e-5)
        assert abs(got["f_best"]) <= 2e-5

    def test_matches_centralized_on_generated_instances(self):
        for seed in (0, 1, 2):
            for n in (2, 3):
                pb = generate_example(n, 1, 1, 1, seed=seed)
                core = centralized_solve(pb, tol=1e-9)
                got = grid_oracle(pb, resolution=1e-4)
                assert abs(core.f_star - got["f_best"]) <= 2e-4

    def test_resolution_halving_never_hurts(self):
        pb = linear_pair_with_equality()
        errs = [abs(grid_oracle(pb, resolution=r)["f_best"]) for r in (1e-3, 5e-4, 2.5e-4)]
        for coarse, fine in zip(errs, errs[1:]):
            assert fine <= coarse + 1e-12

    def test_infeasible_instance_raises(self):
        with pytest.raises(InfeasibleProblemError):
            grid_oracle(infeasible_single_agent(), resolution=1e-3)

    def test_dimension_guard(self):
        with pytest.raises(TooLargeError):
            grid_oracle(generate_example(3, 2, 1, 1, seed=0), resolution=1e-3)


class TestDualityGap:
    def test_gap_zero_without_coupling(self):
        pb = quadratic_single_agent()
        core = centralized_solve(pb, tol=1e-9)
        assert duality_gap_check(core, pb, tol=1e-9) <= 1e-8

    def test_gap_small_on_generated_instance(self):
        pb = generate_example(4, 2, 2, 1, seed=7)
        core = centralized_solve(pb, tol=1e-9)
        assert duality_gap_check(core, pb, tol=1e-9) <= 1e-6

    def test_gap_small_with_active_multiplier(self):
        pb = quadratic_single_agent(m=1)
        core = centralized_solve(pb, tol=1e-9)
        assert duality_gap_check(core, pb, tol=1e-9) <= 1e-8

    def test_perturbed_multiplier_grows_gap(self):
        # Raising the inequality multiplier away from its optimum must push the
        # dual value strictly below the primal optimum.
        pb = generate_example(4, 2, 2, 1, seed=7)
        core = centralized_solve(pb, tol=1e-9)
        gap0 = duality_gap_check(core, pb, tol=1e-9)
        y_bad = core.y_star.copy()
        y_bad[: pb.m] += 0.5
        vals, _, _, done = dual_value_batch(pb, y_bad, tol=1e-10)
        assert done.all()
        gap_bad = abs(core.f_star - float(vals.sum()))
        assert gap_bad >= 100.0 * max(gap0, 1e-8)
        assert gap_bad >= 0.01
