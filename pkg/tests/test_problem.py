"""Problem instances: generator, evaluation, projection, Slater report."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from duca.errors import AssumptionViolatedError, DimMismatchError
from duca.problem import (
    Problem,
    StackedPoint,
    eval_gtilde,
    eval_objective,
    generate_example,
    gtilde_rows,
    project_ball,
    slater_check,
    subgradient_f,
)

SVI = generate_example(20, 3, 1, 5, seed=42)


def single_agent(P, Q, a=None, c=4.0, a_prime=None, c_prime=None, B=None,
                 c_eq=None, l1_weight=1.0):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    d = P.shape[0]
    a = np.zeros(d) if a is None else np.asarray(a, dtype=float)
    a_prime = np.zeros((0, d)) if a_prime is None else np.asarray(a_prime, dtype=float)
    m = a_prime.shape[0]
    c_prime = np.zeros(m) if c_prime is None else np.asarray(c_prime, dtype=float)
    B = np.zeros((0, d)) if B is None else np.asarray(B, dtype=float)
    p = B.shape[0]
    c_eq = np.zeros(p) if c_eq is None else np.asarray(c_eq, dtype=float)
    return Problem.from_agent_data(
        P=[P], Q=[Q], a=[a], c=[c], a_prime=[a_prime], c_prime=[c_prime],
        B=[B], c_eq=[c_eq], l1_weight=l1_weight,
    )


class TestGenerateExample:
    def test_svi_sizes(self):
        pb = SVI
        assert pb.n_agents == 20 and pb.dims == (3,) * 20
        assert pb.m == 1 and pb.p == 5
        assert pb.P.shape == (20, 3, 3) and pb.B.shape == (20, 5, 3)

    def test_bit_reproducible(self):
        pb2 = generate_example(20, 3, 1, 5, seed=42)
        for name in ("P", "Q", "a", "c", "a_prime", "c_prime", "B", "c_eq"):
            np.testing.assert_array_equal(getattr(SVI, name), getattr(pb2, name))

    def test_seed_changes_data(self):
        pb2 = generate_example(20, 3, 1, 5, seed=43)
        assert not np.array_equal(SVI.Q, pb2.Q)

    def test_inequality_slack_positive(self):
        slack = np.sum(SVI.c_prime) - np.sum(SVI.a_prime**2)
        assert slack > 0

    def test_slater_point_at_zero(self):
        zero = StackedPoint.zeros(SVI.dims)
        gt = gtilde_rows(SVI, zero.rows())
        assert (gt[:, : SVI.m].sum(axis=0) < 0).all()
        np.testing.assert_allclose(gt[:, SVI.m :].sum(axis=0), 0.0, atol=1e-14)
        interior = SVI.c - np.sum(SVI.a**2, axis=1)
        assert (interior > 0).all()

    def test_p_matrices_psd(self):
        assert np.linalg.eigvalsh(SVI.P).min() >= -1e-12


class TestProblemValidation:
    def test_rejects_asymmetric_p(self):
        with pytest.raises(AssumptionViolatedError):
            single_agent(P=[[1.0, 2.0], [0.0, 1.0]], Q=np.zeros(2))

    def test_rejects_indefinite_p(self):
        with pytest.raises(AssumptionViolatedError):
            single_agent(P=[[-1.0]], Q=[0.0])

    def test_rejects_ball_excluding_zero(self):
        with pytest.raises(AssumptionViolatedError):
            single_agent(P=[[1.0]], Q=[0.0], a=[3.0], c=4.0)  # ||a||^2 = 9 > 4

    def test_rejects_nonpositive_coupling_slack(self):
        with pytest.raises(AssumptionViolatedError):
            single_agent(
                P=[[1.0]], Q=[0.0],
                a_prime=[[2.0]], c_prime=[1.0],  # c' < ||a'||^2
            )

    def test_rejects_padding_violation(self):
        pb = generate_example(3, 2, 1, 1, seed=0)
        bad_Q = pb.Q.copy()
        with pytest.raises(DimMismatchError):
            Problem(
                n_agents=3, dims=(2, 1, 2), m=1, p=1,
                P=pb.P, Q=bad_Q, a=pb.a, c=pb.c,
                a_prime=pb.a_prime, c_prime=pb.c_prime, B=pb.B, c_eq=pb.c_eq,
            )  # agent 1 declared 1-dimensional but has nonzero padded data


class TestStackedPoint:
    def test_views_and_rows_round_trip(self):
        pt = StackedPoint(x=np.arange(6.0), dims=(2, 1, 3))
        np.testing.assert_array_equal(pt.agent(0), [0.0, 1.0])
        np.testing.assert_array_equal(pt.agent(1), [2.0])
        np.testing.assert_array_equal(pt.agent(2), [3.0, 4.0, 5.0])
        rows = pt.rows()
        assert rows.shape == (3, 3)
        np.testing.assert_array_equal(rows[1], [2.0, 0.0, 0.0])
        back = StackedPoint.from_rows(rows, (2, 1, 3))
        np.testing.assert_array_equal(back.x, pt.x)

    def test_length_mismatch_rejected(self):
        with pytest.raises(DimMismatchError):
            StackedPoint(x=np.zeros(5), dims=(2, 2))


class TestEvalObjective:
    def test_zero_point_gives_zero(self):
        assert eval_objective(SVI, StackedPoint.zeros(SVI.dims)) == 0.0

    def test_identity_quadratic_example(self):
        pb = single_agent(P=np.eye(2), Q=np.zeros(2), c=9.0)
        val = eval_objective(pb, np.array([1.0, -1.0]))
        assert val == pytest.approx(4.0)  # 2 (quad) + 0 (lin) + 2 (l1)

    def test_accepts_stacked_point_and_raw_vector(self):
        x = np.linspace(-1, 1, SVI.total_dim)
        v1 = eval_objective(SVI, x)
        v2 = eval_objective(SVI, StackedPoint(x=x, dims=SVI.dims))
        assert v1 == v2

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            eval_objective(SVI, np.zeros(7))

    def test_matches_per_agent_formula(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=SVI.total_dim)
        pt = StackedPoint(x=x, dims=SVI.dims)
        total = 0.0
        for i in range(SVI.n_agents):
            data = SVI.agent_data(i)
            xi = pt.agent(i)
            total += xi @ data["P"] @ xi + data["Q"] @ xi + np.abs(xi).sum()
        assert eval_objective(SVI, pt) == pytest.approx(total, rel=1e-12)


class TestEvalGtilde:
    def test_single_agent_example(self):
        pb = single_agent(
            P=[[0.0]], Q=[0.0], c=9.0,
            a_prime=[[0.0]], c_prime=[1.0], B=[[2.0]], c_eq=[0.0],
        )
        out = eval_gtilde(pb, np.array([1.0]))
        np.testing.assert_allclose(out, [0.0, 2.0])  # (1-0)^2 - 1 = 0; 2*1 = 2

    def test_interleaving_layout(self):
        out = eval_gtilde(SVI, StackedPoint.zeros(SVI.dims))
        assert out.shape == (20 * 6,)
        rows = out.reshape(20, 6)
        np.testing.assert_array_equal(
            rows, gtilde_rows(SVI, np.zeros((20, 3)))
        )

    def test_permuting_agents_permutes_blocks(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=SVI.total_dim)
        perm = rng.permutation(20)
        pb2 = Problem(
            n_agents=20, dims=SVI.dims, m=1, p=5,
            P=SVI.P[perm], Q=SVI.Q[perm], a=SVI.a[perm], c=SVI.c[perm],
            a_prime=SVI.a_prime[perm], c_prime=SVI.c_prime[perm],
            B=SVI.B[perm], c_eq=SVI.c_eq[perm],
        )
        rows = eval_gtilde(SVI, x).reshape(20, 6)
        x_rows = StackedPoint(x=x, dims=SVI.dims).rows()
        x2 = StackedPoint.from_rows(x_rows[perm], SVI.dims)
        rows2 = eval_gtilde(pb2, x2).reshape(20, 6)
        np.testing.assert_allclose(rows2, rows[perm])

    def test_affine_equality_block(self):
        rng = np.random.default_rng(4)
        u = rng.normal(size=SVI.total_dim)
        w = rng.normal(size=SVI.total_dim)
        theta = 0.3
        lhs = eval_gtilde(SVI, theta * u + (1 - theta) * w).reshape(20, 6)[:, 1:]
        rhs = (
            theta * eval_gtilde(SVI, u).reshape(20, 6)[:, 1:]
            + (1 - theta) * eval_gtilde(SVI, w).reshape(20, 6)[:, 1:]
        )
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestProjectBall:
    def test_outside_axis_aligned(self):
        np.testing.assert_allclose(
            project_ball(np.zeros(2), 1.0, np.array([2.0, 0.0])), [1.0, 0.0]
        )

    def test_inside_returns_same(self):
        x = np.array([0.3, -0.2])
        np.testing.assert_array_equal(project_ball(np.zeros(2), 1.0, x), x)

    def test_shifted_center(self):
        out = project_ball(np.array([1.0, 1.0]), 4.0, np.array([5.0, 1.0]))
        np.testing.assert_allclose(out, [3.0, 1.0])

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.normal(size=3)
            c = float(rng.uniform(0.1, 2.0))
            x = rng.normal(size=3) * 3
            p1 = project_ball(a, c, x)
            p2 = project_ball(a, c, p1)
            assert np.linalg.norm(p2 - p1) <= 1e-14

    @given(
        data=hnp.arrays(np.float64, (2, 3), elements=st.floats(-10, 10)),
        a=hnp.arrays(np.float64, 3, elements=st.floats(-3, 3)),
        c=st.floats(0.01, 9.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_nonexpansive(self, data, a, c):
        px = project_ball(a, c, data[0])
        py = project_ball(a, c, data[1])
        assert np.linalg.norm(px - py) <= np.linalg.norm(data[0] - data[1]) + 1e-12


class TestSubgradient:
    def test_sign_convention(self):
        pb = single_agent(P=np.zeros((3, 3)), Q=np.zeros(3), c=1.0)
        out = subgradient_f(pb, 0, np.array([1.0, -2.0, 0.0]))
        np.testing.assert_array_equal(out, [1.0, -1.0, 0.0])

    def test_linear_term(self):
        q = np.ones(3)
        pb = single_agent(P=np.eye(3), Q=q, c=1.0)
        np.testing.assert_array_equal(subgradient_f(pb, 0, np.zeros(3)), q)

    def test_finite_difference_smooth_part(self):
        i = 4
        data = SVI.agent_data(i)
        rng = np.random.default_rng(6)
        x = rng.uniform(0.2, 1.0, size=3)  # away from the l1 kinks
        grad = subgradient_f(SVI, i, x)
        h = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fp = x + e
            fm = x - e
            smooth = lambda z: z @ data["P"] @ z + data["Q"] @ z + np.abs(z).sum()
            fd = (smooth(fp) - smooth(fm)) / (2 * h)
            assert grad[k] == pytest.approx(fd, abs=1e-5)


class TestConvexity:
    def test_objective_and_inequalities_convex_equalities_affine(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            u = rng.normal(size=SVI.total_dim)
            w = rng.normal(size=SVI.total_dim)
            theta = float(rng.uniform(0.05, 0.95))
            mid = theta * u + (1 - theta) * w
            f_mid = eval_objective(SVI, mid)
            f_bound = theta * eval_objective(SVI, u) + (1 - theta) * eval_objective(SVI, w)
            assert f_mid <= f_bound + 1e-9
            gu = eval_gtilde(SVI, u).reshape(20, 6)
            gw = eval_gtilde(SVI, w).reshape(20, 6)
            gm = eval_gtilde(SVI, mid).reshape(20, 6)
            assert (gm[:, :1] <= theta * gu[:, :1] + (1 - theta) * gw[:, :1] + 1e-9).all()
            np.testing.assert_allclose(
                gm[:, 1:], theta * gu[:, 1:] + (1 - theta) * gw[:, 1:], atol=1e-12
            )


class TestSlaterCheck:
    def test_generated_instance_passes(self):
        assert slater_check(SVI).passed

    def test_fails_when_zero_outside_ball(self):
        pb = generate_example(3, 2, 1, 1, seed=0)
        bad = Problem(
            n_agents=3, dims=pb.dims, m=1, p=1,
            P=pb.P, Q=pb.Q, a=pb.a, c=np.sum(pb.a**2, axis=1) * 0.5,
            a_prime=pb.a_prime, c_prime=pb.c_prime, B=pb.B, c_eq=pb.c_eq,
            validate=False,
        )
        report = slater_check(bad)
        failed = [c.name for c in report.checks if not c.passed]
        assert "0 interior to every local ball" in failed

    def test_fails_on_shifted_equalities(self):
        pb = generate_example(3, 2, 1, 1, seed=0)
        shifted = Problem(
            n_agents=3, dims=pb.dims, m=1, p=1,
            P=pb.P, Q=pb.Q, a=pb.a, c=pb.c, a_prime=pb.a_prime,
            c_prime=pb.c_prime, B=pb.B, c_eq=pb.c_eq + 1.0,
        )
        report = slater_check(shifted)
        assert not report.passed
        failed = [c.name for c in report.checks if not c.passed]
        assert "coupled equality sums vanish at 0" in failed

    def test_report_lines_render(self):
        text = str(slater_check(SVI))
        assert text.count("[PASS]") == 3
