"""Graphs, weight matrices, and parameter settings."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duca.errors import (
    AssumptionViolatedError,
    DisconnectedError,
    InvalidEdgeError,
    MissingTuningError,
    PatternMismatchError,
)
from duca.graphs import (
    ParamSetting,
    Variant,
    build_graph,
    export_matrix_csv,
    laplacian_from_weights,
    make_setting,
    metropolis_matrix,
    random_connected_graph,
    spectral_quantities,
    validate_setting,
)

TRIANGLE = build_graph(3, [(0, 1), (1, 2), (0, 2)])
PATH2 = build_graph(2, [(0, 1)])
ALL_VARIANTS = list(Variant)


def default_tuning(variant):
    if variant == Variant.PGC:
        return {"rho_prime": 0.5}
    if variant == Variant.DPGA:
        return {"c": 1.0}
    return None


def default_rho(variant):
    return 1.0


def make_default(variant, g, alpha=0.0):
    return make_setting(variant, g, rho=default_rho(variant), alpha=alpha,
                        tuning=default_tuning(variant))


# ---------------------------------------------------------------------------
# build_graph
# ---------------------------------------------------------------------------


class TestBuildGraph:
    def test_neighbors_sorted_and_canonical_edges(self):
        g = build_graph(4, [(3, 0), (1, 0), (2, 1), (3, 2)])
        assert g.edges == ((0, 1), (0, 3), (1, 2), (2, 3))
        assert g.neighbor_lists == ((1, 3), (0, 2), (1, 3), (0, 2))
        assert g.degree(0) == 2

    def test_rejects_self_loop(self):
        with pytest.raises(InvalidEdgeError):
            build_graph(3, [(0, 0), (0, 1), (1, 2)])

    def test_rejects_duplicate_even_if_flipped(self):
        with pytest.raises(InvalidEdgeError):
            build_graph(3, [(0, 1), (1, 0), (1, 2)])

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidEdgeError):
            build_graph(3, [(0, 3)])

    def test_rejects_disconnected(self):
        with pytest.raises(DisconnectedError):
            build_graph(4, [(0, 1), (2, 3)])

    def test_single_node(self):
        g = build_graph(1, [])
        assert g.n_nodes == 1 and g.n_edges == 0


class TestRandomConnectedGraph:
    def test_deterministic(self):
        a = random_connected_graph(20, 40, seed=7)
        b = random_connected_graph(20, 40, seed=7)
        assert a.edges == b.edges

    def test_seed_changes_graph(self):
        a = random_connected_graph(20, 40, seed=7)
        b = random_connected_graph(20, 40, seed=8)
        assert a.edges != b.edges

    def test_edge_count_bounds(self):
        with pytest.raises(InvalidEdgeError):
            random_connected_graph(5, 3, seed=0)
        with pytest.raises(InvalidEdgeError):
            random_connected_graph(5, 11, seed=0)

    @given(
        n=st.integers(min_value=2, max_value=12),
        extra=st.integers(min_value=0, max_value=10),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_always_connected_with_requested_edges(self, n, extra, seed):
        n_edges = min(n - 1 + extra, n * (n - 1) // 2)
        g = random_connected_graph(n, n_edges, seed=seed)
        assert g.n_edges == n_edges  # build_graph already enforced connectivity


# ---------------------------------------------------------------------------
# metropolis_matrix / laplacian_from_weights
# ---------------------------------------------------------------------------


class TestMetropolis:
    def test_triangle_exact(self):
        M = metropolis_matrix(TRIANGLE)
        expected = np.array(
            [
                [2 / 3, -1 / 3, -1 / 3],
                [-1 / 3, 2 / 3, -1 / 3],
                [-1 / 3, -1 / 3, 2 / 3],
            ]
        )
        np.testing.assert_allclose(M, expected, atol=1e-15)

    def test_path2_exact(self):
        M = metropolis_matrix(PATH2)
        np.testing.assert_allclose(M, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)

    def test_uses_max_degree(self):
        # star: center degree 3, leaves degree 1 -> off-diag -1/4 everywhere
        g = build_graph(4, [(0, 1), (0, 2), (0, 3)])
        M = metropolis_matrix(g)
        assert M[0, 1] == M[1, 0] == -1 / 4
        assert M[1, 1] == 1 / 4
        assert M[0, 0] == 3 / 4
        assert M[1, 2] == 0.0

    def test_zero_row_sums(self):
        g = random_connected_graph(20, 40, seed=3)
        M = metropolis_matrix(g)
        np.testing.assert_allclose(M @ np.ones(20), 0.0, atol=1e-14)

    def test_20_node_40_edge_pattern(self):
        g = random_connected_graph(20, 40, seed=3)
        M = metropolis_matrix(g)
        off = M - np.diag(np.diag(M))
        assert int((off < 0).sum()) == 80  # each of 40 edges twice
        assert int((off > 0).sum()) == 0

    @given(
        n=st.integers(min_value=2, max_value=10),
        extra=st.integers(min_value=0, max_value=8),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=40, deadline=None)
    def test_psd_with_ones_nullspace(self, n, extra, seed):
        n_edges = min(n - 1 + extra, n * (n - 1) // 2)
        g = random_connected_graph(n, n_edges, seed=seed)
        M = metropolis_matrix(g)
        vals = np.linalg.eigvalsh(M)
        assert vals[0] > -1e-12
        assert abs(vals[0]) < 1e-12
        if n > 1:
            assert vals[1] > 1e-10  # connected -> single zero eigenvalue


class TestLaplacianFromWeights:
    def test_unit_weights_give_combinatorial_laplacian(self):
        W = np.zeros((3, 3))
        for i, j in TRIANGLE.edges:
            W[i, j] = W[j, i] = 1.0
        L = laplacian_from_weights(W, TRIANGLE)
        np.testing.assert_allclose(L, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])

    def test_self_weight_cancels(self):
        W = np.zeros((2, 2))
        W[0, 1] = W[1, 0] = 3.0
        L0 = laplacian_from_weights(W, PATH2)
        W[0, 0] = 5.0
        L1 = laplacian_from_weights(W, PATH2)
        np.testing.assert_allclose(L0, L1)
        np.testing.assert_allclose(L0, [[3.0, -3.0], [-3.0, 3.0]])

    def test_rejects_asymmetric(self):
        W = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(PatternMismatchError):
            laplacian_from_weights(W, PATH2)

    def test_rejects_weight_off_graph(self):
        g = build_graph(3, [(0, 1), (1, 2)])
        W = np.zeros((3, 3))
        W[0, 1] = W[1, 0] = 1.0
        W[1, 2] = W[2, 1] = 1.0
        W[0, 2] = W[2, 0] = 0.5  # not an edge
        with pytest.raises(PatternMismatchError):
            laplacian_from_weights(W, g)

    def test_rejects_nonpositive_edge_weight(self):
        W = np.zeros((2, 2))
        with pytest.raises(PatternMismatchError):
            laplacian_from_weights(W, PATH2)

    def test_rejects_negative_self_weight(self):
        W = np.array([[-1.0, 1.0], [1.0, 0.0]])
        with pytest.raises(PatternMismatchError):
            laplacian_from_weights(W, PATH2)


# ---------------------------------------------------------------------------
# make_setting: the six named parameterizations
# ---------------------------------------------------------------------------


class TestMakeSetting:
    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_all_variants_validate_on_svi_graph(self, variant):
        g = random_connected_graph(20, 40, seed=3)
        s = make_default(variant, g)
        assert validate_setting(s).passed

    def test_duca_i_matrices(self):
        s = make_default(Variant.DUCA_I, TRIANGLE)
        M = metropolis_matrix(TRIANGLE)
        np.testing.assert_allclose(s.P_H, M)
        np.testing.assert_allclose(s.P_Htilde, M)
        np.testing.assert_allclose(s.P_D, 2.0 * np.diag(np.diag(M)))
        assert s.exchange_mode == "single"

    def test_duca_i_c_below_two_rejected(self):
        with pytest.raises(AssumptionViolatedError):
            make_setting(Variant.DUCA_I, TRIANGLE, rho=1.0, tuning={"c": 1.5})

    def test_pextra_matrices(self):
        s = make_setting(Variant.PEXTRA, TRIANGLE, rho=2.0)
        M = metropolis_matrix(TRIANGLE)
        np.testing.assert_allclose(s.P_H, M / 2)
        np.testing.assert_allclose(s.P_Htilde, M / 2)
        np.testing.assert_allclose(s.P_D, 2.0 * np.eye(3))

    def test_pgc_path2_exact(self):
        s = make_setting(Variant.PGC, PATH2, rho=1.0, tuning={"rho_prime": 1.0})
        np.testing.assert_allclose(2 * s.P_H, [[2.0, -2.0], [-2.0, 2.0]])
        np.testing.assert_allclose(s.P_D, np.diag([2.0, 2.0]))
        assert s.rho == 1.0

    def test_pgc_requires_rho_prime(self):
        with pytest.raises(MissingTuningError):
            make_setting(Variant.PGC, PATH2, rho=1.0)

    def test_pgc_rejects_rho_not_one(self):
        with pytest.raises(AssumptionViolatedError):
            make_setting(Variant.PGC, PATH2, rho=2.0, tuning={"rho_prime": 1.0})

    def test_dpga_requires_c(self):
        with pytest.raises(MissingTuningError):
            make_setting(Variant.DPGA, TRIANGLE, rho=1.0)

    def test_dpga_scaling(self):
        # triangle: N=3, |E|=3, min degree 2 -> s = sqrt(c*3/(3*2)) = sqrt(c/2)
        c = 1.0
        s = make_setting(Variant.DPGA, TRIANGLE, rho=1.0, tuning={"c": c})
        scale = np.sqrt(c / 2.0)
        assert s.P_H[0, 1] == pytest.approx(-scale / 2)
        np.testing.assert_allclose(np.diag(s.P_D), 2 * scale)

    def test_dist_admm_triangle_pd(self):
        s = make_default(Variant.DIST_ADMM, TRIANGLE)
        # each row of M has entries {2/3, -1/3, -1/3}; degrees all 2 so
        # d'_i = sum_j (deg_j + 1) M_ij^2 = 3*(4/9 + 1/9 + 1/9) = 2
        np.testing.assert_allclose(np.diag(s.P_D), 2.0)
        M = metropolis_matrix(TRIANGLE)
        np.testing.assert_allclose(s.P_H, M @ M)
        np.testing.assert_allclose(s.P_Htilde, M @ M)
        assert s.exchange_mode == "double"

    def test_alt_factorization(self):
        s = make_default(Variant.ALT, TRIANGLE)
        M = metropolis_matrix(TRIANGLE)
        W4 = np.eye(3) - M / 2
        np.testing.assert_allclose(s.P_H, np.eye(3) - W4 @ W4, atol=1e-14)
        np.testing.assert_allclose(s.P_Htilde, (np.eye(3) - W4) @ (np.eye(3) - W4), atol=1e-14)
        np.testing.assert_allclose(s.L_matrix, M / 2)
        np.testing.assert_allclose(s.M_matrix, 2 * np.eye(3) - M / 2)
        assert s.exchange_mode == "double"

    def test_rejects_unknown_tuning_key(self):
        with pytest.raises(MissingTuningError):
            make_setting(Variant.PEXTRA, TRIANGLE, rho=1.0, tuning={"beta": 1.0})

    def test_rejects_nonpositive_rho(self):
        with pytest.raises(AssumptionViolatedError):
            make_setting(Variant.PEXTRA, TRIANGLE, rho=0.0)

    def test_rejects_negative_alpha(self):
        with pytest.raises(AssumptionViolatedError):
            make_setting(Variant.PEXTRA, TRIANGLE, rho=1.0, alpha=-0.1)

    def test_variant_accepts_string(self):
        s = make_setting("PEXTRA", TRIANGLE, rho=1.0)
        assert s.variant is Variant.PEXTRA

    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    @pytest.mark.parametrize("seed", [0, 11])
    def test_psd_chain_random_graphs(self, variant, seed):
        g = random_connected_graph(9, 14, seed=seed)
        s = make_default(variant, g)
        for M in (s.P_H, s.P_Htilde, s.P_A, s.P_H - s.P_Htilde):
            assert np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= -1e-9
        assert (s.d_prime > 0).all()


# ---------------------------------------------------------------------------
# validate_setting on hand-built bad settings
# ---------------------------------------------------------------------------


def _hand_setting(**kw):
    M = metropolis_matrix(TRIANGLE)
    base = dict(
        variant=Variant.DUCA_I,
        P_H=M,
        P_Htilde=M.copy(),
        P_D=2.0 * np.diag(np.diag(M)),
        rho=1.0,
    )
    base.update(kw)
    return ParamSetting(**base)


class TestValidateSetting:
    def test_pd_too_small_fails_pa_psd(self):
        M = metropolis_matrix(TRIANGLE)
        s = _hand_setting(P_D=0.1 * np.diag(np.diag(M)))
        report = validate_setting(s)
        assert not report.passed
        failed = {c.name for c in report.checks if not c.passed}
        assert "P_A = P_D - rho*P_H PSD" in failed

    def test_phtilde_bigger_than_ph_fails_order(self):
        M = metropolis_matrix(TRIANGLE)
        s = _hand_setting(P_Htilde=2.0 * M)
        report = validate_setting(s)
        failed = {c.name for c in report.checks if not c.passed}
        assert "P_H >= P_Htilde (PSD order)" in failed

    def test_wrong_nullspace_detected(self):
        bad = np.diag([1.0, 1.0, 0.0])  # null direction e3, not ones
        s = _hand_setting(P_H=bad, P_Htilde=bad, P_D=2 * np.eye(3))
        report = validate_setting(s)
        failed = {c.name for c in report.checks if not c.passed}
        assert any("ones direction" in name for name in failed)

    def test_indefinite_ph_detected(self):
        bad = np.array([[0.0, 1.0, -1.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        s = _hand_setting(P_H=bad)
        report = validate_setting(s)
        assert not report.passed

    def test_report_renders_pass_fail_lines(self):
        s = make_default(Variant.PEXTRA, TRIANGLE)
        text = str(validate_setting(s))
        assert "[PASS]" in text and "[FAIL]" not in text

    def test_double_mode_factorization_checked(self):
        s = make_default(Variant.ALT, TRIANGLE)
        s.P_H = s.P_H + 1e-6 * np.eye(3)
        report = validate_setting(s)
        failed = {c.name for c in report.checks if not c.passed}
        assert "P_H == L @ M" in failed


# ---------------------------------------------------------------------------
# spectral_quantities
# ---------------------------------------------------------------------------


class TestSpectralQuantities:
    def test_path2_pextra_pinv(self):
        s = make_setting(Variant.PEXTRA, PATH2, rho=1.0)
        # P_Htilde = M/2 = [[1/4, -1/4], [-1/4, 1/4]]; eigen 0 and 1/2
        q = spectral_quantities(s)
        assert q.lamNm1_PHtilde == pytest.approx(0.5)
        np.testing.assert_allclose(q.pinv_PHtilde, [[1.0, -1.0], [-1.0, 1.0]], atol=1e-12)

    def test_path2_laplacian_pinv(self):
        # PGC with rho_prime=1 on the 2-path gives P_Htilde = [[1,-1],[-1,1]],
        # eigenvalues {0, 2}, pseudo-inverse (1/4)[[1,-1],[-1,1]].
        s = make_setting(Variant.PGC, PATH2, rho=1.0, tuning={"rho_prime": 1.0})
        np.testing.assert_allclose(s.P_Htilde, [[1.0, -1.0], [-1.0, 1.0]])
        q = spectral_quantities(s)
        assert q.lamNm1_PHtilde == pytest.approx(2.0)
        np.testing.assert_allclose(
            q.pinv_PHtilde, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-12
        )

    def test_triangle_metropolis_second_eigenvalue(self):
        # On the triangle the Metropolis matrix is I - J/3: eigenvalues {0, 1, 1}.
        s = make_setting(Variant.DUCA_I, TRIANGLE, rho=1.0)
        q = spectral_quantities(s)
        assert q.lamNm1_PHtilde == pytest.approx(1.0)

    def test_pinv_identity_on_range(self):
        g = random_connected_graph(8, 12, seed=5)
        s = make_default(Variant.DIST_ADMM, g)
        q = spectral_quantities(s)
        n = 8
        proj = np.eye(n) - np.ones((n, n)) / n
        np.testing.assert_allclose(q.pinv_PHtilde @ s.P_Htilde, proj, atol=1e-9)

    def test_zero_pa_edge_case(self):
        # A direct (unvalidated) setting with P_D = rho * P_H so P_A = 0.
        M = metropolis_matrix(PATH2)
        s = ParamSetting(
            variant=Variant.DUCA_I,
            P_H=np.diag(np.diag(M)) * 2,  # diagonal "Laplacian" stand-in
            P_Htilde=M,
            P_D=2.0 * np.diag(np.diag(M)),
            rho=1.0,
        )
        q = spectral_quantities(s)
        assert q.lam1_PA == 0.0

    def test_lam1_pa_matches_eigh(self):
        g = random_connected_graph(12, 20, seed=9)
        for variant in ALL_VARIANTS:
            s = make_default(variant, g)
            lam = np.linalg.eigvalsh(0.5 * (s.P_A + s.P_A.T))[-1]
            assert spectral_quantities(s).lam1_PA == pytest.approx(max(lam, 0.0))


# ---------------------------------------------------------------------------
# export_matrix_csv
# ---------------------------------------------------------------------------


class TestExportMatrixCsv:
    def test_round_trip_exact(self, tmp_path):
        M = np.array([[1 / 3, -2 / 7], [np.pi, 1e-17]])
        path = tmp_path / "m.csv"
        text = export_matrix_csv(M, path)
        assert path.read_text() == text
        back = np.array(
            [[float(v) for v in line.split(",")] for line in text.strip().split("\n")]
        )
        np.testing.assert_array_equal(back, M)  # 17 significant digits round-trip

    def test_vector_rendered_as_row(self):
        text = export_matrix_csv(np.array([1.0, 2.0]))
        assert text == "1,2\n"
