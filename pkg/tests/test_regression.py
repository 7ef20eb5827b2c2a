import numpy as np
import pytest

from bmselect.data import SSMRData, SubgroupData
from bmselect.exceptions import DataValidationError, DegenerateFitError, NumericalError
from bmselect.models import ModelConfig
from bmselect.regression import (
    active_cells,
    cell_information,
    cell_least_squares,
    cell_score,
    fit_mle,
    prepare,
    residualize,
    vg_inverse_times,
)

from conftest import full_model, make_dataset


def qr_projector_residual(controls, target):
    q, _ = np.linalg.qr(controls)
    return target - q @ (q.T @ target)


class TestResidualize:
    def test_intercept_only_centers_columns(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((25, 4))
        sub = SubgroupData(rng.standard_normal((25, 2)), np.ones((25, 1)), v)
        g = residualize(sub)
        np.testing.assert_allclose(g, v - v.mean(axis=0), atol=1e-12)

    def test_column_in_control_span_is_annihilated(self):
        rng = np.random.default_rng(1)
        c = np.column_stack([np.ones(30), rng.standard_normal(30)])
        xg = np.column_stack([c @ np.array([0.5, -2.0]), rng.standard_normal(30)])
        sub = SubgroupData(rng.standard_normal((30, 1)), c, xg)
        g = residualize(sub)
        np.testing.assert_allclose(g[:, 0], 0.0, atol=1e-10)

    def test_matches_qr_projector(self):
        rng = np.random.default_rng(2)
        c = np.column_stack([np.ones(20), rng.standard_normal((20, 2))])
        xg = rng.standard_normal((20, 5))
        sub = SubgroupData(rng.standard_normal((20, 2)), c, xg)
        g = residualize(sub)
        assert np.abs(g.T @ c).max() < 1e-10
        np.testing.assert_allclose(g, qr_projector_residual(c, xg), atol=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        c = np.column_stack([np.ones(30), rng.standard_normal(30)])
        sub = SubgroupData(rng.standard_normal((30, 2)), c, rng.standard_normal((30, 4)))
        g1 = residualize(sub)
        sub2 = SubgroupData(sub.responses, c, g1)
        np.testing.assert_allclose(residualize(sub2), g1, atol=1e-12)

    def test_rejects_non_finite(self):
        y = np.ones((5, 1))
        x = np.ones((5, 2))
        x[0, 0] = np.nan
        with pytest.raises(DataValidationError):
            SubgroupData(y, np.ones((5, 1)), x)


class TestFitMle:
    def test_empty_model_matches_null(self, small_data):
        data, _ = small_data
        mle = fit_mle(data, ModelConfig.null(data.p, data.s, data.r))
        assert np.all(mle.beta_g_hat == 0)
        for hat, tilde in zip(mle.sigma_hat, mle.sigma_tilde):
            np.testing.assert_allclose(hat, tilde, atol=1e-12)

    def test_matches_normal_equations(self):
        data, _ = make_dataset(s=2, r=2, p=3, n=30, seed=12, n_controls=2)
        model = full_model(data)
        mle = fit_mle(data, model)
        layout = data.layout
        for i, sub in enumerate(data.subgroups):
            x_full = np.column_stack([sub.controls, sub.candidates])
            coef, _, _, _ = np.linalg.lstsq(x_full, sub.responses, rcond=None)
            b_g = coef[sub.q:, :]
            got = mle.beta_g_hat[i * layout.p * layout.r:(i + 1) * layout.p * layout.r]
            np.testing.assert_allclose(got, b_g.ravel(), atol=1e-8)

    def test_duplicate_columns_leave_fit_unchanged(self):
        data, _ = make_dataset(s=1, r=2, p=2, n=25, seed=5)
        sub = data.subgroups[0]
        dup = np.column_stack([sub.candidates, sub.candidates[:, [0]]])
        data_dup = SSMRData.from_arrays([sub.responses], [dup], [sub.controls])
        model = ModelConfig.from_strings(["11", "11", "11"], 1, 2)
        mle = fit_mle(data_dup, model)
        base = fit_mle(data, ModelConfig.from_strings(["11", "11"], 1, 2))
        # fitted values (hence residual covariances) are unique under collinearity
        for a, b in zip(mle.sigma_hat, base.sigma_hat):
            np.testing.assert_allclose(a, b, atol=1e-8)
        assert np.all(np.isfinite(mle.beta_g_hat))

    def test_residual_monotonicity(self):
        data, _ = make_dataset(s=2, r=2, p=4, n=40, seed=9)
        rng = np.random.default_rng(1)
        null = prepare(data)
        small = ModelConfig.from_strings(["1100", "0000", "0000", "0000"], 2, 2)
        grown = ModelConfig.from_strings(["1100", "1111", "0011", "0000"], 2, 2)
        m1 = fit_mle(data, small, null)
        m2 = fit_mle(data, grown, null)
        for i in range(data.s):
            assert np.trace(m2.sigma_hat[i]) <= np.trace(m1.sigma_hat[i]) + 1e-9
            assert np.trace(m1.sigma_hat[i]) <= np.trace(m1.sigma_tilde[i]) + 1e-9

    def test_degenerate_fit_error(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((2, 1))
        c = np.column_stack([np.ones(2), [0.0, 1.0]])
        with pytest.raises(DegenerateFitError):
            prepare(SSMRData.from_arrays([y], [rng.standard_normal((2, 2))], [c]))

    def test_dimension_mismatch(self, small_data):
        data, _ = small_data
        with pytest.raises(DataValidationError):
            fit_mle(data, ModelConfig.null(data.p + 1, data.s, data.r))


class TestVgInverseTimes:
    def test_identity_map(self):
        # centered orthonormal candidates give G'G = I; with Sigma = I the
        # block precision is the identity
        rng = np.random.default_rng(4)
        n, p, r = 40, 3, 2
        raw = rng.standard_normal((n, p))
        x, _ = np.linalg.qr(raw - raw.mean(axis=0))
        y = rng.standard_normal((n, r))
        data = SSMRData.from_arrays([y], [x], [np.ones((n, 1))])
        mle = fit_mle(data, full_model(data))
        np.testing.assert_allclose(mle.vg_inv_factors[0], np.eye(p), atol=1e-10)
        v = rng.standard_normal(p * r)
        out = vg_inverse_times(mle, [np.eye(r)], v)
        np.testing.assert_allclose(out, v, atol=1e-10)

    def test_matches_dense_kronecker(self):
        data, sigmas = make_dataset(s=2, r=2, p=3, n=30, seed=8)
        mle = fit_mle(data, full_model(data))
        rng = np.random.default_rng(2)
        v = rng.standard_normal(data.s * data.p * data.r)
        out = vg_inverse_times(mle, sigmas, v)
        blocks = [np.kron(mle.vg_inv_factors[i], np.linalg.inv(sigmas[i])) for i in range(data.s)]
        dense = np.zeros((v.size, v.size))
        step = data.p * data.r
        for i, blk in enumerate(blocks):
            dense[i * step:(i + 1) * step, i * step:(i + 1) * step] = blk
        np.testing.assert_allclose(out, dense @ v, rtol=1e-10, atol=1e-10)

    def test_streaming_score_identity(self):
        # V^{-1} beta_hat equals the per-subgroup vec(Sigma^{-1} Y' G) stream
        data, sigmas = make_dataset(s=2, r=2, p=3, n=30, seed=21)
        null = prepare(data)
        model = full_model(data)
        mle = fit_mle(data, model, null)
        direct = vg_inverse_times(mle, sigmas, mle.beta_g_hat)
        cells = active_cells(model, data.layout)
        streamed = cell_score(null, cells, [np.linalg.inv(s) for s in sigmas])
        np.testing.assert_allclose(direct, streamed, rtol=1e-8, atol=1e-10)

    def test_singular_sigma_names_subgroup(self):
        data, _ = make_dataset(s=2, r=2, p=2, n=20, seed=1)
        mle = fit_mle(data, full_model(data))
        bad = [np.eye(2), np.zeros((2, 2))]
        with pytest.raises(NumericalError, match="subgroup 1"):
            vg_inverse_times(mle, bad, np.zeros(data.s * data.p * data.r))


class TestQuadraticFormIdentity:
    def test_streaming_equals_residual_cross_products(self):
        # beta' V^{-1} beta via the score stream equals the trace identity
        # from null-vs-target residual cross products
        data, sigmas = make_dataset(s=2, r=2, p=3, n=35, seed=14)
        null = prepare(data)
        model = full_model(data)
        cells = active_cells(model, data.layout)
        sig_inv = [np.linalg.inv(s) for s in sigmas]
        mle = fit_mle(data, model, null)
        u = cell_score(null, cells, sig_inv)
        m = cell_information(null, cells, sig_inv)
        quad_stream = u @ np.linalg.solve(m, u)
        quad_resid = 0.0
        for i, sub in enumerate(data.subgroups):
            diff = sub.n * (mle.sigma_tilde[i] - mle.sigma_hat[i])
            quad_resid += np.trace(sig_inv[i] @ diff)
        assert abs(quad_stream - quad_resid) <= 1e-8 * max(1.0, abs(quad_resid))


class TestRestrictedFit:
    def test_identity_basis_matches_unrestricted(self, small_data):
        data, _ = small_data
        null = prepare(data)
        model = ModelConfig.from_strings(["1111", "0110", "0000"], data.s, data.r)
        cells = active_cells(model, data.layout)
        beta1, sig1 = cell_least_squares(null, cells)
        beta2, sig2 = cell_least_squares(null, cells, basis=np.eye(cells.size))
        np.testing.assert_allclose(beta1, beta2, atol=1e-8)
        for a, b in zip(sig1, sig2):
            np.testing.assert_allclose(a, b, atol=1e-10)

    def test_rank_one_basis_forces_equal_coefficients(self):
        data, _ = make_dataset(s=1, r=2, p=1, n=40, seed=2)
        null = prepare(data)
        model = ModelConfig.from_strings(["11"], 1, 2)
        cells = active_cells(model, data.layout)
        basis = np.ones((2, 1)) / np.sqrt(2)
        beta, _ = cell_least_squares(null, cells, basis=basis)
        assert abs(beta[0] - beta[1]) < 1e-12
