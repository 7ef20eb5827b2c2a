import itertools
import json
import math

import numpy as np
import pytest

from bmselect.exceptions import DataValidationError, NumericalError
from bmselect.models import ModelConfig
from bmselect.priors import (
    DensePriorMatrix,
    EffectGrid,
    ModelPrior,
    NuisancePriors,
    PriorSpec,
    build_w,
    inject_gamma,
    log_prior,
    ridge,
    scale_w,
)


class TestInjectGamma:
    def test_null_covariate_gives_zero_block(self):
        model = ModelConfig.from_strings(["000", "101"], 1, 3)
        support = inject_gamma(model)
        assert 0 not in support.blocks
        blk = support.blocks[1]
        expected = np.zeros((3, 3))
        expected[np.ix_([0, 2], [0, 2])] = 1.0
        np.testing.assert_array_equal(blk, expected)

    def test_all_active_gives_ones_block(self):
        model = ModelConfig.from_strings(["111"], 1, 3)
        np.testing.assert_array_equal(inject_gamma(model).blocks[0], np.ones((3, 3)))

    def test_diagonal_reproduces_skeleton(self):
        rng = np.random.default_rng(0)
        model = ModelConfig(rng.integers(0, 2, size=(4, 6)).astype(np.uint8), 2, 3)
        support = inject_gamma(model)
        np.testing.assert_array_equal(support.support().gammas, model.gammas)

    def test_injective_over_all_configs(self):
        seen = {}
        for bits in itertools.product([0, 1], repeat=4):
            model = ModelConfig(np.array([bits[:2], bits[2:]], dtype=np.uint8), 1, 2)
            key = inject_gamma(model).dense().tobytes()
            assert key not in seen
            seen[key] = bits


class TestBuildW:
    def test_fixed_effect_prior_is_rank_one(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        w = build_w(model, (0.0, 0.7))
        blk = w.blocks[0]
        np.testing.assert_allclose(blk, 0.49 * np.ones((2, 2)))
        assert np.linalg.matrix_rank(blk) == 1

    def test_independent_effects_prior_is_diagonal(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        w = build_w(model, (0.5, 0.0))
        np.testing.assert_allclose(w.blocks[0], 0.25 * np.eye(2))

    def test_prior_correlation(self):
        model = ModelConfig.from_strings(["111"], 1, 3)
        w = build_w(model, (0.05, 0.20))
        blk = w.blocks[0]
        np.testing.assert_allclose(np.diag(blk), 0.0425)
        assert blk[0, 1] == pytest.approx(0.04)
        corr = blk[0, 1] / blk[0, 0]
        assert corr == pytest.approx(0.04 / 0.0425)
        assert corr == pytest.approx(0.9412, abs=1e-4)

    def test_partial_configuration_masks_cells(self):
        model = ModelConfig.from_strings(["101"], 1, 3)
        blk = build_w(model, (0.1, 0.2)).blocks[0]
        assert blk[1, 1] == 0.0 and blk[0, 1] == 0.0
        assert blk[0, 0] == pytest.approx(0.05)
        assert blk[0, 2] == pytest.approx(0.04)

    def test_negative_parameters_rejected(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        with pytest.raises(DataValidationError):
            build_w(model, (-0.1, 0.2))

    def test_psd_closure_over_grid(self):
        model = ModelConfig.from_strings(["110", "011"], 1, 3)
        for phi, omega in [(0.0, 0.2), (0.05, 0.2), (0.4, 1.6), (1.0, 0.0)]:
            w = build_w(model, (phi, omega))
            for blk in w.blocks.values():
                assert np.linalg.eigvalsh(blk).min() >= -1e-10 * max(1.0, blk.max())


class TestScaleW:
    def test_identity_sigma_is_noop(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        u = build_w(model, (0.1, 0.3), scale_invariant=True)
        w = scale_w(u, [np.eye(2)])
        np.testing.assert_allclose(w.blocks[0], u.blocks[0])
        assert not w.scale_invariant

    def test_scalar_sigma_scales_uniformly(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        u = build_w(model, (0.1, 0.3), scale_invariant=True)
        w = scale_w(u, [4.0 * np.eye(2)])
        np.testing.assert_allclose(w.blocks[0], 4.0 * u.blocks[0])

    def test_hand_example(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        u = build_w(model, (0.0, 1.0), scale_invariant=True)  # block of ones
        w = scale_w(u, [np.diag([1.0, 4.0])])
        np.testing.assert_allclose(w.blocks[0], np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_nonpositive_variance_rejected(self):
        model = ModelConfig.from_strings(["11"], 1, 2)
        u = build_w(model, (0.1, 0.3), scale_invariant=True)
        with pytest.raises(NumericalError):
            scale_w(u, [np.diag([1.0, 0.0])])

    def test_support_unchanged(self):
        model = ModelConfig.from_strings(["101"], 1, 3)
        u = build_w(model, (0.2, 0.5), scale_invariant=True)
        w = scale_w(u, [np.diag([1.0, 2.0, 3.0])])
        np.testing.assert_array_equal(w.support().gammas, model.gammas)


class TestModelPrior:
    def test_all_null_model(self):
        prior = ModelPrior.uniform_nonnull(3, pi0=0.99)
        model = ModelConfig.null(250, 1, 3)
        assert log_prior(model, prior) == pytest.approx(250 * math.log(0.99))

    def test_consistent_favored_full_config(self):
        prior = ModelPrior.consistent_favored(3, pi0=0.99)
        model = ModelConfig.from_strings(["111"], 1, 3)
        assert log_prior(model, prior) == pytest.approx(math.log(0.01 * 0.5))

    def test_consistent_favored_specific_config(self):
        prior = ModelPrior.consistent_favored(3, pi0=0.99)
        model = ModelConfig.from_strings(["100"], 1, 3)
        assert log_prior(model, prior) == pytest.approx(math.log(0.01 * 0.5 / 6.0))

    def test_uniform_nonnull_shares(self):
        prior = ModelPrior.uniform_nonnull(3, pi0=0.99)
        for code in range(1, 8):
            assert prior.config_probs[code] == pytest.approx(0.01 / 7.0)

    def test_missing_configuration_raises(self):
        prior = ModelPrior(0.99, {1: 0.01}, 2)
        model = ModelConfig.from_strings(["11"], 1, 2)
        with pytest.raises(DataValidationError, match="no assigned prior probability"):
            log_prior(model, prior)

    def test_probability_sum_validated(self):
        with pytest.raises(DataValidationError):
            ModelPrior(0.99, {1: 0.5}, 1)


class TestEffectGrid:
    def test_default_matches_shipped_values(self):
        grid = EffectGrid.default()
        np.testing.assert_allclose(
            grid.points,
            [(0.05, 0.20), (0.10, 0.40), (0.20, 0.80), (0.40, 1.60)],
        )
        np.testing.assert_allclose(grid.weights, 0.25)

    def test_weights_must_normalize(self):
        with pytest.raises(DataValidationError):
            EffectGrid(np.array([[0.1, 0.2]]), np.array([0.5]))

    def test_zero_point_rejected(self):
        with pytest.raises(DataValidationError):
            EffectGrid(np.array([[0.0, 0.0]]), None)


class TestRidge:
    def test_preserves_support(self):
        model = ModelConfig.from_strings(["101"], 1, 3)
        w = build_w(model, (0.0, 0.5))
        ridged = ridge(w, 1e-3)
        np.testing.assert_array_equal(ridged.support().gammas, model.gammas)
        blk = ridged.blocks[0]
        assert blk[0, 0] == pytest.approx(0.25 + 1e-3)
        assert blk[1, 1] == 0.0


class TestDensePriorMatrix:
    def test_matches_block_representation(self):
        model = ModelConfig.from_strings(["110", "011"], 1, 3)
        w = build_w(model, (0.1, 0.4))
        dense = DensePriorMatrix(w.dense(), 1, 3, 2)
        np.testing.assert_array_equal(dense.support().gammas, model.gammas)
        from bmselect.regression import active_cells
        from bmselect.data import CoefficientLayout

        cells = active_cells(model, CoefficientLayout(1, 2, 3))
        np.testing.assert_allclose(dense.active_matrix(cells), w.active_matrix(cells))

    def test_non_psd_rejected(self):
        with pytest.raises(DataValidationError):
            DensePriorMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]), 1, 2, 1)


class TestPriorSpec:
    def test_json_roundtrip(self):
        spec = PriorSpec.default(3, pi0=0.95, preset="consistent-favored")
        text = spec.to_json()
        back = PriorSpec.from_json(text, 3)
        assert back.model_prior.pi0 == pytest.approx(0.95)
        assert back.model_prior.config_probs == pytest.approx(spec.model_prior.config_probs)
        np.testing.assert_allclose(back.grid.points, spec.grid.points)
        assert back.scale_invariant == spec.scale_invariant

    def test_from_json_with_explicit_probs(self):
        cfg = {
            "pi0": 0.9,
            "config_probs": {"10": 0.06, "01": 0.03, "11": 0.01},
            "grid": [[0.1, 0.4]],
            "scale_invariant": False,
        }
        spec = PriorSpec.from_json(json.dumps(cfg), 2)
        assert spec.model_prior.config_probs[1] == pytest.approx(0.06)  # "10" -> cell 0
        assert spec.model_prior.config_probs[2] == pytest.approx(0.03)
        assert not spec.scale_invariant

    def test_nuisance_relation(self):
        nuis = NuisancePriors.from_m([10.0], [1.0], 2, [np.eye(2)])
        assert nuis.nu[0] == pytest.approx(10.0 - 1.0 - 2.0 - 1.0)
        with pytest.raises(DataValidationError):
            NuisancePriors.from_m([4.0], [1.0], 2, [np.eye(2)])
