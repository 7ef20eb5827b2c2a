import math

import numpy as np
import pytest

from bmselect.bayes_factors import LOG10, model_bf
from bmselect.data import SSMRData
from bmselect.exceptions import DataValidationError, ResourceLimitError
from bmselect.models import ModelConfig
from bmselect.priors import PriorSpec, log_prior
from bmselect.search import (
    McmcConfig,
    ModelScorer,
    build_proposal,
    convergence_diagnostic,
    enumerate_posterior,
    regional_probs,
    run_mcmc,
    single_covariate_scan,
    sparse_key,
)

from conftest import make_dataset, null_dataset


def signal_dataset(seed=0, p=3, n=60, r=2, strength=1.2):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    y = np.column_stack([
        strength * x[:, 0] + rng.standard_normal(n),
        0.9 * strength * x[:, 0] + rng.standard_normal(n),
    ])
    return SSMRData.from_arrays(y, x)


@pytest.fixture(scope="module")
def enum_setup():
    data = signal_dataset(seed=5)
    prior = PriorSpec.default(2)
    scorer = ModelScorer(data, prior)
    summary = enumerate_posterior(data, prior, scorer=scorer)
    return data, prior, scorer, summary


class TestEnumerate:
    def test_single_covariate_is_bayes_rule(self):
        data = signal_dataset(seed=2, p=1)
        prior = PriorSpec.default(2)
        summary = enumerate_posterior(data, prior)
        null = None
        scores = []
        for code in range(4):
            model = ModelConfig.from_codes([code], 1, 1, 2)
            lp = log_prior(model, prior.model_prior)
            scores.append(lp + LOG10 * model_bf(data, model, prior).log10_bf)
        scores = np.array(scores)
        expected = np.exp(scores - np.logaddexp.reduce(scores))
        np.testing.assert_allclose(summary.pip[0], expected, atol=1e-12)

    def test_null_data_prefers_null_model(self):
        data = null_dataset(p=3, n=50, seed=8)
        prior = PriorSpec.default(2)
        summary = enumerate_posterior(data, prior)
        top = summary.top_models[0]
        assert all(g == "00" for g in top.gamma_strings)
        assert summary.pip[:, 0].min() > 0.9

    def test_pip_rows_normalize(self, enum_setup):
        _, _, _, summary = enum_setup
        np.testing.assert_allclose(summary.pip.sum(axis=1), 1.0, atol=1e-9)

    def test_space_too_large(self):
        data = signal_dataset(seed=1, p=10)
        prior = PriorSpec.default(2)
        with pytest.raises(ResourceLimitError, match="MCMC"):
            enumerate_posterior(data, prior, max_models=4096)


class TestProposal:
    def test_single_round_is_uniform(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        pw = build_proposal(data, prior, n_rounds=1, p_seq=(1.0,), scorer=scorer)
        np.testing.assert_allclose(pw.weights, 1.0 / data.p)

    def test_default_stage_probabilities(self):
        cfg = McmcConfig()
        assert cfg.proposal_probs == (0.624, 0.250, 0.125, 0.010)
        assert cfg.burn_in == 25000 and cfg.samples == 50000

    def test_planted_signal_dominates(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        pw = build_proposal(data, prior, scorer=scorer)
        assert int(np.argmax(pw.weights)) == 0
        assert pw.weights.min() > 0.0

    def test_nonincreasing_probs_enforced(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        with pytest.raises(DataValidationError):
            build_proposal(data, prior, n_rounds=2, p_seq=(0.1, 0.9), scorer=scorer)


class TestMcmc:
    def test_matches_enumeration(self, enum_setup):
        data, prior, scorer, enum_summary = enum_setup
        cfg = McmcConfig(burn_in=2000, samples=10000, seed=3)
        summary = run_mcmc(data, prior, cfg, scorer=scorer)
        assert np.abs(summary.pip - enum_summary.pip).max() < 0.02
        assert np.abs(summary.pip_freq - enum_summary.pip).max() < 0.02

    def test_null_data_low_pips(self):
        data = null_dataset(p=4, n=60, seed=12)
        prior = PriorSpec.default(2)
        cfg = McmcConfig(burn_in=1000, samples=5000, seed=0)
        summary = run_mcmc(data, prior, cfg)
        assert (1.0 - summary.pip[:, 0]).max() < 0.10

    def test_seed_determinism(self, enum_setup):
        data, prior, _, _ = enum_setup
        cfg = McmcConfig(burn_in=500, samples=1500, seed=11)
        a = run_mcmc(data, prior, cfg, regions={"r0": [0, 1]})
        b = run_mcmc(data, prior, cfg, regions={"r0": [0, 1]})
        np.testing.assert_array_equal(a.pip, b.pip)
        np.testing.assert_array_equal(a.pip_freq, b.pip_freq)
        assert [(t.codes, t.visits, t.log10_score) for t in a.top_models] == [
            (t.codes, t.visits, t.log10_score) for t in b.top_models
        ]
        assert a.region_probs == b.region_probs
        assert a.diagnostics["acceptance_rate"] == b.diagnostics["acceptance_rate"]

    def test_move_bookkeeping_against_fresh_scores(self, enum_setup):
        # replay the recorded moves and confirm every accepted state's score
        # matches a fresh model evaluation
        data, prior, _, _ = enum_setup
        cfg = McmcConfig(burn_in=0, samples=400, seed=21)
        summary = run_mcmc(data, prior, cfg, collect_trace=True)
        fresh = ModelScorer(data, prior)
        codes = np.zeros(data.p, dtype=np.int64)
        for entry in summary.diagnostics["trace"]:
            move = entry["move"]
            if move == "swap-noop":
                continue
            if entry["accepted"]:
                if move[0] == "config":
                    codes[move[1]] = move[3]
                else:
                    codes[[move[1], move[2]]] = codes[[move[2], move[1]]]
                model = ModelConfig.from_codes(codes, data.p, data.s, data.r)
                assert entry["log_post"] == pytest.approx(fresh.log_post(model), abs=1e-9)

    def test_swap_preserves_configuration_multiset(self, enum_setup):
        data, prior, _, _ = enum_setup
        cfg = McmcConfig(burn_in=0, samples=300, seed=4, move_mix=(0.0, 1.0))
        summary = run_mcmc(data, prior, cfg, collect_trace=True)
        # chain starts at the null model: swaps alone cannot leave it
        assert all(
            e["move"] == "swap-noop" for e in summary.diagnostics["trace"]
        )

    def test_irreducibility_floor(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        pw = build_proposal(data, prior, scorer=scorer)
        assert pw.weights.min() >= 0.01 / (data.p * math.e ** 50) or pw.weights.min() > 0


class TestRegional:
    def test_single_covariate_region_equals_pip(self, enum_setup):
        data, prior, scorer, summary = enum_setup
        enum_regions = enumerate_posterior(
            data, prior, scorer=scorer, regions={"solo": [0]}
        )
        probs = enum_regions.region_probs["solo"]
        assert probs["any"] == pytest.approx(1.0 - enum_regions.pip[0, 0], abs=1e-9)
        for code in (1, 2, 3):
            label = enum_regions.state_labels[code]
            assert probs[label] == pytest.approx(enum_regions.pip[0, code], abs=1e-9)

    def test_matches_enumerated_predicate_mass(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        summary = enumerate_posterior(data, prior, scorer=scorer, regions={"pair": [1, 2]})
        cfg = McmcConfig(burn_in=2000, samples=10000, seed=3)
        sampled = run_mcmc(data, prior, cfg, scorer=scorer, regions={"pair": [1, 2]})
        for key, value in summary.region_probs["pair"].items():
            assert sampled.region_probs["pair"][key] == pytest.approx(value, abs=0.02)

    def test_empty_region_rejected(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        with pytest.raises(DataValidationError, match="empty"):
            enumerate_posterior(data, prior, scorer=scorer, regions={"nothing": []})

    def test_disjoint_union(self):
        models = [
            (np.array([1, 0, 0]), 0.3),
            (np.array([0, 2, 0]), 0.5),
            (np.array([0, 0, 0]), 0.2),
        ]
        out = regional_probs(models, {"all": [0, 1, 2]}, 2)
        assert out["all"]["any"] == pytest.approx(0.8)
        assert out["all"]["10"] == pytest.approx(0.3)
        assert out["all"]["01"] == pytest.approx(0.5)


class TestScan:
    def test_null_covariate_concentrates_on_null(self):
        data = null_dataset(p=2, n=60, seed=3)
        prior = PriorSpec.default(2)
        result = single_covariate_scan(data, prior)
        assert result.posterior[:, 0].min() > 0.9

    def test_perfect_signal_detected(self):
        rng = np.random.default_rng(0)
        n = 50
        x = rng.standard_normal((n, 2))
        y = np.column_stack([x[:, 0], x[:, 0] + 0.01 * rng.standard_normal(n)])
        data = SSMRData.from_arrays(y, x)
        prior = PriorSpec.default(2)
        result = single_covariate_scan(data, prior)
        assert 1.0 - result.posterior[0, 0] > 0.99

    def test_p1_equals_enumeration(self):
        data = signal_dataset(seed=2, p=1)
        prior = PriorSpec.default(2)
        scan = single_covariate_scan(data, prior)
        summary = enumerate_posterior(data, prior)
        np.testing.assert_allclose(scan.posterior, summary.pip, atol=1e-12)

    def test_regional_at_most_one_active(self):
        data = signal_dataset(seed=5)
        prior = PriorSpec.default(2)
        result = single_covariate_scan(data, prior, regions={"r": [0, 1, 2]})
        probs = result.region_probs["r"]
        assert 0.0 <= probs["any"] <= 1.0
        assert probs["any"] > 0.99  # strong planted signal
        total = sum(v for k, v in probs.items() if k != "any")
        assert total == pytest.approx(probs["any"], abs=1e-9)


class TestDiagnostics:
    def test_single_model_not_applicable(self):
        assert convergence_diagnostic([100], [0.0]) is None

    def test_constant_scores_not_applicable(self):
        assert convergence_diagnostic([5, 3, 2], [1.0, 1.0, 1.0]) is None

    def test_converged_chain_high_correlation(self, enum_setup):
        data, prior, scorer, _ = enum_setup
        cfg = McmcConfig(burn_in=2000, samples=20000, seed=7)
        summary = run_mcmc(data, prior, cfg, scorer=scorer)
        rho = summary.diagnostics["rank_correlation"]
        assert rho is not None and rho >= 0.9

    def test_short_run_correlates_worse(self):
        data, _ = make_dataset(s=1, r=2, p=6, n=40, seed=31, effect_scale=0.25)
        prior = PriorSpec.default(2)
        scorer = ModelScorer(data, prior)
        long_run = run_mcmc(data, prior, McmcConfig(burn_in=2000, samples=20000, seed=9),
                            scorer=scorer)
        short_run = run_mcmc(data, prior, McmcConfig(burn_in=0, samples=60, seed=9),
                             scorer=scorer)
        rho_long = long_run.diagnostics["rank_correlation"]
        rho_short = short_run.diagnostics["rank_correlation"]
        assert rho_long is not None
        assert rho_short is None or rho_short < rho_long


class TestSparseKey:
    def test_roundtrip_identity(self):
        codes = np.array([0, 3, 0, 1])
        assert sparse_key(codes) == ((1, 3), (3, 1))
        assert sparse_key(np.zeros(4, dtype=int)) == ()

    def test_rao_blackwell_matches_frequency_on_enumerable(self, enum_setup):
        data, prior, scorer, enum_summary = enum_setup
        cfg = McmcConfig(burn_in=2000, samples=15000, seed=13)
        summary = run_mcmc(data, prior, cfg, scorer=scorer)
        assert np.abs(summary.pip - enum_summary.pip).max() < 0.02
        assert np.abs(summary.pip_freq - enum_summary.pip).max() < 0.02
