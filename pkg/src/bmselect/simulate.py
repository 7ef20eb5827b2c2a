"""Synthetic data generation and selection-performance evaluation.

Scenarios mirror a genetic fine-mapping setup: candidate covariates are
standardized genotype dosages, a sparse random subset is causal, causal
covariates get a configuration drawn from a preset distribution, and non-zero
effects are drawn around a shared covariate-level mean so that effects across
cells are highly correlated but not identical. Residuals are multivariate
normal with a fixed covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SSMRData
from .exceptions import DataValidationError
from .models import ModelConfig, code_to_gamma
from .search import PosteriorSummary, ScanResult

#: Default residual covariance for three responses.
DEFAULT_SIGMA = np.array([
    [1.00, 0.24, 1.20],
    [0.24, 1.44, 1.08],
    [1.20, 1.08, 2.25],
])


@dataclass(frozen=True)
class SimScenario:
    """Generative description of one synthetic dataset family.

    ``config_dist`` maps non-null state codes to probabilities conditional on
    a covariate being causal. ``effect_model`` is ``"shared"`` (cell effects
    drawn around a common covariate mean with relative sd 1/10) or
    ``"independent"`` (cells drawn independently). ``covariate_model`` is
    ``"independent-binomial"`` (dosages Binomial(2, maf), maf uniform in
    ``maf_range``, standardized) or ``"external"`` (genotypes supplied to
    :func:`simulate`).
    """

    n: int = 100
    p: int = 250
    r: int = 3
    s: int = 1
    causal_rate: float = 0.03
    config_dist: dict | None = None
    effect_model: str = "shared"
    sigma_truth: np.ndarray | None = None
    covariate_model: str = "independent-binomial"
    maf_range: tuple = (0.05, 0.5)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.causal_rate < 1:
            raise DataValidationError("causal_rate must lie in (0, 1)")
        if self.effect_model not in ("shared", "independent"):
            raise DataValidationError("effect_model must be 'shared' or 'independent'")
        if self.covariate_model not in ("independent-binomial", "external"):
            raise DataValidationError(
                "covariate_model must be 'independent-binomial' or 'external'"
            )
        sigma = self.sigma_truth
        if sigma is None:
            if self.r == 3:
                sigma = DEFAULT_SIGMA
            else:
                sigma = np.eye(self.r)
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.shape != (self.r, self.r):
            raise DataValidationError(f"sigma_truth must be {self.r}x{self.r}")
        np.linalg.cholesky(sigma)  # must be positive definite
        dist = self.config_dist
        if dist is None:
            dist = default_config_dist(self.s * self.r)
        dist = {int(c): float(v) for c, v in dist.items()}
        if 0 in dist or abs(sum(dist.values()) - 1.0) > 1e-9 or min(dist.values()) < 0:
            raise DataValidationError(
                "config_dist must be a probability distribution over non-null codes"
            )
        object.__setattr__(self, "sigma_truth", sigma)
        object.__setattr__(self, "config_dist", dist)

    def with_seed(self, seed: int) -> "SimScenario":
        return SimScenario(self.n, self.p, self.r, self.s, self.causal_rate,
                           self.config_dist, self.effect_model, self.sigma_truth,
                           self.covariate_model, self.maf_range, seed)


def default_config_dist(n_cells: int) -> dict:
    """All-active configuration with probability 1/2, the rest equally likely."""
    full = (1 << n_cells) - 1
    if full == 1:
        return {1: 1.0}
    others = full - 1
    dist = {full: 0.5}
    for c in range(1, full):
        dist[c] = 0.5 / others
    return dist


@dataclass(frozen=True)
class SimTruth:
    """Ground truth of one simulated dataset."""

    model: ModelConfig
    effects: np.ndarray  # (p, s*r), zero at inactive cells


ABLATION_PRESETS = (
    "sigma-scalar", "sigma-diag-unequal", "sigma-full",
    "independent-effects", "consistent-only",
)


def simulate_ablation(setting: str, n: int = 100, p: int = 250, seed: int = 0) -> SimScenario:
    """Named scenario presets isolating error-covariance and effect-prior factors.

    The three ``sigma-*`` settings draw per-cell effects independently and
    vary only the residual covariance (scalar, unequal diagonal, full).
    ``independent-effects`` is the scalar-covariance independent-effect
    scheme; ``consistent-only`` forces every causal covariate to the
    all-active configuration with shared effects.
    """
    r = 3
    full = (1 << r) - 1
    if setting in ("sigma-scalar", "independent-effects"):
        return SimScenario(n=n, p=p, r=r, effect_model="independent",
                           config_dist={full: 1.0}, sigma_truth=np.eye(r), seed=seed)
    if setting == "sigma-diag-unequal":
        return SimScenario(n=n, p=p, r=r, effect_model="independent",
                           config_dist={full: 1.0},
                           sigma_truth=np.diag(np.diag(DEFAULT_SIGMA)), seed=seed)
    if setting == "sigma-full":
        return SimScenario(n=n, p=p, r=r, effect_model="independent",
                           config_dist={full: 1.0}, sigma_truth=DEFAULT_SIGMA, seed=seed)
    if setting == "consistent-only":
        return SimScenario(n=n, p=p, r=r, effect_model="shared",
                           config_dist={full: 1.0}, sigma_truth=np.eye(r), seed=seed)
    raise DataValidationError(f"unknown ablation setting {setting!r}; options: {ABLATION_PRESETS}")


def simulate(scenario: SimScenario, genotypes=None):
    """Draw one dataset and its ground truth.

    Returns ``(SSMRData, SimTruth)``; fully reproducible from the scenario
    seed. For the ``"external"`` covariate model, ``genotypes`` must supply a
    per-subgroup list of (n, p) matrices to use verbatim (after
    standardization).
    """
    rng = np.random.default_rng(scenario.seed)
    n_cells = scenario.s * scenario.r
    p = scenario.p

    causal = rng.random(p) < scenario.causal_rate
    codes = sorted(scenario.config_dist)
    probs = np.array([scenario.config_dist[c] for c in codes])
    gammas = np.zeros((p, n_cells), dtype=np.uint8)
    effects = np.zeros((p, n_cells))
    for j in np.flatnonzero(causal):
        code = codes[rng.choice(len(codes), p=probs)]
        gamma = code_to_gamma(code, n_cells)
        gammas[j] = gamma
        active = np.flatnonzero(gamma)
        if scenario.effect_model == "shared":
            mean = rng.normal(0.0, 1.0)
            effects[j, active] = rng.normal(mean, abs(mean) / 10.0, size=active.size)
        else:
            effects[j, active] = rng.normal(0.0, 1.0, size=active.size)
    truth = SimTruth(ModelConfig(gammas, scenario.s, scenario.r), effects)

    responses, candidates = [], []
    for i in range(scenario.s):
        if scenario.covariate_model == "independent-binomial":
            x = _standardized_genotypes(rng, scenario.n, p, scenario.maf_range)
            n_i = scenario.n
        else:
            if genotypes is None:
                raise DataValidationError("external covariate model requires genotypes")
            raw = np.asarray(genotypes[i] if not isinstance(genotypes, np.ndarray) else genotypes,
                             dtype=np.float64)
            if raw.shape[1] != p:
                raise DataValidationError(f"external genotypes must have {p} columns")
            sd = raw.std(axis=0)
            sd[sd == 0] = 1.0
            x = (raw - raw.mean(axis=0)) / sd
            n_i = x.shape[0]
        beta = effects[:, i * scenario.r:(i + 1) * scenario.r]  # (p, r)
        noise = rng.multivariate_normal(np.zeros(scenario.r), scenario.sigma_truth, size=n_i)
        responses.append(x @ beta + noise)
        candidates.append(x)
    data = SSMRData.from_arrays(responses, candidates)
    return data, truth


def _standardized_genotypes(rng, n: int, p: int, maf_range) -> np.ndarray:
    maf = rng.uniform(maf_range[0], maf_range[1], size=p)
    x = rng.binomial(2, maf, size=(n, p)).astype(np.float64)
    sd = x.std(axis=0)
    for j in np.flatnonzero(sd == 0):
        # constant columns carry no signal and break standardization; redraw
        while x[:, j].std() == 0:
            x[:, j] = rng.binomial(2, maf[j], size=n)
    return (x - x.mean(axis=0)) / x.std(axis=0)


@dataclass(frozen=True)
class EvalCurve:
    """Cumulative true/false positives over a descending threshold sweep."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.tp) < 0) or np.any(np.diff(self.fp) < 0):
            raise DataValidationError("tp and fp must be nondecreasing along the sweep")

    def tp_at_fp(self, fp_grid) -> np.ndarray:
        """Best true-positive count attainable within each false-positive budget."""
        out = np.empty(len(fp_grid))
        for idx, budget in enumerate(fp_grid):
            ok = self.fp <= budget
            out[idx] = self.tp[ok].max() if ok.any() else 0.0
        return out


def _covariate_scores(summary) -> np.ndarray:
    if isinstance(summary, PosteriorSummary):
        return 1.0 - summary.pip[:, 0]
    if isinstance(summary, ScanResult):
        return 1.0 - summary.posterior[:, 0]
    arr = np.asarray(summary, dtype=np.float64)
    if arr.ndim == 1:
        return arr
    raise DataValidationError("cannot extract covariate scores from summary input")


def evaluate(replicates, mode: str = "covariate", regions: dict | None = None) -> EvalCurve:
    """Pool replicate scores into a true/false positive trade-off curve.

    ``replicates`` is a list of ``(summary, truth)`` pairs: summaries are
    posterior or scan outputs (or raw per-covariate score vectors), and truth
    the generating :class:`SimTruth` (or model). In covariate mode a call at
    threshold ``t`` flags covariates whose non-null posterior mass reaches
    ``t``; in region mode entire regions are flagged by their "any"
    probability and a region counts as true when it holds a causal covariate.
    """
    if mode not in ("covariate", "region"):
        raise DataValidationError("mode must be 'covariate' or 'region'")
    if mode == "region" and not regions:
        raise DataValidationError("region mode requires region definitions")
    scores, labels = [], []
    for summary, truth in replicates:
        model = truth.model if isinstance(truth, SimTruth) else truth
        if model is None:
            raise DataValidationError("every replicate needs its ground truth")
        causal = model.gammas.any(axis=1)
        if mode == "covariate":
            sc = _covariate_scores(summary)
            scores.append(sc)
            labels.append(causal)
        else:
            probs = summary.region_probs if not isinstance(summary, dict) else summary
            if probs is None:
                raise DataValidationError("region mode needs summaries with region_probs")
            for name, idx in regions.items():
                scores.append([probs[name]["any"]])
                labels.append([causal[np.asarray(list(idx), dtype=np.intp)].any()])
    scores = np.concatenate([np.asarray(v, dtype=np.float64) for v in scores])
    labels = np.concatenate([np.asarray(v, dtype=bool) for v in labels])
    thresholds = np.unique(scores)[::-1]
    tp = np.array([(labels & (scores >= t)).sum() for t in thresholds], dtype=np.int64)
    fp = np.array([(~labels & (scores >= t)).sum() for t in thresholds], dtype=np.int64)
    return EvalCurve(thresholds, tp, fp)
