"""Estimator-style interface over the selection machinery.

Both estimators follow the scikit-learn protocol (constructor parameters are
plain values, ``fit`` returns ``self``, fitted attributes carry a trailing
underscore, ``get_params``/``set_params`` work), so they drop into pipelines
and grid searches. The multi-subgroup case is handled by passing lists of
per-subgroup arrays to ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import SSMRData
from .exceptions import DataValidationError
from .priors import EffectGrid, ModelPrior, NuisancePriors, PriorSpec
from .search import (
    McmcConfig,
    ModelScorer,
    PosteriorSummary,
    enumerate_posterior,
    run_mcmc,
    single_covariate_scan,
)


def _assemble(X, Y, controls, add_intercept: bool) -> SSMRData:
    single = isinstance(X, np.ndarray) or (len(X) and np.ndim(X[0]) <= 1)
    xs = [np.asarray(X)] if single else [np.asarray(x) for x in X]
    ys = [np.asarray(Y)] if single else [np.asarray(y) for y in Y]
    if controls is None:
        cs = [None] * len(xs)
    else:
        cs = [np.asarray(controls)] if single else [np.asarray(c) for c in controls]
    if not (len(xs) == len(ys) == len(cs)):
        raise DataValidationError("X, Y and controls must have one entry per subgroup")
    built = []
    for c, x in zip(cs, xs):
        if c is None:
            built.append(np.ones((x.shape[0], 1)))
        elif add_intercept:
            c2 = c[:, None] if c.ndim == 1 else c
            built.append(np.column_stack([np.ones(x.shape[0]), c2]))
        else:
            built.append(c[:, None] if c.ndim == 1 else c)
    return SSMRData.from_arrays(ys, xs, built)


class _PriorMixin:
    def _prior_spec(self, data: SSMRData) -> PriorSpec:
        n_cells = data.s * data.r
        if isinstance(self.config_probs, str):
            model_prior = ModelPrior.preset(self.config_probs, n_cells, self.pi0)
        else:
            model_prior = ModelPrior(self.pi0, dict(self.config_probs), n_cells)
        grid = EffectGrid.default() if self.grid is None else EffectGrid(
            np.asarray(self.grid, dtype=np.float64), self.grid_weights
        )
        if self.nu is None:
            nuisance = NuisancePriors.limit()
        else:
            nuisance = NuisancePriors(tuple(np.atleast_1d(self.nu)),
                                      tuple(np.asarray(h) for h in self.H), use_limit=False)
        return PriorSpec(model_prior, grid, nuisance, self.scale_invariant)


class BayesianModelSelector(BaseEstimator, _PriorMixin):
    """Posterior inference over which candidate covariates affect which responses.

    Fits the full model-selection machinery: exact enumeration when the model
    space is small enough (``method='enumerate'`` or ``'auto'``), otherwise
    Metropolis-Hastings sampling with staged proposal weights and
    Rao-Blackwellized inclusion probabilities.

    Parameters
    ----------
    pi0 : float
        Prior probability that a covariate is inactive everywhere.
    config_probs : str or dict
        Either a preset name (``"uniform-nonnull"``, ``"consistent-favored"``)
        or an explicit map from non-null state code to probability.
    grid : sequence of (phi, omega) or None
        Effect-size grid; ``None`` selects the default four-point grid.
    alpha : float or sequence
        Shrinkage weight(s) blending target- and null-model residual
        covariance estimates.
    method : {"auto", "enumerate", "mcmc"}
        ``auto`` enumerates when the space has at most ``max_enumerate``
        models and samples otherwise.
    regions : dict or None
        Optional named covariate index sets for regional probabilities.

    Attributes
    ----------
    posterior_ : PosteriorSummary
    pip_ : ndarray (p, n_states)
        Marginal posterior configuration probabilities (column 0 = null).
    configurations_ : list of str
        Bitstring labels for the configuration axis of ``pip_``.
    top_models_ : list of TopModel
    diagnostics_ : dict
    """

    def __init__(self, pi0=0.99, config_probs="uniform-nonnull", grid=None,
                 grid_weights=None, scale_invariant=True, nu=None, H=None,
                 alpha=0.5, method="auto", max_enumerate=4096, burn_in=25000,
                 samples=50000, move_mix=(0.85, 0.15), proposal_rounds=4,
                 proposal_probs=(0.624, 0.250, 0.125, 0.010), grid_budget=4096,
                 rb_eval_budget=500_000, regions=None, add_intercept=True, seed=0):
        self.pi0 = pi0
        self.config_probs = config_probs
        self.grid = grid
        self.grid_weights = grid_weights
        self.scale_invariant = scale_invariant
        self.nu = nu
        self.H = H
        self.alpha = alpha
        self.method = method
        self.max_enumerate = max_enumerate
        self.burn_in = burn_in
        self.samples = samples
        self.move_mix = move_mix
        self.proposal_rounds = proposal_rounds
        self.proposal_probs = proposal_probs
        self.grid_budget = grid_budget
        self.rb_eval_budget = rb_eval_budget
        self.regions = regions
        self.add_intercept = add_intercept
        self.seed = seed

    def fit(self, X, Y, controls=None):
        """Run posterior inference.

        ``X`` and ``Y`` are the candidate and response matrices of a single
        subgroup, or lists of per-subgroup matrices. ``controls`` optionally
        supplies additional covariates to adjust for (an intercept is
        prepended unless ``add_intercept=False``, in which case the first
        control column must already be the intercept).
        """
        data = _assemble(X, Y, controls, self.add_intercept)
        prior = self._prior_spec(data)
        n_states = 1 << (data.s * data.r)
        enumerable = data.p * np.log(n_states) <= np.log(self.max_enumerate) + 1e-12
        if self.method not in ("auto", "enumerate", "mcmc"):
            raise DataValidationError("method must be 'auto', 'enumerate' or 'mcmc'")
        if self.method == "enumerate" or (self.method == "auto" and enumerable):
            summary = enumerate_posterior(
                data, prior, alpha=self.alpha, max_models=self.max_enumerate,
                regions=self.regions,
            )
        else:
            cfg = McmcConfig(
                burn_in=self.burn_in, samples=self.samples, seed=self.seed,
                move_mix=tuple(self.move_mix), proposal_rounds=self.proposal_rounds,
                proposal_probs=tuple(self.proposal_probs), grid_budget=self.grid_budget,
                rb_eval_budget=self.rb_eval_budget,
            )
            summary = run_mcmc(data, prior, cfg, alpha=self.alpha, regions=self.regions)
        self.data_ = data
        self.prior_ = prior
        self.posterior_ = summary
        self.pip_ = summary.pip
        self.configurations_ = summary.state_labels
        self.top_models_ = summary.top_models
        self.diagnostics_ = summary.diagnostics
        self.region_probs_ = summary.region_probs
        self.n_features_in_ = data.p
        return self

    def inclusion_probabilities(self) -> np.ndarray:
        """Posterior probability that each covariate is active anywhere."""
        self._check_fitted()
        return 1.0 - self.pip_[:, 0]

    def _check_fitted(self):
        if not hasattr(self, "posterior_"):
            raise DataValidationError("estimator is not fitted; call fit first")


class SingleCovariateScan(BaseEstimator, _PriorMixin):
    """One-covariate-at-a-time posterior, the single-variable baseline.

    Shares the prior interface of :class:`BayesianModelSelector` but scores
    each covariate in isolation; with ``regions`` it also reports regional
    probabilities under the at-most-one-active-covariate-per-region
    assumption.
    """

    def __init__(self, pi0=0.99, config_probs="uniform-nonnull", grid=None,
                 grid_weights=None, scale_invariant=True, nu=None, H=None,
                 alpha=0.5, grid_budget=4096, regions=None, add_intercept=True,
                 seed=0):
        self.pi0 = pi0
        self.config_probs = config_probs
        self.grid = grid
        self.grid_weights = grid_weights
        self.scale_invariant = scale_invariant
        self.nu = nu
        self.H = H
        self.alpha = alpha
        self.grid_budget = grid_budget
        self.regions = regions
        self.add_intercept = add_intercept
        self.seed = seed

    def fit(self, X, Y, controls=None):
        data = _assemble(X, Y, controls, self.add_intercept)
        prior = self._prior_spec(data)
        scorer = ModelScorer(
            data, prior, alpha=self.alpha, grid_budget=self.grid_budget,
            grid_seed=self.seed,
        )
        result = single_covariate_scan(
            data, prior, alpha=self.alpha, regions=self.regions, scorer=scorer
        )
        self.data_ = data
        self.prior_ = prior
        self.scan_ = result
        self.pip_ = result.posterior
        self.log10_bfs_ = result.log10_bfs
        self.configurations_ = result.state_labels
        self.region_probs_ = result.region_probs
        self.n_features_in_ = data.p
        return self

    def inclusion_probabilities(self) -> np.ndarray:
        if not hasattr(self, "scan_"):
            raise DataValidationError("estimator is not fitted; call fit first")
        return 1.0 - self.pip_[:, 0]
