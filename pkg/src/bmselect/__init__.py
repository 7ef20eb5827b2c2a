"""Bayesian model selection for systems of simultaneous multivariate regressions.

Exact and Laplace-approximate Bayes factors for structured candidate models,
posterior search over the model space (enumeration or Metropolis-Hastings),
scikit-learn style estimators, a simulation harness, and independent
numerical references for validation.

Attributes are loaded lazily so that core sampling runs do not pay the
import cost (or memory) of pandas and scikit-learn, which only the I/O,
validation and estimator layers use.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "bayes_factors": [
        "BfResult", "ConnectionStats", "abf", "abf_singular", "connection_stats",
        "exact_bf", "model_bf", "sigma_shrink",
    ],
    "data": ["CoefficientLayout", "SSMRData", "SubgroupData"],
    "estimators": ["BayesianModelSelector", "SingleCovariateScan"],
    "exceptions": [
        "DataValidationError", "DegenerateFitError", "NumericalError", "ResourceLimitError",
    ],
    "models": ["ModelConfig"],
    "priors": [
        "DensePriorMatrix", "EffectGrid", "ModelPrior", "NuisancePriors", "PriorMatrix",
        "PriorSpec", "build_w", "inject_gamma", "log_prior", "ridge", "scale_w",
    ],
    "regression": [
        "MleResult", "NullModel", "fit_mle", "prepare", "residualize", "vg_inverse_times",
    ],
    "search": [
        "McmcConfig", "ModelScorer", "PosteriorSummary", "ProposalWeights", "ScanResult",
        "build_proposal", "convergence_diagnostic", "enumerate_posterior", "regional_probs",
        "run_mcmc", "single_covariate_scan",
    ],
    "simulate": [
        "EvalCurve", "SimScenario", "SimTruth", "evaluate", "simulate", "simulate_ablation",
    ],
    "oracle": ["brute_posterior", "mc_bf", "quadrature_bf", "quadrature_mixture_bf"],
    "validation": ["run_validation", "rmse_table"],
}

_ATTR_TO_MODULE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_ATTR_TO_MODULE) + ["__version__"]


def __getattr__(name: str):
    module_name = _ATTR_TO_MODULE.get(name)
    if module_name is None:
        raise AttributeError(f"module 'bmselect' has no attribute {name!r}")
    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
