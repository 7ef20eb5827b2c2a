"""Accuracy benchmark: Laplace Bayes factors against the quadrature reference.

Simulates single-response systems (three subgroups by default), prices the
all-active model with the approximate Bayes factor at several shrinkage
weights, and compares each value with the numerically integrated reference.
Used by the ``validate`` CLI subcommand and the acceptance suite.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .bayes_factors import LOG10, abf
from .data import SSMRData
from .exceptions import DataValidationError
from .models import ModelConfig
from .oracle import quadrature_mixture_bf
from .priors import EffectGrid, build_w
from .regression import prepare

#: Benchmark presets: (per-subgroup sample size, covariate counts).
VALIDATION_PRESETS = {
    "sslr-smalln": (75, (2, 4, 8, 16)),
    "sslr-largen": (1000, (16,)),
}

#: Reference sample size at which the simulated standardized effects are
#: U[0.1, 0.5]; other sizes scale the magnitudes to keep noncentrality stable.
EFFECT_REFERENCE_N = 75
N_CAUSAL = 2


def sslr_instance(p: int, n_per: int, s: int = 3, seed: int = 0):
    """One simulated single-response system with a sparse consistent signal.

    Each of ``s`` subgroups holds ``n_per`` observations with its own noise
    scale drawn uniformly from [0.5, 2]. Two covariates carry standardized
    effects of magnitude uniform in [0.1, 0.5] at the reference sample size
    (scaled by ``sqrt(75/n_per)`` otherwise, keeping the signal-to-noise of
    the benchmark stable), with a random sign shared across subgroups; the
    rest are null. The priced model activates every covariate everywhere.
    """
    rng = np.random.default_rng(seed)
    sigma2 = rng.uniform(0.5, 2.0, size=s)
    b = np.zeros(p)
    causal = rng.choice(p, size=min(N_CAUSAL, p), replace=False)
    scale = math.sqrt(EFFECT_REFERENCE_N / n_per)
    b[causal] = (rng.uniform(0.1, 0.5, size=causal.size)
                 * rng.choice([-1.0, 1.0], size=causal.size) * scale)
    ys, xs = [], []
    for i in range(s):
        x = rng.standard_normal((n_per, p))
        beta = b * np.sqrt(sigma2[i])
        noise = rng.normal(0.0, np.sqrt(sigma2[i]), size=n_per)
        ys.append((x @ beta + noise)[:, None])
        xs.append(x)
    data = SSMRData.from_arrays(ys, xs)
    model = ModelConfig(np.ones((p, s), dtype=np.uint8), s, 1)
    return data, model


def _mixture_log10(values: np.ndarray, weights: np.ndarray) -> float:
    return float((logsumexp(LOG10 * values, b=weights)) / LOG10)


def validation_instance(p: int, n_per: int, s: int, seed: int, alphas,
                        grid: EffectGrid | None = None,
                        oracle_tol: float = 1e-6) -> dict:
    """Price one instance with every shrinkage weight and the reference."""
    if grid is None:
        grid = EffectGrid.default()
    data, model = sslr_instance(p, n_per, s=s, seed=seed)
    null = prepare(data)
    priors = [build_w(model, tuple(pt), scale_invariant=True) for pt in grid.points]

    oracle = quadrature_mixture_bf(data, model, priors, grid.weights, rel_tol=oracle_tol)
    row = {
        "instance": seed,
        "p": p,
        "n": n_per,
        "log10_oracle": oracle.log10_bf,
        "oracle_tol": oracle.achieved_tol,
    }
    for alpha in alphas:
        vals = np.array([
            abf(data, model, w, alpha=alpha, null=null).log10_bf for w in priors
        ])
        row[f"log10_abf_alpha{alpha:g}"] = _mixture_log10(vals, grid.weights)
    return row


def run_validation(preset: str | None = None, n_per: int | None = None,
                   p_values=None, s: int = 3, alphas=(0.0, 0.5, 1.0),
                   replicates: int = 500, seed: int = 0, threads: int = 1) -> pd.DataFrame:
    """Benchmark sweep over covariate counts and replicates.

    Returns one row per (p, replicate) with the reference value and the
    approximate value at each shrinkage weight. Instance seeds derive
    deterministically from ``seed``.
    """
    if preset is not None:
        if preset not in VALIDATION_PRESETS:
            raise DataValidationError(
                f"unknown validation preset {preset!r}; options: {sorted(VALIDATION_PRESETS)}"
            )
        n_per, p_values = VALIDATION_PRESETS[preset]
    if n_per is None or p_values is None:
        raise DataValidationError("either a preset or explicit n_per and p_values are required")

    jobs = []
    for p in p_values:
        for rep in range(replicates):
            inst_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(p, rep))
                            .generate_state(1)[0])
            jobs.append((p, n_per, s, inst_seed, tuple(alphas)))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_job, jobs, chunksize=8))
    else:
        rows = [_run_job(job) for job in jobs]
    return pd.DataFrame(rows)


def _run_job(job):
    p, n_per, s, inst_seed, alphas = job
    return validation_instance(p, n_per, s, inst_seed, alphas)


def rmse_table(frame: pd.DataFrame, alphas=(0.0, 0.5, 1.0)) -> pd.DataFrame:
    """Root-mean-square error of each approximation against the reference, by p."""
    rows = []
    for p, group in frame.groupby("p"):
        row = {"p": int(p), "n": int(group["n"].iloc[0]), "replicates": len(group)}
        for alpha in alphas:
            err = group[f"log10_abf_alpha{alpha:g}"] - group["log10_oracle"]
            row[f"rmse_alpha{alpha:g}"] = float(np.sqrt(np.mean(err ** 2)))
            row[f"mean_error_alpha{alpha:g}"] = float(np.mean(err))
        rows.append(row)
    return pd.DataFrame(rows).sort_values("p").reset_index(drop=True)
