"""Independent reference computations used to validate the main engine.

Everything here deliberately avoids the engine's code paths: projections use
QR instead of least squares, the exact Bayes factor is evaluated from dense
matrices with explicit inverses, marginal likelihoods over unknown error
variances are integrated numerically, and prior integrals are checked by
Monte Carlo. These routines are slow and limited to small problems by
design.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag
from scipy.special import logsumexp

from .bayes_factors import LOG10, BfResult, model_bf
from .data import SSMRData
from .exceptions import DataValidationError, NumericalError, ResourceLimitError
from .models import ModelConfig
from .priors import NuisancePriors, PriorSpec, log_prior, scale_w
from .regression import active_cells


def _qr_residual(target: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Residual of columns of ``target`` after projecting out ``design`` (QR path)."""
    q, rr = np.linalg.qr(design)
    keep = np.abs(np.diag(rr)) > 1e-12 * max(design.shape) * max(1.0, np.abs(rr).max())
    q = q[:, keep]
    return target - q @ (q.T @ target)


def dense_exact_log10_bf(data: SSMRData, model: ModelConfig, w, sigma_known) -> float:
    """Exact Bayes factor via the dense formula with explicit inverses.

    Straight evaluation of ``|I + V^{-1} W|^{-1/2} exp(0.5 b' V^{-1} [W (I +
    V^{-1} W)^{-1}] V^{-1} b)`` on the full coefficient space, with the
    minimum-norm coefficient estimate. Small problems only.
    """
    layout = data.layout
    sigma_known = [np.asarray(s, dtype=np.float64) for s in sigma_known]
    if w.scale_invariant:
        w = scale_w(w, sigma_known)
    w_dense = w.dense(layout)

    vinv_blocks, beta = [], []
    for i, sub in enumerate(data.subgroups):
        g = _qr_residual(sub.candidates, sub.controls)
        resid = _qr_residual(sub.responses, sub.controls)
        b_hat = np.linalg.pinv(g) @ resid  # (p, r)
        beta.append(b_hat.ravel())
        vinv_blocks.append(np.kron(g.T @ g, np.linalg.inv(sigma_known[i])))
    vinv = block_diag(*vinv_blocks)
    beta = np.concatenate(beta)

    inner = np.eye(layout.size) + vinv @ w_dense
    sign, logdet = np.linalg.slogdet(inner)
    if sign <= 0:
        raise NumericalError("dense determinant is not positive")
    middle = w_dense @ np.linalg.inv(inner)
    vb = vinv @ beta
    quad = float(vb @ middle @ vb)
    return (-0.5 * logdet + 0.5 * quad) / LOG10


_LEGGAUSS_CACHE: dict = {}


def _leggauss(n_nodes: int):
    if n_nodes not in _LEGGAUSS_CACHE:
        _LEGGAUSS_CACHE[n_nodes] = np.polynomial.legendre.leggauss(n_nodes)
    return _LEGGAUSS_CACHE[n_nodes]


def _theta_nodes(shape: float, rate: float, n_nodes: int, half_width_sd: float = 10.0):
    """Gauss-Legendre nodes/log-weights for one log-precision coordinate.

    The base weight is ``tau^shape * exp(-rate * tau)`` under ``d tau``;
    in ``theta = log tau`` coordinates the integrand is
    ``exp((shape+1) theta - rate e^theta)``, a smooth unimodal bump centered
    at ``log((shape+1)/rate)`` with curvature ``shape+1``.
    """
    k = shape + 1.0
    mode = math.log(k / rate)
    sd = 1.0 / math.sqrt(k)
    half = half_width_sd * sd
    x, wts = _leggauss(n_nodes)
    theta = mode + half * x
    log_w = np.log(wts) + math.log(half)
    log_g = k * theta - rate * np.exp(theta)
    return theta, log_w + log_g


class _ExactEvaluator:
    """Batched evaluation of known-variance Bayes factors over precision nodes.

    Only for single-response systems: the precision acts per subgroup as a
    scalar multiplier, so the inner matrix is linear in the precisions and
    can be assembled for many nodes (and several prior covariances) at once.
    For standardized (scale-invariant) priors the determinant term is
    precision-free and the quadratic form collapses to an s x s bilinear form
    in the root precisions.
    """

    def __init__(self, data: SSMRData, model: ModelConfig, priors):
        if data.r != 1:
            raise DataValidationError("quadrature oracle requires single-response data (r=1)")
        cells = active_cells(model, data.layout)
        self.a = cells.size
        self.s = data.s
        self.n_priors = len(priors)
        flags = {bool(w.scale_invariant) for w in priors}
        if len(flags) != 1:
            raise DataValidationError("all priors in one quadrature call must share the scale mode")
        self.scale_invariant = flags.pop()
        grams, crosses = [], []
        for sub in data.subgroups:
            g = _qr_residual(sub.candidates, sub.controls)
            resid = _qr_residual(sub.responses, sub.controls)
            grams.append(g.T @ g)
            crosses.append((g.T @ resid)[:, 0])
        # h: fixed score direction; m_parts[i]: information per unit precision
        self.h = np.zeros(self.a)
        self.m_parts = np.zeros((self.s, self.a, self.a))
        for i in range(self.s):
            idx = np.flatnonzero(cells.subgroup == i)
            if idx.size:
                jj = cells.cov[idx]
                self.h[idx] = crosses[i][jj]
                self.m_parts[i][np.ix_(idx, idx)] = grams[i][np.ix_(jj, jj)]
        self.subgroup_of_cell = cells.subgroup
        self.cells = cells
        self._prepare(priors)

    def _prepare(self, priors):
        mats = [w.active_matrix(self.cells) for w in priors]
        if self.scale_invariant:
            kbar = self.m_parts.sum(axis=0)
            logdets, aggs = [], []
            for u_active in mats:
                inner = np.eye(self.a) + kbar @ u_active
                sign, logdet = np.linalg.slogdet(inner)
                if sign <= 0:
                    raise NumericalError("oracle determinant is not positive")
                q = np.linalg.solve(inner.T, u_active.T).T
                q = (q + q.T) / 2.0
                weighted = q * np.outer(self.h, self.h)
                agg = np.zeros((self.s, self.s))
                for i1 in range(self.s):
                    for i2 in range(self.s):
                        agg[i1, i2] = weighted[np.ix_(
                            self.subgroup_of_cell == i1, self.subgroup_of_cell == i2
                        )].sum()
                logdets.append(float(logdet))
                aggs.append(agg)
            self._const_logdet = np.asarray(logdets)
            self._agg = np.stack(aggs)
        else:
            s_parts, v_parts = [], []
            for u_active in mats:
                vals, vecs = np.linalg.eigh((u_active + u_active.T) / 2.0)
                w_half = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
                s_parts.append(np.stack([w_half @ mp @ w_half for mp in self.m_parts]))
                v_parts.append(np.stack([
                    w_half @ np.where(self.subgroup_of_cell == i, self.h, 0.0)
                    for i in range(self.s)
                ]))
            self._s_parts = np.stack(s_parts)  # (L, s, a, a)
            self._v_parts = np.stack(v_parts)  # (L, s, a)

    def log_bf(self, tau: np.ndarray) -> np.ndarray:
        """Natural-log Bayes factors at precision vectors: (nodes, n_priors)."""
        n = tau.shape[0]
        if self.a == 0:
            return np.zeros((n, self.n_priors))
        if self.scale_invariant:
            root = np.sqrt(tau)
            quad = np.einsum("ni,lij,nj->nl", root, self._agg, root)
            return 0.5 * quad - 0.5 * self._const_logdet[None, :]
        s_mat = np.einsum("ns,lsab->nlab", tau, self._s_parts)
        s_mat += np.eye(self.a)
        sign, logdet = np.linalg.slogdet(s_mat)
        if np.any(sign <= 0):
            raise NumericalError("oracle determinant is not positive")
        v = np.einsum("ns,lsa->nla", tau, self._v_parts)
        quad = np.einsum("nla,nla->nl", v, np.linalg.solve(s_mat, v[..., None])[..., 0])
        return 0.5 * quad - 0.5 * logdet


def quadrature_mixture_bf(data: SSMRData, model: ModelConfig, priors, weights=None,
                          nuisance: NuisancePriors | None = None, rel_tol: float = 1e-6,
                          max_nodes: int = 128) -> BfResult:
    """Reference Bayes factor of a finite prior mixture by numerical integration.

    Single-response systems with a handful of subgroups only. Integrates the
    known-variance Bayes factor of every mixture component against the
    null-model posterior of each subgroup's precision on a tensor product of
    Gauss-Legendre grids in log-precision, refining the node count until the
    mixture value is stable to ``rel_tol``. Mixing after integration is exact
    because the Bayes factor is linear in the prior.
    """
    if data.r != 1:
        raise DataValidationError("quadrature oracle requires single-response data (r=1)")
    if data.s > 4:
        raise DataValidationError("quadrature oracle supports at most four subgroups")
    if nuisance is None:
        nuisance = NuisancePriors.limit()
    if weights is None:
        weights = np.full(len(priors), 1.0 / len(priors))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(priors),) or abs(weights.sum() - 1.0) > 1e-9:
        raise DataValidationError("mixture weights must sum to one over the priors")

    shapes, rates = [], []
    for i, sub in enumerate(data.subgroups):
        resid = _qr_residual(sub.responses, sub.controls)
        ssr = float(resid.T @ resid)
        nu = 0.0 if nuisance.use_limit else nuisance.nu[i]
        h = 0.0 if nuisance.use_limit else float(np.asarray(nuisance.H[i]).reshape(())) * nu
        shapes.append((sub.n + nu) / 2.0)
        rates.append((ssr + h) / 2.0)

    evaluator = _ExactEvaluator(data, model, priors)

    def integral(n_nodes: int, chunk: int = 1 << 15) -> float:
        axes = [_theta_nodes(shapes[i], rates[i], n_nodes) for i in range(data.s)]
        # denominator factorizes; numerator needs the tensor grid
        log_den = sum(float(logsumexp(lw)) for _, lw in axes)
        taus = [np.exp(t) for t, _ in axes]
        log_ws = [lw for _, lw in axes]
        total = n_nodes ** data.s
        pieces = []
        for start in range(0, total, chunk):
            flat = np.arange(start, min(start + chunk, total))
            ids = np.unravel_index(flat, (n_nodes,) * data.s)
            tau = np.stack([taus[i][ids[i]] for i in range(data.s)], axis=1)
            log_weight = sum(log_ws[i][ids[i]] for i in range(data.s))
            pieces.append(logsumexp(log_weight[:, None] + evaluator.log_bf(tau), axis=0))
        log_num = logsumexp(np.stack(pieces), axis=0)  # per prior
        return float(logsumexp(log_num - log_den, b=weights)) / LOG10

    n_nodes = 16
    prev = integral(n_nodes)
    achieved = math.inf
    while n_nodes < max_nodes:
        n_nodes *= 2
        cur = integral(n_nodes)
        achieved = abs(cur - prev) / max(1.0, abs(cur))
        prev = cur
        if achieved <= rel_tol:
            return BfResult(prev, "oracle-quadrature", achieved_tol=achieved)
    raise NumericalError(
        f"quadrature did not reach rel_tol={rel_tol}; achieved {achieved:.3g} "
        f"at {n_nodes} nodes per dimension"
    )


def quadrature_bf(data: SSMRData, model: ModelConfig, w,
                  nuisance: NuisancePriors | None = None, rel_tol: float = 1e-6,
                  sigma_known=None, max_nodes: int = 128) -> BfResult:
    """Reference Bayes factor for one prior covariance; see :func:`quadrature_mixture_bf`.

    With ``sigma_known`` the integration is skipped and the known-variance
    value at that point is returned (dense evaluation path).
    """
    if sigma_known is not None:
        value = dense_exact_log10_bf(data, model, w, sigma_known)
        return BfResult(value, "oracle-quadrature", sigma_check=tuple(
            np.asarray(s, dtype=np.float64) for s in sigma_known
        ), achieved_tol=0.0)
    return quadrature_mixture_bf(data, model, [w], nuisance=nuisance,
                                 rel_tol=rel_tol, max_nodes=max_nodes)


def mc_bf(data: SSMRData, model: ModelConfig, w, sigma_known, draws: int = 10000,
          seed: int = 0) -> BfResult:
    """Monte Carlo check of the known-variance Bayes factor.

    Averages the likelihood ratio against the null over prior draws of the
    coefficients; rank-deficient priors are sampled inside their range. The
    reported standard error is for the log10 value (delta method).
    """
    if draws < 1:
        raise DataValidationError("draws must be positive")
    sigma_known = [np.asarray(s, dtype=np.float64) for s in sigma_known]
    if w.scale_invariant:
        w = scale_w(w, sigma_known)
    cells = active_cells(model, data.layout)
    a = cells.size
    if a == 0:
        return BfResult(0.0, "oracle-mc", sigma_check=tuple(sigma_known), mc_standard_error=0.0)

    w_active = w.active_matrix(cells)
    vals, vecs = np.linalg.eigh((w_active + w_active.T) / 2.0)
    keep = vals > 1e-12 * max(1.0, vals.max())
    root = vecs[:, keep] * np.sqrt(vals[keep])

    lin = np.zeros(a)
    quad_mat = np.zeros((a, a))
    for i, sub in enumerate(data.subgroups):
        g = _qr_residual(sub.candidates, sub.controls)
        resid = _qr_residual(sub.responses, sub.controls)
        sig_inv = np.linalg.inv(sigma_known[i])
        t1 = g.T @ resid @ sig_inv  # (p, r)
        idx = np.flatnonzero(cells.subgroup == i)
        if idx.size == 0:
            continue
        lin[idx] = t1[cells.cov[idx], cells.resp[idx]]
        gram = g.T @ g
        jj, kk = cells.cov[idx], cells.resp[idx]
        quad_mat[np.ix_(idx, idx)] = gram[np.ix_(jj, jj)] * sig_inv[np.ix_(kk, kk)]

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((draws, root.shape[1]))
    betas = z @ root.T
    log_ratio = betas @ lin - 0.5 * np.einsum("na,ab,nb->n", betas, quad_mat, betas)

    shift = log_ratio.max()
    scaled = np.exp(log_ratio - shift)
    mean = scaled.mean()
    se_ratio = scaled.std(ddof=1) / math.sqrt(draws)
    log10_bf = (shift + math.log(mean)) / LOG10
    se_log10 = se_ratio / (mean * LOG10)
    return BfResult(log10_bf, "oracle-mc", sigma_check=tuple(sigma_known),
                    mc_standard_error=float(se_log10))


@dataclass(frozen=True)
class BrutePosterior:
    """Exhaustive posterior over every candidate model."""

    codes: np.ndarray        # (n_models, p) per-covariate state codes
    log_posterior: np.ndarray
    pip: np.ndarray          # (p, n_states) marginal configuration probabilities


def brute_posterior(data: SSMRData, prior: PriorSpec, alpha=0.5,
                    max_models: int = 1 << 16, budget: int = 4096,
                    seed: int = 0) -> BrutePosterior:
    """Naive exhaustive posterior: loop every model, no shared search machinery.

    Exists to validate the production enumeration and sampler on small
    problems; refuses spaces larger than ``max_models``.
    """
    p = data.p
    n_states = 1 << (data.s * data.r)
    total = n_states ** p
    if total > max_models:
        raise ResourceLimitError(
            f"{total} candidate models exceed the brute-force limit {max_models}"
        )
    from .regression import prepare  # local import keeps module dependencies flat

    null = prepare(data)
    codes = np.array(list(itertools.product(range(n_states), repeat=p)), dtype=np.int64)
    scores = np.empty(codes.shape[0])
    for row in range(codes.shape[0]):
        model = ModelConfig.from_codes(codes[row], p, data.s, data.r)
        lp = log_prior(model, prior.model_prior)
        bf = model_bf(data, model, prior, alpha=alpha, budget=budget, seed=seed, null=null)
        scores[row] = lp + LOG10 * bf.log10_bf
    log_post = scores - logsumexp(scores)
    pip = np.zeros((p, n_states))
    post = np.exp(log_post)
    for j in range(p):
        for state in range(n_states):
            pip[j, state] = post[codes[:, j] == state].sum()
    return BrutePosterior(codes, log_post, pip)
