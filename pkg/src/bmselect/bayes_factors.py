"""Bayes factor computations for candidate models.

All Bayes factors compare a candidate model against the trivial null model
(no candidate effects) under a flat prior limit on the controlled
coefficients. With known error covariances the computation is exact; with
unknown covariances a Laplace approximation plugs in a shrinkage estimate
blending the target- and null-model residual MLEs with a tunable weight
``alpha`` per subgroup.

Everything is evaluated on the active cells of the model in a symmetric,
inversion-free form,

    log BF = -1/2 log|I + Wh M Wh| + 1/2 || chol(I + Wh M Wh)^{-1} Wh u ||^2,

where ``M`` is the coefficient precision restricted to the active cells,
``u`` the precision-weighted estimate on those cells, and ``Wh`` a symmetric
square root of the prior covariance block. Singular priors need no special
casing in the formula; they only alter which subspace the target-model
residual covariance is fit on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import SSMRData
from .exceptions import DataValidationError, NumericalError
from .models import ModelConfig
from .priors import (
    RANK_RTOL,
    DensePriorMatrix,
    EffectGrid,
    NuisancePriors,
    PriorMatrix,
    PriorSpec,
    scale_w,
)
from .regression import (
    ActiveCells,
    NullModel,
    active_cells,
    cell_information,
    cell_least_squares,
    cell_score,
    prepare,
    symmetrize,
)

LOG10 = math.log(10.0)

#: Full product grids up to this many assignments are enumerated exactly;
#: larger grids fall back to seeded quasi-Monte Carlo sampling.
DEFAULT_GRID_BUDGET = 4096


@dataclass(frozen=True)
class BfResult:
    """A log10 Bayes factor with provenance.

    ``method`` is one of ``"exact"`` (known error covariances), ``"abf"``
    (Laplace approximation), ``"oracle-quadrature"`` or ``"oracle-mc"``.
    ``sigma_check`` records the covariance estimates plugged into the
    formula; ``restricted`` whether the target-model fit was constrained to
    the range of a rank-deficient prior. ``grid_sampled`` marks grid-averaged
    results that sampled assignments instead of enumerating the product grid.
    """

    log10_bf: float
    method: str
    alpha: tuple | None = None
    sigma_check: tuple | None = None
    restricted: bool = False
    grid_sampled: bool = False
    grid_seed: int | None = None
    mc_standard_error: float | None = None
    achieved_tol: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.log10_bf):
            raise NumericalError(f"non-finite log10 Bayes factor ({self.log10_bf})")


def as_alpha(alpha, s: int) -> np.ndarray:
    """Broadcast and validate the per-subgroup shrinkage weights."""
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(s, float(arr))
    if arr.shape != (s,):
        raise DataValidationError(f"alpha must be a scalar or length-{s} vector")
    if np.any(arr < 0) or np.any(arr > 1):
        raise DataValidationError("alpha entries must lie in [0, 1]")
    return arr


def shrink_covariances(sigma_hat, sigma_tilde, n_per, nuisance: NuisancePriors, alpha) -> list:
    """Shrinkage estimate blending target and null residual covariance MLEs.

    Per subgroup: ``nu/(n+nu) H + n/(n+nu) [alpha sigma_hat + (1-alpha)
    sigma_tilde]``; in the non-informative limit the first term vanishes and
    the weights collapse to the plain convex blend.
    """
    s = len(sigma_hat)
    alpha = as_alpha(alpha, s)
    out = []
    for i in range(s):
        blend = alpha[i] * sigma_hat[i] + (1.0 - alpha[i]) * sigma_tilde[i]
        if nuisance.use_limit:
            sig = blend
        else:
            n, nu = n_per[i], nuisance.nu[i]
            sig = (nu / (n + nu)) * nuisance.H[i] + (n / (n + nu)) * blend
        sig = symmetrize(sig)
        try:
            np.linalg.cholesky(sig)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"shrinkage covariance for subgroup {i} is singular; supply an "
                "informative nuisance prior (H, nu) or more observations"
            ) from exc
        out.append(sig)
    return out


def sigma_shrink(data: SSMRData, model: ModelConfig, nuisance: NuisancePriors | None = None,
                 alpha=0.5, null: NullModel | None = None) -> list:
    """Shrinkage covariance estimates for a model (unrestricted target fit)."""
    if null is None:
        null = prepare(data)
    if nuisance is None:
        nuisance = NuisancePriors.limit()
    cells = active_cells(model, data.layout)
    _, sigma_hat = cell_least_squares(null, cells)
    return shrink_covariances(sigma_hat, null.sigma_tilde, data.n_per_subgroup, nuisance, alpha)


def _sigma_inverses(sigma) -> list:
    out = []
    for i, sig in enumerate(sigma):
        try:
            chol = np.linalg.cholesky(symmetrize(np.asarray(sig, dtype=np.float64)))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"covariance for subgroup {i} is not positive definite") from exc
        inv = np.linalg.inv(chol)
        out.append(inv.T @ inv)
    return out


def _psd_half(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; tiny negative eigenvalues are clipped."""
    vals, vecs = np.linalg.eigh(symmetrize(matrix))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _detect_basis(matrix: np.ndarray):
    """Numerical range of a PSD matrix.

    Returns ``(restricted, basis)`` where ``basis`` has orthonormal columns
    spanning the eigenspace above the relative rank floor, or ``None`` when
    the matrix is numerically full rank.
    """
    a = matrix.shape[0]
    if a == 0:
        return False, None
    vals, vecs = np.linalg.eigh(symmetrize(matrix))
    top = vals[-1]
    if top <= 0:
        return True, np.zeros((a, 0))
    keep = vals > RANK_RTOL * top
    if keep.all():
        return False, None
    return True, vecs[:, keep]


def _log_bf_batch(w_half: np.ndarray, m: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Natural-log Bayes factors for a stack of prior square roots.

    ``w_half`` has shape (..., a, a); ``m`` and ``u`` are shared across the
    stack. The inner matrix ``I + Wh M Wh`` is symmetric positive definite by
    construction, so the determinant and quadratic form come from one
    Cholesky factorization each.
    """
    a = m.shape[0]
    if a == 0:
        return np.zeros(w_half.shape[:-2])
    s = w_half @ m @ w_half
    s = (s + np.swapaxes(s, -1, -2)) / 2.0
    c = s + np.eye(a)
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("prior or information matrix is numerically indefinite") from exc
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    v = w_half @ u
    z = np.linalg.solve(chol, v[..., None])[..., 0]
    quad = np.sum(z * z, axis=-1)
    return 0.5 * quad - 0.5 * logdet


def _check_prior_dims(w, data: SSMRData):
    if (w.s, w.r, w.p) != (data.s, data.r, data.p):
        raise DataValidationError(
            f"prior covariance dimensions (s={w.s}, r={w.r}, p={w.p}) do not match data "
            f"(s={data.s}, r={data.r}, p={data.p})"
        )


def exact_bf(data: SSMRData, model: ModelConfig, w, sigma_known,
             null: NullModel | None = None) -> BfResult:
    """Exact Bayes factor when the error covariances are known.

    The prior covariance may be singular; no inversion of it (or of the
    candidate Gram matrix) occurs. A scale-invariant prior is first rescaled
    by the known covariances.
    """
    _check_prior_dims(w, data)
    sigma_known = [np.asarray(sig, dtype=np.float64) for sig in sigma_known]
    if len(sigma_known) != data.s:
        raise DataValidationError(f"expected {data.s} known covariance matrices")
    if null is None:
        null = prepare(data)
    if w.scale_invariant:
        w = scale_w(w, sigma_known)
    cells = active_cells(model, data.layout)
    log_bf = _evaluate_at_sigma(null, cells, w, sigma_known)
    return BfResult(log_bf / LOG10, "exact", sigma_check=tuple(sigma_known))


def _evaluate_at_sigma(null: NullModel, cells: ActiveCells, w, sigma) -> float:
    """Shared formula evaluation given plug-in covariances (natural log)."""
    sig_inv = _sigma_inverses(sigma)
    m = cell_information(null, cells, sig_inv)
    u = cell_score(null, cells, sig_inv)
    w_half = _psd_half(w.active_matrix(cells))
    return float(_log_bf_batch(w_half[None], m, u)[0])


def _cell_scales(sigma, cells: ActiveCells) -> np.ndarray:
    """Residual standard deviation of each active cell's (subgroup, response)."""
    out = np.empty(cells.size)
    for i, sig in enumerate(sigma):
        idx = np.flatnonzero(cells.subgroup == i)
        if idx.size:
            out[idx] = np.sqrt(np.diag(sig)[cells.resp[idx]])
    return out


def abf(data: SSMRData, model: ModelConfig, w, nuisance: NuisancePriors | None = None,
        alpha=0.5, null: NullModel | None = None, sigma_check=None) -> BfResult:
    """Approximate Bayes factor with unknown error covariances.

    The target-model residual covariance is estimated by least squares on the
    model's active cells; when the prior covariance block is numerically rank
    deficient the fit is constrained to the prior's range (for scale-invariant
    priors the range is detected on the standardized scale and mapped through
    the null-model residual scales). Passing ``sigma_check`` pins the plug-in
    covariances instead, in which case the result coincides exactly with
    :func:`exact_bf` at those covariances.
    """
    _check_prior_dims(w, data)
    if null is None:
        null = prepare(data)
    if nuisance is None:
        nuisance = NuisancePriors.limit()
    alpha_vec = as_alpha(alpha, data.s)
    cells = active_cells(model, data.layout)

    if sigma_check is not None:
        sigma_chk = [np.asarray(sig, dtype=np.float64) for sig in sigma_check]
        restricted = False
    else:
        restricted, basis = _detect_basis(w.active_matrix(cells))
        if restricted and w.scale_invariant and basis.shape[1]:
            basis = _cell_scales(null.sigma_tilde, cells)[:, None] * basis
        _, sigma_hat = cell_least_squares(null, cells, basis if restricted else None)
        sigma_chk = shrink_covariances(
            sigma_hat, null.sigma_tilde, data.n_per_subgroup, nuisance, alpha_vec
        )
    w_use = scale_w(w, sigma_chk) if w.scale_invariant else w
    log_bf = _evaluate_at_sigma(null, cells, w_use, sigma_chk)
    return BfResult(
        log_bf / LOG10,
        "abf",
        alpha=tuple(alpha_vec),
        sigma_check=tuple(sigma_chk),
        restricted=restricted,
    )


def abf_singular(data: SSMRData, model: ModelConfig, w, nuisance: NuisancePriors | None = None,
                 alpha=0.5, null: NullModel | None = None) -> BfResult:
    """Approximate Bayes factor for a rank-deficient prior covariance.

    :func:`abf` already detects rank deficiency and takes the restricted
    path; this entry point additionally verifies that the deficiency was
    actually present (unless the active set is empty).
    """
    result = abf(data, model, w, nuisance, alpha, null=null)
    cells = active_cells(model, data.layout)
    if cells.size and not result.restricted:
        raise DataValidationError("prior covariance is numerically full rank on the active cells")
    return result


def _grid_assignments(grid: EffectGrid, k: int, budget: int, seed: int):
    """Grid-point assignments for k active covariates with log weights.

    Enumerates the product grid when it fits the budget; otherwise draws a
    quasi-Monte Carlo sample (largest power of two within budget) from the
    per-covariate weight distribution.
    """
    total = grid.size ** k
    if total <= budget:
        idx = np.indices([grid.size] * k).reshape(k, -1).T
        log_w = np.log(grid.weights)[idx].sum(axis=1)
        return idx, log_w, False
    from scipy.stats import qmc  # deferred: scipy.stats is heavy and rarely needed

    n_draw = 1 << max(0, int(math.floor(math.log2(budget))))
    sampler = qmc.Sobol(d=k, scramble=True, seed=seed)
    u = sampler.random_base2(int(math.log2(n_draw)))
    cum = np.cumsum(grid.weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, u, side="right")
    log_w = np.full(n_draw, -math.log(n_draw))
    return idx, log_w, True


def _assignment_pattern(w_blocks_rank, idx: np.ndarray):
    """Group rows of an assignment index array by their rank-deficiency pattern.

    ``w_blocks_rank[c][l]`` is True when grid point ``l`` makes active
    covariate ``c``'s block rank deficient. Returns a dict mapping pattern
    keys to row indices.
    """
    groups = {}
    for row in range(idx.shape[0]):
        key = tuple(
            int(idx[row, c]) if w_blocks_rank[c][idx[row, c]] else -1
            for c in range(idx.shape[1])
        )
        groups.setdefault(key, []).append(row)
    return groups


def model_bf(data: SSMRData, model: ModelConfig, prior: PriorSpec, alpha=0.5,
             budget: int = DEFAULT_GRID_BUDGET, seed: int = 0,
             null: NullModel | None = None) -> BfResult:
    """Grid-averaged Bayes factor of a candidate model.

    Each active covariate's (phi, omega) pair is drawn independently from the
    prior's effect grid, so the model Bayes factor is the weighted average of
    per-assignment Bayes factors over the product grid. The full product is
    enumerated when it has at most ``budget`` assignments; otherwise a seeded
    quasi-Monte Carlo subset is averaged and the result is flagged.
    """
    if null is None:
        null = prepare(data)
    cells = active_cells(model, data.layout)
    act = cells.active_covariates
    k = act.size
    alpha_vec = as_alpha(alpha, data.s)
    if k == 0:
        return BfResult(0.0, "abf", alpha=tuple(alpha_vec), sigma_check=null.sigma_tilde)

    grid = prior.grid
    idx, log_w, sampled = _grid_assignments(grid, k, budget, seed)

    # per active covariate: unscaled block variants and their rank status
    base_blocks, deficient, bases = [], [], []
    for c, j in enumerate(act):
        row = model.gammas[j].astype(np.float64)[cells.block_cells[c]]
        mask = np.outer(row, row)
        options, def_flags, basis_opts = [], [], []
        for phi, omega in grid.points:
            blk = omega ** 2 * mask + phi ** 2 * np.diag(row)
            options.append(blk)
            restricted, basis = _detect_basis(blk)
            def_flags.append(restricted)
            basis_opts.append(basis)
        base_blocks.append(options)
        deficient.append(def_flags)
        bases.append(basis_opts)

    groups = _assignment_pattern(deficient, idx)
    a = cells.size
    log_terms = np.empty(idx.shape[0])
    canonical_sigma = None
    any_restricted = False

    for key, rows in groups.items():
        restricted = any(l >= 0 for l in key)
        if restricted:
            any_restricted = True
            basis_blocks = []
            for c in range(k):
                if key[c] >= 0:
                    basis_blocks.append(bases[c][key[c]])
                else:
                    basis_blocks.append(np.eye(len(cells.cov_positions[c])))
            basis = np.zeros((a, sum(b.shape[1] for b in basis_blocks)))
            col = 0
            for c, b in enumerate(basis_blocks):
                basis[np.ix_(cells.cov_positions[c], range(col, col + b.shape[1]))] = b
                col += b.shape[1]
            if prior.scale_invariant:
                basis = _cell_scales(null.sigma_tilde, cells)[:, None] * basis
            _, sigma_hat = cell_least_squares(null, cells, basis)
        else:
            _, sigma_hat = cell_least_squares(null, cells)
        sigma_chk = shrink_covariances(
            sigma_hat, null.sigma_tilde, data.n_per_subgroup, nuisance=prior.nuisance,
            alpha=alpha_vec,
        )
        if not restricted:
            canonical_sigma = sigma_chk
        sig_inv = _sigma_inverses(sigma_chk)
        m = cell_information(null, cells, sig_inv)
        u = cell_score(null, cells, sig_inv)
        scales = _cell_scales(sigma_chk, cells) if prior.scale_invariant else np.ones(a)

        # per (covariate, grid point) square roots on this group's scale
        halves = []
        for c in range(k):
            pos = cells.cov_positions[c]
            s_c = scales[pos]
            halves.append([
                _psd_half(s_c[:, None] * blk * s_c[None, :]) for blk in base_blocks[c]
            ])
        rows = np.asarray(rows, dtype=np.intp)
        w_half = np.zeros((rows.size, a, a))
        for c in range(k):
            pos = cells.cov_positions[c]
            stacked = np.asarray(halves[c])[idx[rows, c]]
            w_half[:, pos[:, None], pos[None, :]] = stacked
        log_terms[rows] = _log_bf_batch(w_half, m, u)

    if canonical_sigma is None:
        # every assignment was rank deficient; fall back to the unrestricted fit
        _, sigma_hat = cell_least_squares(null, cells)
        canonical_sigma = shrink_covariances(
            sigma_hat, null.sigma_tilde, data.n_per_subgroup, prior.nuisance, alpha_vec
        )
    log_bf = logsumexp(log_terms + log_w)
    return BfResult(
        log_bf / LOG10,
        "abf",
        alpha=tuple(alpha_vec),
        sigma_check=tuple(canonical_sigma),
        restricted=any_restricted,
        grid_sampled=sampled,
        grid_seed=seed if sampled else None,
    )


@dataclass(frozen=True)
class ConnectionStats:
    """Frequentist statistics tied to the Bayes factor under proportional priors.

    With a prior covariance ``c`` times the estimator covariance, the Laplace
    Bayes factor at ``alpha=1`` is a monotone function of the Wald statistic
    and at ``alpha=0`` of the score statistic; ``bic`` is the Schwarz
    criterion built from the same likelihood ratio.
    """

    t_wald: float
    t_score: float
    bic: float
    log_lik_ratio: float
    c: float


def proportional_prior(data: SSMRData, model: ModelConfig, c: float, alpha,
                       null: NullModel | None = None) -> DensePriorMatrix:
    """Prior covariance ``c * V`` with ``V`` evaluated at the alpha-shrinkage estimate.

    Requires the information matrix on the active cells to be invertible.
    """
    if null is None:
        null = prepare(data)
    cells = active_cells(model, data.layout)
    sigma_chk = sigma_shrink(data, model, alpha=alpha, null=null)
    m = cell_information(null, cells, _sigma_inverses(sigma_chk))
    try:
        v = np.linalg.inv(np.linalg.cholesky(m))
        v = v.T @ v
    except np.linalg.LinAlgError as exc:
        raise NumericalError("estimator covariance is rank deficient on the active cells") from exc
    layout = data.layout
    flat = (cells.subgroup * layout.p + cells.cov) * layout.r + cells.resp
    dense = np.zeros((layout.size, layout.size))
    dense[np.ix_(flat, flat)] = c * v
    return DensePriorMatrix(dense, data.s, data.r, data.p)


def connection_stats(data: SSMRData, model: ModelConfig, c: float,
                     sigma_known=None, null: NullModel | None = None) -> ConnectionStats:
    """Wald/score statistics, likelihood ratio and BIC for a candidate model.

    The Wald statistic weights by the target-model covariance MLEs, the score
    statistic by the null-model MLEs. The likelihood ratio uses the known
    covariances when given and the profile likelihood otherwise. The BIC
    penalty counts the model's active cells per subgroup.
    """
    if c <= 0:
        raise DataValidationError("c must be positive")
    if null is None:
        null = prepare(data)
    cells = active_cells(model, data.layout)
    _, sigma_hat = cell_least_squares(null, cells)

    def _quad(sigma):
        sig_inv = _sigma_inverses(sigma)
        m = cell_information(null, cells, sig_inv)
        u = cell_score(null, cells, sig_inv)
        try:
            chol = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "information matrix is rank deficient; proportional-prior statistics "
                "require a full-rank design on the active cells"
            ) from exc
        z = np.linalg.solve(chol, u)
        return float(z @ z)

    t_wald = _quad(sigma_hat) if cells.size else 0.0
    t_score = _quad(null.sigma_tilde) if cells.size else 0.0

    if sigma_known is not None:
        ll_ratio = 0.5 * _quad(sigma_known) if cells.size else 0.0
    else:
        ll_ratio = 0.0
        for i, sub in enumerate(data.subgroups):
            sign_t, logdet_t = np.linalg.slogdet(null.sigma_tilde[i])
            sign_h, logdet_h = np.linalg.slogdet(sigma_hat[i])
            if sign_t <= 0 or sign_h <= 0:
                raise NumericalError(f"residual covariance for subgroup {i} is singular")
            ll_ratio += 0.5 * sub.n * (logdet_t - logdet_h)

    penalty = 0.0
    for i, sub in enumerate(data.subgroups):
        a_i = int(np.count_nonzero(cells.subgroup == i))
        penalty += 0.5 * a_i * math.log(sub.n)
    return ConnectionStats(t_wald, t_score, float(ll_ratio - penalty), float(ll_ratio), float(c))
