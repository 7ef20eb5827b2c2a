"""Frequentist building blocks: residualization, least squares, covariance MLEs.

Everything downstream of the raw data goes through the numerically stable
path that never inverts the candidate Gram matrix: candidates are first
residualized against the controls, coefficient estimates come from
minimum-norm (pseudoinverse) least squares on the residualized design, and
the precision of the coefficient estimates is applied in factored form
``(G'G) (x) Sigma^{-1}`` per subgroup rather than ever being assembled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SSMRData, SubgroupData, CoefficientLayout
from .exceptions import DataValidationError, DegenerateFitError, NumericalError
from .models import ModelConfig

# Relative pseudoinverse cutoff: singular values below
# max_singular_value * PINV_RTOL_UNIT * max(matrix shape) are treated as zero.
PINV_RTOL_UNIT = 1e-10


def _rcond(shape) -> float:
    return PINV_RTOL_UNIT * max(shape)


def _lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares with the package-wide rank cutoff."""
    if a.shape[1] == 0:
        return np.zeros((0,) + b.shape[1:])
    sol, _, _, _ = np.linalg.lstsq(a, b, rcond=_rcond(a.shape))
    return sol


def symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def residualize(sub: SubgroupData) -> np.ndarray:
    """Project the candidate covariates onto the orthogonal complement of the controls.

    Returns the ``n x p`` matrix whose columns are the candidate columns with
    their control-space components removed; its columns are orthogonal to the
    control column space up to floating-point error.
    """
    coef = _lstsq(sub.controls, sub.candidates)
    return sub.candidates - sub.controls @ coef


#: Full Gram matrices are precomputed up to this many candidates; beyond it
#: submatrices are formed on demand to keep memory linear in p.
DENSE_GRAM_LIMIT = 2048


@dataclass(frozen=True)
class NullModel:
    """Per-dataset quantities that do not depend on the candidate model.

    Attributes
    ----------
    residualized : tuple of ndarray (n_i, p)
        Control-residualized candidate matrices G_i.
    null_residuals : tuple of ndarray (n_i, r)
        Response residuals after regressing on the controls alone.
    cross : tuple of ndarray (p, r)
        Cross products G_i' (null residuals); drive every downstream fit.
    sigma_tilde : tuple of ndarray (r, r)
        Null-model residual covariance MLEs (1/n_i scaling).
    dense_gram : tuple of ndarray (p, p) or None
        Full Gram matrices, precomputed only for moderate p.
    """

    data: SSMRData
    residualized: tuple
    null_residuals: tuple
    cross: tuple
    sigma_tilde: tuple
    dense_gram: tuple | None

    @property
    def layout(self) -> CoefficientLayout:
        return self.data.layout

    def gram(self, i: int) -> np.ndarray:
        """Full Gram matrix of subgroup ``i`` (materialized on demand)."""
        if self.dense_gram is not None:
            return self.dense_gram[i]
        g = self.residualized[i]
        return symmetrize(g.T @ g)

    def gram_sub(self, i: int, cols: np.ndarray) -> np.ndarray:
        """Gram submatrix over the given candidate columns."""
        if self.dense_gram is not None:
            return self.dense_gram[i][np.ix_(cols, cols)]
        g = self.residualized[i][:, cols]
        return symmetrize(g.T @ g)


def prepare(data: SSMRData) -> NullModel:
    """Fit the null model once and cache everything the engines reuse."""
    gs, resids, crosses, tildes = [], [], [], []
    for i, sub in enumerate(data.subgroups):
        if sub.n < sub.q + 1:
            raise DegenerateFitError(
                f"subgroup {i}: n={sub.n} observations cannot fit {sub.q} controls "
                "with a residual degree of freedom"
            )
        g = residualize(sub)
        coef = _lstsq(sub.controls, sub.responses)
        resid = sub.responses - sub.controls @ coef
        gs.append(g)
        resids.append(resid)
        crosses.append(g.T @ resid)
        tildes.append(symmetrize(resid.T @ resid) / sub.n)
    if data.p <= DENSE_GRAM_LIMIT:
        dense = tuple(symmetrize(g.T @ g) for g in gs)
    else:
        dense = None
    return NullModel(data, tuple(gs), tuple(resids), tuple(crosses), tuple(tildes), dense)


@dataclass(frozen=True)
class ActiveCells:
    """Index bookkeeping for the active cells of a model, in layout order.

    ``subgroup``, ``cov`` and ``resp`` are parallel arrays over the ``a``
    active cells. ``cov_positions`` maps each active covariate to the
    positions of its cells within the active ordering (needed to scatter
    per-covariate prior blocks), and ``block_cells`` gives, for each active
    covariate, which of its ``s*r`` block cells are active.
    """

    subgroup: np.ndarray
    cov: np.ndarray
    resp: np.ndarray
    active_covariates: np.ndarray
    cov_positions: tuple
    block_cells: tuple

    @property
    def size(self) -> int:
        return self.subgroup.shape[0]


def active_cells(model: ModelConfig, layout: CoefficientLayout) -> ActiveCells:
    s, p, r = layout.s, layout.p, layout.r
    # (s, p, r) in C order enumerates cells in coefficient-layout order
    grid = model.gammas.reshape(p, s, r).transpose(1, 0, 2)
    subs, covs, resps = (np.asarray(ix, dtype=np.intp) for ix in np.nonzero(grid))
    act = np.flatnonzero(model.gammas.any(axis=1))
    positions, block = [], []
    for j in act:
        pos = np.flatnonzero(covs == j)  # already ordered by (subgroup, response)
        positions.append(pos)
        block.append(subs[pos] * r + resps[pos])
    return ActiveCells(subs, covs, resps, act, tuple(positions), tuple(block))


def cell_information(null: NullModel, cells: ActiveCells, sigma_inv: list) -> np.ndarray:
    """Submatrix of the coefficient precision restricted to the active cells.

    Entry ((i1,j1,k1),(i2,j2,k2)) is ``gram_i[j1,j2] * sigma_inv_i[k1,k2]``
    when the cells share a subgroup and zero otherwise.
    """
    a = cells.size
    m = np.zeros((a, a))
    for i in range(len(null.data.subgroups)):
        idx = np.flatnonzero(cells.subgroup == i)
        if idx.size == 0:
            continue
        jj = cells.cov[idx]
        kk = cells.resp[idx]
        uniq, inv = np.unique(jj, return_inverse=True)
        gram = null.gram_sub(i, uniq)[np.ix_(inv, inv)]
        m[np.ix_(idx, idx)] = gram * sigma_inv[i][np.ix_(kk, kk)]
    return symmetrize(m)


def cell_score(null: NullModel, cells: ActiveCells, sigma_inv: list) -> np.ndarray:
    """Precision-weighted estimate ``V^{-1} beta_hat`` on the active cells.

    Uses the identity that the subgroup block of ``V^{-1} beta_hat`` equals
    ``vec(Sigma^{-1} Y' G)``, so no coefficient estimate is ever formed.
    """
    out = np.empty(cells.size)
    for i in range(len(null.data.subgroups)):
        idx = np.flatnonzero(cells.subgroup == i)
        if idx.size == 0:
            continue
        t = sigma_inv[i] @ null.cross[i].T  # (r, p)
        out[idx] = t[cells.resp[idx], cells.cov[idx]]
    return out


def cell_least_squares(null: NullModel, cells: ActiveCells, basis: np.ndarray | None = None):
    """Least squares on the active cells, optionally constrained to a subspace.

    With ``basis=None`` each (subgroup, response) pair is fit independently on
    its active candidate columns via minimum-norm least squares. With a basis
    ``K`` (columns spanning the admissible coefficient subspace in active-cell
    coordinates) the coefficients are reparameterized as ``K theta`` and theta
    is fit by unconstrained least squares, which may couple cells across
    subgroups and responses.

    Returns
    -------
    beta_active : ndarray (a,)
        Fitted coefficients on the active cells, zero elsewhere implied.
    sigma_hat : list of ndarray (r, r)
        Residual covariance MLEs of the fitted (target) model per subgroup.
    """
    data = null.data
    a = cells.size
    if a == 0:
        return np.zeros(0), [s.copy() for s in null.sigma_tilde]

    if basis is None:
        beta = np.zeros(a)
        sigma_hat = []
        for i, sub in enumerate(data.subgroups):
            resid = null.null_residuals[i].copy()
            for k in range(sub.r):
                idx = np.flatnonzero((cells.subgroup == i) & (cells.resp == k))
                if idx.size == 0:
                    continue
                cols = null.residualized[i][:, cells.cov[idx]]
                coef = _lstsq(cols, null.null_residuals[i][:, k])
                beta[idx] = coef
                resid[:, k] -= cols @ coef
            sigma_hat.append(symmetrize(resid.T @ resid) / sub.n)
        return beta, sigma_hat

    if basis.ndim != 2 or basis.shape[0] != a:
        raise DataValidationError(f"basis must have shape ({a}, d)")
    if basis.shape[1] == 0:
        return np.zeros(a), [s.copy() for s in null.sigma_tilde]
    # normal equations in the reparameterized coordinates
    identity_inv = [np.eye(data.r) for _ in range(data.s)]
    phi = cell_information(null, cells, identity_inv)
    rhs = np.zeros(a)
    for i in range(data.s):
        idx = np.flatnonzero(cells.subgroup == i)
        if idx.size:
            rhs[idx] = null.cross[i][cells.cov[idx], cells.resp[idx]]
    theta = _lstsq(basis.T @ phi @ basis, basis.T @ rhs)
    beta = basis @ theta
    sigma_hat = []
    for i, sub in enumerate(data.subgroups):
        resid = null.null_residuals[i].copy()
        idx = np.flatnonzero(cells.subgroup == i)
        for pos in idx:
            resid[:, cells.resp[pos]] -= null.residualized[i][:, cells.cov[pos]] * beta[pos]
        sigma_hat.append(symmetrize(resid.T @ resid) / sub.n)
    return beta, sigma_hat


@dataclass(frozen=True)
class MleResult:
    """Maximum-likelihood summaries for one candidate model.

    ``beta_g_hat`` holds the fitted coefficients in coefficient-layout order
    with zeros at cells excluded by the model. ``sigma_hat`` / ``sigma_tilde``
    are the target- and null-model residual covariance MLEs, and
    ``vg_inv_factors`` the per-subgroup Gram matrices of the residualized
    candidates. Under exact collinearity the coefficients follow the
    minimum-norm pseudoinverse convention; fitted values are unique.
    """

    beta_g_hat: np.ndarray
    sigma_hat: tuple
    sigma_tilde: tuple
    vg_inv_factors: tuple
    layout: CoefficientLayout


def fit_mle(data: SSMRData, model: ModelConfig, null: NullModel | None = None) -> MleResult:
    """Fit a candidate model by rank-tolerant least squares.

    The null model (controls only) is fit once per dataset; the target model
    is fit on the control-residualized candidates restricted to the cells the
    model activates.
    """
    if model.p != data.p or model.s != data.s or model.r != data.r:
        raise DataValidationError(
            f"model dimensions (p={model.p}, s={model.s}, r={model.r}) do not match "
            f"data (p={data.p}, s={data.s}, r={data.r})"
        )
    if null is None:
        null = prepare(data)
    layout = data.layout
    cells = active_cells(model, layout)
    beta_active, sigma_hat = cell_least_squares(null, cells)
    beta = np.zeros(layout.size)
    if cells.size:
        flat = (cells.subgroup * layout.p + cells.cov) * layout.r + cells.resp
        beta[flat] = beta_active
    factors = tuple(null.gram(i) for i in range(data.s))
    return MleResult(beta, tuple(sigma_hat), null.sigma_tilde, factors, layout)


def _sigma_inverses(sigma, r: int) -> list:
    out = []
    for i, sig in enumerate(sigma):
        sig = np.asarray(sig, dtype=np.float64)
        if sig.shape != (r, r):
            raise DataValidationError(f"sigma[{i}] must be {r}x{r}, got {sig.shape}")
        try:
            chol = np.linalg.cholesky(symmetrize(sig))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"covariance for subgroup {i} is not positive definite"
            ) from exc
        inv = np.linalg.inv(chol)
        out.append(inv.T @ inv)
    return out


def vg_inverse_times(mle: MleResult, sigma, v: np.ndarray) -> np.ndarray:
    """Apply the block precision ``(+)_i [(G_i'G_i) (x) Sigma_i^{-1}]`` to a vector.

    The full precision matrix is never formed; each subgroup block acts as
    ``gram @ V @ sigma^{-1}`` on the reshaped (p, r) slice of ``v``.
    """
    layout = mle.layout
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (layout.size,):
        raise DataValidationError(f"v must have length {layout.size}")
    sig_inv = _sigma_inverses(sigma, layout.r)
    out = np.empty_like(v)
    step = layout.p * layout.r
    for i in range(layout.s):
        block = v[i * step:(i + 1) * step].reshape(layout.p, layout.r)
        out[i * step:(i + 1) * step] = (mle.vg_inv_factors[i] @ block @ sig_inv[i]).ravel()
    return out
