"""Prior specification: model-space prior, effect-size grid, and prior covariance.

The three layers are (1) a factorized prior over per-covariate configurations,
(2) a deterministic injection from a model skeleton to the binary support of
the coefficient prior covariance (each covariate contributes the outer product
of its configuration vector, independent across covariates), and (3) a finite
grid of (heterogeneity, scale) pairs quantifying the non-zero entries, with
the option of interpreting the covariance on standardized (residual-scaled)
effects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import CoefficientLayout
from .exceptions import DataValidationError, NumericalError
from .models import ModelConfig, all_state_codes, code_to_gamma, gamma_to_string, string_to_gamma

# Relative eigenvalue floors: a prior block is accepted as PSD when its
# smallest eigenvalue is >= -PSD_FLOOR * max(|eigenvalues|); eigenvalues below
# RANK_RTOL * max are treated as zero when detecting rank deficiency. The
# rank floor must sit above the ridge probes used in continuity checks
# (lambda down to 1e-8 on unit-scale blocks) and below any genuine eigenvalue
# of the shipped grids.
PSD_FLOOR = 1e-10
RANK_RTOL = 1e-6

#: Default effect-size grid: (heterogeneity sd phi, average-effect sd omega).
DEFAULT_GRID = ((0.05, 0.20), (0.10, 0.40), (0.20, 0.80), (0.40, 1.60))


@dataclass(frozen=True)
class EffectGrid:
    """Finite mixture grid over (phi, omega) effect-size pairs.

    ``phi`` is the prior standard deviation of per-cell deviations around the
    covariate's average effect and ``omega`` the prior standard deviation of
    the average effect itself; the implied prior correlation between two
    active cells of one covariate is ``omega^2 / (omega^2 + phi^2)``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise DataValidationError("grid points must be a non-empty list of (phi, omega) pairs")
        if np.any(pts < 0) or not np.all(np.isfinite(pts)):
            raise DataValidationError("phi and omega must be finite and non-negative")
        if np.any(np.all(pts == 0, axis=1)):
            raise DataValidationError("phi and omega cannot both be zero on a grid point")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DataValidationError("grid weights must be a probability vector over the points")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def default(cls) -> "EffectGrid":
        return cls(np.asarray(DEFAULT_GRID), None)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ModelPrior:
    """Independent per-covariate prior over configurations.

    ``pi0`` is the probability of the null configuration and ``config_probs``
    maps each non-null state code to its probability; together they must sum
    to one. The same table applies to every covariate.
    """

    pi0: float
    config_probs: dict
    n_cells: int

    def __post_init__(self):
        if not 0 < self.pi0 < 1:
            raise DataValidationError("pi0 must lie strictly between 0 and 1")
        probs = {int(c): float(v) for c, v in self.config_probs.items()}
        if 0 in probs:
            raise DataValidationError("config_probs must not contain the null configuration")
        for code in probs:
            if code < 0 or code >= (1 << self.n_cells):
                raise DataValidationError(f"state code {code} out of range")
        total = self.pi0 + sum(probs.values())
        if abs(total - 1.0) > 1e-9:
            raise DataValidationError(f"pi0 plus configuration probabilities sum to {total}, not 1")
        object.__setattr__(self, "config_probs", probs)

    @classmethod
    def uniform_nonnull(cls, n_cells: int, pi0: float = 0.99) -> "ModelPrior":
        """Equal mass on every non-null configuration."""
        n_nonnull = (1 << n_cells) - 1
        share = (1.0 - pi0) / n_nonnull
        return cls(pi0, {c: share for c in range(1, 1 << n_cells)}, n_cells)

    @classmethod
    def consistent_favored(cls, n_cells: int, pi0: float = 0.99) -> "ModelPrior":
        """Half the non-null mass on the all-active configuration, rest equal."""
        full = (1 << n_cells) - 1
        probs = {full: (1.0 - pi0) / 2.0}
        others = (1 << n_cells) - 2
        if others > 0:
            share = (1.0 - pi0) / 2.0 / others
            for c in range(1, full):
                probs[c] = share
        else:
            probs[full] = 1.0 - pi0
        return cls(pi0, probs, n_cells)

    @classmethod
    def preset(cls, name: str, n_cells: int, pi0: float = 0.99) -> "ModelPrior":
        table = {"uniform-nonnull": cls.uniform_nonnull, "consistent-favored": cls.consistent_favored}
        if name not in table:
            raise DataValidationError(f"unknown prior preset {name!r}; options: {sorted(table)}")
        return table[name](n_cells, pi0)

    def log_prob_code(self, code: int) -> float:
        if code == 0:
            return float(np.log(self.pi0))
        if code not in self.config_probs:
            raise DataValidationError(
                f"configuration {gamma_to_string(code_to_gamma(code, self.n_cells))} "
                "has no assigned prior probability"
            )
        return float(np.log(self.config_probs[code]))

    def nonnull_codes(self) -> list:
        return sorted(self.config_probs)


def log_prior(model: ModelConfig, prior: ModelPrior) -> float:
    """Log prior probability of a model: sum of per-covariate configuration logs."""
    if prior.n_cells != model.n_cells:
        raise DataValidationError("prior and model cell counts differ")
    return float(sum(prior.log_prob_code(int(c)) for c in model.codes()))


@dataclass(frozen=True)
class NuisancePriors:
    """Inverse-Wishart parameters for the per-subgroup error covariances.

    With ``use_limit`` the non-informative limit (nu -> 0, H -> 0) is taken
    and ``nu``/``H`` are ignored. When the Wishart degrees of freedom ``m_i``
    are supplied instead of ``nu_i``, the relation ``nu_i = m_i - q_i - r - 1``
    is applied and must be positive.
    """

    nu: tuple = ()
    H: tuple = ()
    use_limit: bool = True

    def __post_init__(self):
        nu = tuple(float(v) for v in self.nu)
        H = tuple(np.asarray(h, dtype=np.float64) for h in self.H)
        if not self.use_limit:
            if len(nu) != len(H) or len(nu) == 0:
                raise DataValidationError("informative nuisance priors need matching nu and H lists")
            for i, v in enumerate(nu):
                if v <= 0:
                    raise DataValidationError(f"nu[{i}] must be positive unless using the limit")
            for i, h in enumerate(H):
                if h.ndim != 2 or h.shape[0] != h.shape[1]:
                    raise DataValidationError(f"H[{i}] must be a square matrix")
                if np.min(np.linalg.eigvalsh((h + h.T) / 2)) < -PSD_FLOOR * max(1.0, np.abs(h).max()):
                    raise DataValidationError(f"H[{i}] must be positive semidefinite")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "H", H)

    @classmethod
    def limit(cls) -> "NuisancePriors":
        return cls(use_limit=True)

    @classmethod
    def from_m(cls, m, q, r: int, H) -> "NuisancePriors":
        nu = [float(mi) - float(qi) - r - 1 for mi, qi in zip(m, q)]
        for i, v in enumerate(nu):
            if v <= 0:
                raise DataValidationError(f"m[{i}] implies nu={v} <= 0 (need m > q + r + 1)")
        return cls(tuple(nu), tuple(H), use_limit=False)


@dataclass(frozen=True)
class PriorMatrix:
    """Prior covariance of the vectorized coefficients, block-diagonal by covariate.

    ``blocks`` maps a covariate index to its ``(s*r) x (s*r)`` block over the
    covariate's cells (ordered by subgroup then response); covariates absent
    from the map contribute zero blocks. With ``scale_invariant`` the blocks
    are interpreted on standardized effects and rescaled by residual standard
    deviations before use.
    """

    blocks: dict
    s: int
    r: int
    p: int
    scale_invariant: bool = False

    def __post_init__(self):
        cells = self.s * self.r
        blocks = {}
        for j, blk in self.blocks.items():
            j = int(j)
            if j < 0 or j >= self.p:
                raise DataValidationError(f"covariate index {j} out of range")
            blk = np.asarray(blk, dtype=np.float64)
            if blk.shape != (cells, cells):
                raise DataValidationError(f"block {j} must be {cells}x{cells}, got {blk.shape}")
            if not np.allclose(blk, blk.T, atol=1e-12 * max(1.0, np.abs(blk).max())):
                raise DataValidationError(f"block {j} must be symmetric")
            blk = (blk + blk.T) / 2.0
            scale = max(1.0, np.abs(blk).max())
            if np.min(np.linalg.eigvalsh(blk)) < -PSD_FLOOR * scale:
                raise DataValidationError(f"block {j} is not positive semidefinite")
            blk.setflags(write=False)
            blocks[j] = blk
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_cells(self) -> int:
        return self.s * self.r

    def support(self) -> ModelConfig:
        """Model skeleton read off the diagonal of the covariance."""
        gammas = np.zeros((self.p, self.n_cells), dtype=np.uint8)
        for j, blk in self.blocks.items():
            gammas[j] = (np.diag(blk) > 0).astype(np.uint8)
        return ModelConfig(gammas, self.s, self.r)

    def dense(self, layout: CoefficientLayout | None = None) -> np.ndarray:
        """Materialize the full covariance in coefficient-layout order."""
        if layout is None:
            layout = CoefficientLayout(self.s, self.p, self.r)
        if (layout.s, layout.p, layout.r) != (self.s, self.p, self.r):
            raise DataValidationError("layout does not match prior dimensions")
        out = np.zeros((layout.size, layout.size))
        for j, blk in self.blocks.items():
            idx = layout.covariate_cells(j)
            out[np.ix_(idx, idx)] = blk
        return out

    def active_matrix(self, cells) -> np.ndarray:
        """Assemble the covariance over a model's active cells (layout order)."""
        a = cells.size
        out = np.zeros((a, a))
        for j, pos, blk_cells in zip(cells.active_covariates, cells.cov_positions, cells.block_cells):
            blk = self.blocks.get(int(j))
            if blk is None:
                continue
            out[np.ix_(pos, pos)] = blk[np.ix_(blk_cells, blk_cells)]
        return out


@dataclass(frozen=True)
class DensePriorMatrix:
    """General prior covariance over all coefficients in layout order.

    Unlike :class:`PriorMatrix` this makes no block-structure assumption, at
    the cost of materializing the full matrix; intended for small problems
    (reference computations, priors proportional to the estimator covariance,
    arbitrary PSD test matrices).
    """

    matrix: np.ndarray
    s: int
    r: int
    p: int
    scale_invariant: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        size = self.s * self.p * self.r
        if m.shape != (size, size):
            raise DataValidationError(f"matrix must be {size}x{size}, got {m.shape}")
        if not np.allclose(m, m.T, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise DataValidationError("prior covariance must be symmetric")
        m = (m + m.T) / 2.0
        scale = max(1.0, np.abs(m).max())
        if m.size and np.min(np.linalg.eigvalsh(m)) < -PSD_FLOOR * scale:
            raise DataValidationError("prior covariance is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_cells(self) -> int:
        return self.s * self.r

    def support(self) -> ModelConfig:
        layout = CoefficientLayout(self.s, self.p, self.r)
        gammas = np.zeros((self.p, self.n_cells), dtype=np.uint8)
        diag = np.diag(self.matrix)
        for j in range(self.p):
            gammas[j] = (diag[layout.covariate_cells(j)] > 0).astype(np.uint8)
        return ModelConfig(gammas, self.s, self.r)

    def dense(self, layout: CoefficientLayout | None = None) -> np.ndarray:
        return np.array(self.matrix)

    def active_matrix(self, cells) -> np.ndarray:
        layout = CoefficientLayout(self.s, self.p, self.r)
        flat = (cells.subgroup * self.p + cells.cov) * self.r + cells.resp
        return self.matrix[np.ix_(flat, flat)]


def inject_gamma(model: ModelConfig) -> PriorMatrix:
    """Binary support pattern of the prior covariance induced by a model.

    Covariate ``j`` contributes the outer product of its configuration vector;
    blocks are independent across covariates. The map is injective and the
    diagonal reproduces the model skeleton exactly.
    """
    blocks = {}
    for j in range(model.p):
        row = model.gammas[j].astype(np.float64)
        if row.any():
            blocks[j] = np.outer(row, row)
    return PriorMatrix(blocks, model.s, model.r, model.p)


def build_w(model: ModelConfig, grid_point, scale_invariant: bool = False) -> PriorMatrix:
    """Materialize the prior covariance for a model at given grid values.

    ``grid_point`` is either a single (phi, omega) pair applied to every
    active covariate or a mapping from covariate index to a pair. Each active
    block gets ``omega^2 + phi^2`` on the diagonal and ``omega^2`` off the
    diagonal at the cells the configuration activates.
    """
    if isinstance(grid_point, dict):
        point_for = lambda j: grid_point[j]
    else:
        point_for = lambda j: grid_point
    blocks = {}
    for j in range(model.p):
        row = model.gammas[j].astype(np.float64)
        if not row.any():
            continue
        phi, omega = (float(v) for v in point_for(j))
        if phi < 0 or omega < 0:
            raise DataValidationError("phi and omega must be non-negative")
        mask = np.outer(row, row)
        blocks[j] = omega ** 2 * mask + phi ** 2 * np.diag(row)
    return PriorMatrix(blocks, model.s, model.r, model.p, scale_invariant=scale_invariant)


def scale_w(u: PriorMatrix, sigma) -> PriorMatrix:
    """Rescale a standardized-effect covariance by residual standard deviations.

    Cell (subgroup i, response k) is scaled by ``sqrt(diag(sigma_i)[k])``; the
    support pattern is unchanged and the result is on the raw coefficient
    scale.
    """
    sigma = [np.asarray(sig, dtype=np.float64) for sig in sigma]
    if len(sigma) != u.s:
        raise DataValidationError(f"expected {u.s} covariance matrices, got {len(sigma)}")
    scales = np.empty(u.n_cells)
    for i, sig in enumerate(sigma):
        d = np.diag(sig)
        if np.any(d <= 0):
            raise NumericalError(f"subgroup {i} has a non-positive residual variance")
        scales[i * u.r:(i + 1) * u.r] = np.sqrt(d)
    blocks = {j: scales[:, None] * blk * scales[None, :] for j, blk in u.blocks.items()}
    return PriorMatrix(blocks, u.s, u.r, u.p, scale_invariant=False)


def ridge(w: PriorMatrix, lam: float) -> PriorMatrix:
    """Add ``lam`` to the active diagonal of every block.

    Support-preserving ridge used to probe the continuity of Bayes factors at
    singular priors: inactive cells stay excluded, active blocks become full
    rank for any positive ``lam``.
    """
    if lam < 0:
        raise DataValidationError("ridge amount must be non-negative")
    blocks = {}
    for j, blk in w.blocks.items():
        active = (np.diag(blk) > 0).astype(np.float64)
        blocks[j] = blk + lam * np.diag(active)
    return PriorMatrix(blocks, w.s, w.r, w.p, scale_invariant=w.scale_invariant)


@dataclass(frozen=True)
class PriorSpec:
    """Everything needed to price a model: configuration prior, grid, nuisance."""

    model_prior: ModelPrior
    grid: EffectGrid
    nuisance: NuisancePriors = field(default_factory=NuisancePriors.limit)
    scale_invariant: bool = True

    @classmethod
    def default(cls, n_cells: int, pi0: float = 0.99, preset: str = "uniform-nonnull") -> "PriorSpec":
        return cls(ModelPrior.preset(preset, n_cells, pi0), EffectGrid.default())

    @classmethod
    def from_json(cls, text_or_dict, n_cells: int) -> "PriorSpec":
        """Parse the prior configuration format.

        Keys: ``pi0``, ``config_probs`` (bitstring -> probability map or a
        preset name), ``grid`` ([[phi, omega], ...]), ``grid_weights``,
        ``scale_invariant``, and optional per-subgroup ``nu`` and ``H``.
        """
        cfg = json.loads(text_or_dict) if isinstance(text_or_dict, str) else dict(text_or_dict)
        pi0 = float(cfg.get("pi0", 0.99))
        cp = cfg.get("config_probs", "uniform-nonnull")
        if isinstance(cp, str):
            model_prior = ModelPrior.preset(cp, n_cells, pi0)
        else:
            probs = {}
            for key, val in cp.items():
                gamma = string_to_gamma(key, n_cells)
                code = sum(int(b) << t for t, b in enumerate(gamma))
                probs[code] = float(val)
            model_prior = ModelPrior(pi0, probs, n_cells)
        grid_pts = cfg.get("grid")
        grid = EffectGrid(np.asarray(grid_pts, dtype=np.float64), cfg.get("grid_weights")) if grid_pts else EffectGrid.default()
        if cfg.get("nu") is not None:
            nuis = NuisancePriors(tuple(cfg["nu"]), tuple(np.asarray(h) for h in cfg["H"]), use_limit=False)
        else:
            nuis = NuisancePriors.limit()
        return cls(model_prior, grid, nuis, bool(cfg.get("scale_invariant", True)))

    def to_json(self) -> str:
        n_cells = self.model_prior.n_cells
        cp = {
            gamma_to_string(code_to_gamma(code, n_cells)): prob
            for code, prob in sorted(self.model_prior.config_probs.items())
        }
        payload = {
            "pi0": self.model_prior.pi0,
            "config_probs": cp,
            "grid": self.grid.points.tolist(),
            "grid_weights": self.grid.weights.tolist(),
            "scale_invariant": self.scale_invariant,
        }
        if not self.nuisance.use_limit:
            payload["nu"] = list(self.nuisance.nu)
            payload["H"] = [np.asarray(h).tolist() for h in self.nuisance.H]
        return json.dumps(payload, indent=2)
