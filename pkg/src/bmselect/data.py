"""Data containers for systems of simultaneous multivariate regressions.

A dataset consists of ``s`` non-overlapping subgroups. Subgroup ``i`` holds an
``n_i x r`` response matrix, an ``n_i x q_i`` matrix of controlled covariates
(whose first column must be the intercept), and an ``n_i x p`` matrix of
candidate covariates subject to selection. All subgroups share the same ``r``
and ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataValidationError


def as_finite_2d(x, name: str) -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataValidationError(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DataValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SubgroupData:
    """Observed data for one subgroup.

    Parameters
    ----------
    responses : ndarray (n, r)
        Quantitative response measurements, one row per subject.
    controls : ndarray (n, q)
        Controlled covariates. The first column must be a (non-zero) constant
        intercept column; it is never added implicitly.
    candidates : ndarray (n, p)
        Candidate covariates subject to selection.
    """

    responses: np.ndarray
    controls: np.ndarray
    candidates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "responses", as_finite_2d(self.responses, "responses"))
        object.__setattr__(self, "controls", as_finite_2d(self.controls, "controls"))
        object.__setattr__(self, "candidates", as_finite_2d(self.candidates, "candidates"))
        n = self.responses.shape[0]
        if self.controls.shape[0] != n or self.candidates.shape[0] != n:
            raise DataValidationError(
                "responses, controls and candidates must share the row count "
                f"(got {n}, {self.controls.shape[0]}, {self.candidates.shape[0]})"
            )
        first = self.controls[:, 0]
        if n > 1 and (np.ptp(first) > 0 or first[0] == 0.0):
            raise DataValidationError(
                "first column of controls must be a non-zero constant intercept column"
            )

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def r(self) -> int:
        return self.responses.shape[1]

    @property
    def q(self) -> int:
        return self.controls.shape[1]

    @property
    def p(self) -> int:
        return self.candidates.shape[1]


@dataclass(frozen=True)
class SSMRData:
    """An ordered collection of subgroups sharing response and candidate sets."""

    subgroups: tuple

    def __post_init__(self):
        subs = tuple(self.subgroups)
        if len(subs) == 0:
            raise DataValidationError("at least one subgroup is required")
        for sub in subs:
            if not isinstance(sub, SubgroupData):
                raise DataValidationError("subgroups must be SubgroupData instances")
        r, p = subs[0].r, subs[0].p
        for i, sub in enumerate(subs):
            if sub.r != r or sub.p != p:
                raise DataValidationError(
                    f"subgroup {i} has (r={sub.r}, p={sub.p}); expected (r={r}, p={p})"
                )
        object.__setattr__(self, "subgroups", subs)

    @classmethod
    def from_arrays(cls, responses, candidates, controls=None) -> "SSMRData":
        """Assemble a dataset from per-subgroup arrays.

        ``responses`` and ``candidates`` may be single arrays (one subgroup) or
        sequences of arrays. When ``controls`` is omitted an intercept-only
        control design is supplied for each subgroup.
        """
        if isinstance(responses, np.ndarray) or np.ndim(responses[0]) == 0:
            responses = [responses]
            candidates = [candidates]
            controls = [controls] if controls is not None else None
        responses = [as_finite_2d(y, "responses") for y in responses]
        candidates = [as_finite_2d(x, "candidates") for x in candidates]
        if controls is None:
            controls = [np.ones((y.shape[0], 1)) for y in responses]
        else:
            controls = [as_finite_2d(c, "controls") for c in controls]
        subs = [SubgroupData(y, c, x) for y, c, x in zip(responses, controls, candidates)]
        return cls(tuple(subs))

    @property
    def s(self) -> int:
        return len(self.subgroups)

    @property
    def r(self) -> int:
        return self.subgroups[0].r

    @property
    def p(self) -> int:
        return self.subgroups[0].p

    @property
    def n_per_subgroup(self) -> tuple:
        return tuple(sub.n for sub in self.subgroups)

    @property
    def q_per_subgroup(self) -> tuple:
        return tuple(sub.q for sub in self.subgroups)

    @property
    def layout(self) -> "CoefficientLayout":
        return CoefficientLayout(self.s, self.p, self.r)


@dataclass(frozen=True)
class CoefficientLayout:
    """Flat ordering of the vectorized candidate coefficients.

    Within subgroup ``i`` coefficients are laid out covariate-major with the
    response index fastest; subgroups are concatenated in order. The flat
    index of (subgroup i, covariate j, response k) is ``(i*p + j)*r + k``.
    """

    s: int
    p: int
    r: int

    @property
    def size(self) -> int:
        return self.s * self.p * self.r

    @property
    def cells_per_covariate(self) -> int:
        return self.s * self.r

    def flat_index(self, i: int, j: int, k: int) -> int:
        return (i * self.p + j) * self.r + k

    def cell_index(self, i: int, k: int) -> int:
        """Index of the (subgroup, response) cell within one covariate block."""
        return i * self.r + k

    def covariate_cells(self, j: int) -> np.ndarray:
        """Flat indices of covariate ``j``'s cells, ordered by (subgroup, response)."""
        i = np.repeat(np.arange(self.s), self.r)
        k = np.tile(np.arange(self.r), self.s)
        return (i * self.p + j) * self.r + k

    def unravel(self, flat: int) -> tuple:
        """Inverse of :meth:`flat_index`."""
        k = flat % self.r
        rest = flat // self.r
        j = rest % self.p
        i = rest // self.p
        return i, j, k
