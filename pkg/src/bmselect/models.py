"""Candidate-model skeletons.

A candidate model assigns every candidate covariate a binary configuration
vector over its ``s*r`` (subgroup, response) cells; the concatenation of the
per-covariate vectors in layout order is the inclusion skeleton of the
vectorized coefficients. Configurations are rendered as bitstrings whose
character ``t`` corresponds to cell ``t = subgroup*r + response``, and are
encoded internally as integers with bit ``t`` set when cell ``t`` is active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CoefficientLayout
from .exceptions import DataValidationError


def gamma_to_code(gamma) -> int:
    """Encode a binary cell vector as an integer state code."""
    code = 0
    for t, bit in enumerate(gamma):
        if bit:
            code |= 1 << t
    return code


def code_to_gamma(code: int, n_cells: int) -> np.ndarray:
    """Decode an integer state code into a binary cell vector."""
    if code < 0 or code >= (1 << n_cells):
        raise DataValidationError(f"state code {code} out of range for {n_cells} cells")
    return np.array([(code >> t) & 1 for t in range(n_cells)], dtype=np.uint8)


def gamma_to_string(gamma) -> str:
    return "".join("1" if bit else "0" for bit in gamma)


def string_to_gamma(text: str, n_cells: int) -> np.ndarray:
    if len(text) != n_cells or any(ch not in "01" for ch in text):
        raise DataValidationError(
            f"configuration string {text!r} must be a {n_cells}-character bitstring"
        )
    return np.array([1 if ch == "1" else 0 for ch in text], dtype=np.uint8)


def all_state_codes(n_cells: int) -> range:
    """All configuration codes, null (0) first."""
    return range(1 << n_cells)


@dataclass(frozen=True)
class ModelConfig:
    """Binary skeleton of a candidate model.

    Parameters
    ----------
    gammas : ndarray (p, s*r) of {0,1}
        Row ``j`` is covariate ``j``'s configuration over cells ordered by
        (subgroup, response).
    s, r : int
        Subgroup and response counts defining the cell grid.
    """

    gammas: np.ndarray
    s: int
    r: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.gammas, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[1] != self.s * self.r:
            raise DataValidationError(
                f"gammas must have shape (p, {self.s * self.r}), got {arr.shape}"
            )
        if arr.size and arr.max() > 1:
            raise DataValidationError("gamma entries must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "gammas", arr)

    @classmethod
    def null(cls, p: int, s: int, r: int) -> "ModelConfig":
        return cls(np.zeros((p, s * r), dtype=np.uint8), s, r)

    @classmethod
    def from_strings(cls, strings, s: int, r: int) -> "ModelConfig":
        rows = [string_to_gamma(t, s * r) for t in strings]
        return cls(np.asarray(rows, dtype=np.uint8), s, r)

    @classmethod
    def from_codes(cls, codes, p: int, s: int, r: int) -> "ModelConfig":
        """Build from a mapping or sequence of per-covariate state codes."""
        gammas = np.zeros((p, s * r), dtype=np.uint8)
        if isinstance(codes, dict):
            items = codes.items()
        else:
            items = enumerate(codes)
        for j, code in items:
            gammas[j] = code_to_gamma(int(code), s * r)
        return cls(gammas, s, r)

    @property
    def p(self) -> int:
        return self.gammas.shape[0]

    @property
    def n_cells(self) -> int:
        return self.s * self.r

    @property
    def key(self) -> bytes:
        """Hashable identity of the model, stable across processes."""
        return self.gammas.tobytes()

    def codes(self) -> np.ndarray:
        """Per-covariate integer state codes."""
        weights = (1 << np.arange(self.n_cells)).astype(np.int64)
        return self.gammas.astype(np.int64) @ weights

    def gamma_strings(self) -> list:
        return [gamma_to_string(row) for row in self.gammas]

    def active_covariates(self) -> np.ndarray:
        return np.flatnonzero(self.gammas.any(axis=1))

    @property
    def n_active_cells(self) -> int:
        return int(self.gammas.sum())

    def skeleton(self, layout: CoefficientLayout) -> np.ndarray:
        """Flat 0/1 inclusion vector in coefficient-layout order."""
        out = np.zeros(layout.size, dtype=np.uint8)
        for j in range(self.p):
            out[layout.covariate_cells(j)] = self.gammas[j]
        return out

    def replace_covariate(self, j: int, code: int) -> "ModelConfig":
        gammas = np.array(self.gammas, dtype=np.uint8)
        gammas[j] = code_to_gamma(code, self.n_cells)
        return ModelConfig(gammas, self.s, self.r)

    def swap_covariates(self, j1: int, j2: int) -> "ModelConfig":
        gammas = np.array(self.gammas, dtype=np.uint8)
        gammas[[j1, j2]] = gammas[[j2, j1]]
        return ModelConfig(gammas, self.s, self.r)
