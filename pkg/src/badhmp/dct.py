"""Orthonormal type-II DCT basis over the time axis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def dct_matrix(length: int) -> np.ndarray:
    """``(M, M)`` orthonormal DCT-II matrix; row ``k`` is the k-th cosine."""
    n = np.arange(length)
    k = n[:, None]
    basis = np.sqrt(2.0 / length) * np.cos(np.pi * (2 * n[None, :] + 1) * k / (2 * length))
    basis[0] /= np.sqrt(2.0)
    return basis


@dataclass(frozen=True, eq=False)
class DctBasis:
    length: int
    coefficient_count: int

    def __post_init__(self):
        if self.length < 1 or not 1 <= self.coefficient_count <= self.length:
            raise DimensionError(f"need 1 <= C <= M, got C={self.coefficient_count}, M={self.length}")
        full = dct_matrix(self.length)
        full.setflags(write=False)
        rows = full[: self.coefficient_count]
        object.__setattr__(self, "full", full)
        object.__setattr__(self, "matrix", rows)

    def _check(self, arr: np.ndarray, size: int, what: str):
        if arr.shape[-1] != size:
            raise DimensionError(f"{what} has trailing length {arr.shape[-1]}, basis expects {size}")


def dct_forward(series, basis: DctBasis) -> np.ndarray:
    """``(..., M) -> (..., C)`` leading DCT coefficients."""
    series = np.asarray(series, dtype=float)
    basis._check(series, basis.length, "series")
    return series @ basis.matrix.T


def dct_inverse(coefficients, basis: DctBasis) -> np.ndarray:
    """``(..., C) -> (..., M)``; exact inverse of :func:`dct_forward` when C == M."""
    coefficients = np.asarray(coefficients, dtype=float)
    basis._check(coefficients, basis.coefficient_count, "coefficients")
    return coefficients @ basis.matrix
