"""Spectra, majorization and support counting.

Used to check that unital channels never lower the rank of a state: the
output spectrum is majorized by the input spectrum, and the number of
nonzero eigenvalues cannot shrink.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .matop import DEFAULT_TOL, Tolerance, as_hermitian
from .quantum import KrausChannel, apply_kraus, check_density

__all__ = [
    "NotUnitalError",
    "StateSpectrum",
    "MonotonicityVerdict",
    "spectrum",
    "majorizes",
    "supp_count",
    "unital_monotonicity_check",
]

MAJORIZATION_ATOL = 1e-9
UNITAL_ATOL = 1e-8


class NotUnitalError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"channel is not unital (||sum K K^dag - 1|| = {residual:.3e})")
        self.residual = residual


class StateSpectrum(NamedTuple):
    values: np.ndarray
    sum_residual: float


@dataclass(frozen=True)
class MonotonicityVerdict:
    majorized: bool
    rank_in: int
    rank_out: int

    @property
    def rank_monotone(self) -> bool:
        return self.rank_out >= self.rank_in

    @property
    def holds(self) -> bool:
        return self.majorized and self.rank_monotone


def spectrum(rho, tol: Tolerance = DEFAULT_TOL) -> StateSpectrum:
    """Descending eigenvalues with entries below ``eig_zero`` clipped to 0.

    The clipped vector is renormalized to unit sum; ``sum_residual`` is how
    far the clipped sum was from 1 before renormalizing.
    """
    rho = check_density(rho, tol)
    w = np.linalg.eigvalsh(rho)[::-1].copy()
    w[w < tol.eig_zero] = 0.0
    total = w.sum()
    return StateSpectrum(w / total, float(abs(total - 1.0)))


def majorizes(x, y) -> bool:
    """``x`` majorizes ``y``: every descending prefix sum of x dominates y's."""
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    y = np.sort(np.asarray(y, dtype=float))[::-1]
    if x.shape != y.shape:
        raise ValueError(f"length mismatch {x.size} vs {y.size}")
    if abs(x.sum() - y.sum()) > MAJORIZATION_ATOL:
        raise ValueError(f"sums differ: {x.sum()!r} vs {y.sum()!r}")
    return bool(np.all(np.cumsum(x) >= np.cumsum(y) - MAJORIZATION_ATOL))


def supp_count(v, tol: Tolerance = DEFAULT_TOL) -> int:
    """Number of components strictly above ``eig_zero``."""
    return int(np.count_nonzero(np.asarray(v, dtype=float) > tol.eig_zero))


def unital_monotonicity_check(
    E: KrausChannel, rho, tol: Tolerance = DEFAULT_TOL
) -> MonotonicityVerdict:
    """Compare ``rho`` with ``E(rho)`` for a unital channel ``E``.

    Raises
    ------
    NotUnitalError
        If ``sum_x K_x K_x^dag`` differs from the identity by more than 1e-8.
    """
    residual = E.unitality_residual
    if residual > UNITAL_ATOL:
        raise NotUnitalError(residual)
    rho = as_hermitian(rho)
    lam_in = spectrum(rho, tol).values
    lam_out = spectrum(apply_kraus(E, rho), tol).values
    return MonotonicityVerdict(
        majorizes(lam_in, lam_out), supp_count(lam_in, tol), supp_count(lam_out, tol)
    )
