"""Dense complex-matrix numerics.

Hermitian eigendecomposition, tolerance-based rank, support/kernel
projectors, bipartite tensor and partial-trace helpers, and Loewner-order
tests.  Matrices are plain ``numpy`` arrays throughout.

Bipartite index convention: ``|i>_A (x) |j>_B`` lives at flat index
``i * d_B + j``, which is what :func:`numpy.kron` produces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "Spectrum",
    "NotHermitianError",
    "NotPSDError",
    "DimensionError",
    "as_hermitian",
    "eig_hermitian",
    "numerical_rank",
    "support_projector",
    "kernel_projector",
    "tensor",
    "partial_trace",
    "transpose_in_basis",
    "loewner_leq",
    "min_eigenvalue",
]

HERMITIAN_ATOL = 1e-12


class NotHermitianError(ValueError):
    """Raised when a matrix expected to be Hermitian is not."""

    def __init__(self, asymmetry: float):
        super().__init__(f"matrix is not Hermitian (max |H - H^dag| = {asymmetry:.3e})")
        self.asymmetry = asymmetry


class NotPSDError(ValueError):
    """Raised when a matrix expected to be positive semidefinite is not."""

    def __init__(self, min_eig: float):
        super().__init__(f"matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds shared by every module.

    Parameters
    ----------
    eig_zero : float
        Relative threshold below which an eigenvalue counts as zero.
    psd_slack : float
        Allowed negative excursion of eigenvalues in PSD / Loewner tests.
    trace_zero : float
        Absolute threshold for ``tr[T rho]`` to count as zero.
    """

    eig_zero: float = 1e-9
    psd_slack: float = 1e-9
    trace_zero: float = 1e-9

    def __post_init__(self):
        for name in ("eig_zero", "psd_slack", "trace_zero"):
            value = getattr(self, name)
            if not (0.0 < value < 1e-3):
                raise ValueError(f"{name} must lie in (0, 1e-3), got {value!r}")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted descending, plus the smallest strictly positive one."""

    eigenvalues: np.ndarray
    min_positive: float | None

    @property
    def max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def min(self) -> float:
        return float(self.eigenvalues[-1])


def _square(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def as_hermitian(H, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Return ``(H + H^dag)/2`` after checking the asymmetry is negligible.

    The asymmetry bound is ``atol * max(1, max|H_ij|)`` so that large but
    exactly-Hermitian products do not trip on rounding.
    """
    H = _square(H)
    asym = float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if asym > atol * scale:
        raise NotHermitianError(asym)
    return (H + H.conj().T) / 2


def _threshold(eigenvalues: np.ndarray, tol: Tolerance) -> float:
    top = float(eigenvalues[0]) if eigenvalues.size else 0.0
    return tol.eig_zero * max(1.0, top)


def eig_hermitian(H, tol: Tolerance = DEFAULT_TOL) -> tuple[Spectrum, np.ndarray]:
    """Eigendecomposition ``H = V diag(lam) V^dag`` with ``lam`` descending.

    Returns
    -------
    (Spectrum, ndarray)
        The spectrum and a unitary whose columns are the eigenvectors in the
        same order.
    """
    H = as_hermitian(H)
    w, V = np.linalg.eigh(H)
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    thr = _threshold(w, tol)
    positive = w[w > thr]
    min_pos = float(positive[-1]) if positive.size else None
    return Spectrum(w, min_pos), V


def min_eigenvalue(H) -> float:
    H = as_hermitian(H)
    if H.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(H)[0])


def _check_psd(w: np.ndarray, tol: Tolerance) -> None:
    if w.size and w[-1] < -tol.psd_slack * max(1.0, abs(float(w[0]))):
        raise NotPSDError(float(w[-1]))


def numerical_rank(H, tol: Tolerance = DEFAULT_TOL) -> int:
    """Count eigenvalues above ``eig_zero * max(1, lam_max)``.

    Raises
    ------
    NotPSDError
        If ``H`` has an eigenvalue below ``-psd_slack`` (relative to its scale).
    """
    H = as_hermitian(H)
    w = np.linalg.eigvalsh(H)[::-1]
    _check_psd(w, tol)
    return int(np.count_nonzero(w > _threshold(w, tol)))


def support_projector(H, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthogonal projector onto the range of a PSD matrix."""
    spec, V = eig_hermitian(H, tol)
    _check_psd(spec.eigenvalues, tol)
    keep = spec.eigenvalues > _threshold(spec.eigenvalues, tol)
    Vs = V[:, keep]
    P = Vs @ Vs.conj().T
    return (P + P.conj().T) / 2


def kernel_projector(H, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Projector onto the kernel: identity minus :func:`support_projector`."""
    P = support_projector(H, tol)
    return np.eye(P.shape[0]) - P


def tensor(A, B) -> np.ndarray:
    return np.kron(np.asarray(A, dtype=complex), np.asarray(B, dtype=complex))


def partial_trace(M, keep: str, dims: tuple[int, int]) -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    Parameters
    ----------
    M : array_like
        Square matrix of size ``d_A * d_B``.
    keep : {"A", "B"}
        Subsystem that survives.
    dims : (int, int)
        ``(d_A, d_B)``.
    """
    dA, dB = dims
    M = _square(M)
    if M.shape[0] != dA * dB:
        raise DimensionError(f"matrix of size {M.shape[0]} does not match dims {dims}")
    T = M.reshape(dA, dB, dA, dB)
    if keep == "A":
        return np.einsum("ijkj->ik", T)
    if keep == "B":
        return np.einsum("ijil->jl", T)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def transpose_in_basis(M) -> np.ndarray:
    """Plain transpose in the computational basis (no conjugation)."""
    return np.asarray(M, dtype=complex).T.copy()


def loewner_leq(A, B, tol: Tolerance = DEFAULT_TOL) -> bool:
    """``A <= B`` in the Loewner order, i.e. ``B - A`` is PSD within slack."""
    A = as_hermitian(A)
    B = as_hermitian(B)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return min_eigenvalue(B - A) >= -tol.psd_slack
