"""States, channels and the Choi-Jamiolkowski correspondence.

Choi states are stored with unit trace::

    J = (N (x) id)(|Phi+><Phi+|),   |Phi+> = sum_i |ii> / sqrt(d)

so the channel acts on the first (A) factor.  The action on a state is
recovered as ``N(rho) = d * tr_B[(1 (x) rho^T) J]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .matop import (
    DEFAULT_TOL,
    DimensionError,
    Tolerance,
    as_hermitian,
    eig_hermitian,
    min_eigenvalue,
    numerical_rank,
    partial_trace,
)

__all__ = [
    "ChannelError",
    "KrausChannel",
    "ChoiState",
    "CptpVerdict",
    "check_density",
    "max_entangled",
    "weyl",
    "bell_state",
    "bell_basis",
    "kraus_to_choi",
    "choi_to_kraus",
    "apply_kraus",
    "apply_via_choi",
    "choi_rank",
    "is_cptp",
    "make_depolarizing",
    "make_dephasing",
    "make_unitary_channel",
    "make_amplitude_damping",
    "random_unitary",
    "random_state",
    "random_kraus_channel",
    "random_unital_channel",
]

COMPLETENESS_ATOL = 1e-8
UNITARY_ATOL = 1e-10
TRACE_ATOL = 1e-9


class ChannelError(ValueError):
    """Invalid channel: wrong shape, incomplete Kraus set, or not CPTP."""


def _is_unitary(U: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0])) <= atol


def check_density(rho, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Validate a density matrix and return it symmetrized.

    Raises ``ValueError`` when the trace is off by more than 1e-9 or an
    eigenvalue falls below ``-psd_slack``.
    """
    rho = as_hermitian(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ValueError(f"density matrix has trace {tr!r}")
    lo = min_eigenvalue(rho)
    if lo < -tol.psd_slack:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A channel ``rho -> sum_x K_x rho K_x^dag`` on a d-dimensional system."""

    kraus_ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.array(K, dtype=complex) for K in self.kraus_ops)
        if not ops:
            raise ChannelError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ChannelError(f"only square channels are supported, got Kraus shape {shape}")
        if any(K.shape != shape for K in ops):
            raise ChannelError("Kraus operators have inconsistent shapes")
        for K in ops:
            K.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)
        residual = self.completeness_residual
        if residual > COMPLETENESS_ATOL:
            raise ChannelError(f"Kraus operators are not trace preserving (residual {residual:.3e})")

    @property
    def d(self) -> int:
        return self.kraus_ops[0].shape[0]

    @property
    def completeness_residual(self) -> float:
        S = sum(K.conj().T @ K for K in self.kraus_ops)
        return float(np.linalg.norm(S - np.eye(self.d)))

    @property
    def unitality_residual(self) -> float:
        S = sum(K @ K.conj().T for K in self.kraus_ops)
        return float(np.linalg.norm(S - np.eye(self.d)))

    def transpose(self) -> "KrausChannel":
        """Channel with Kraus operators ``K_x^T``; unital channels stay channels."""
        return KrausChannel(tuple(K.T for K in self.kraus_ops))

    def __call__(self, rho) -> np.ndarray:
        return apply_kraus(self, rho)


@dataclass(frozen=True, eq=False)
class ChoiState:
    """Unit-trace Choi matrix of a channel on a d-dimensional system."""

    matrix: np.ndarray
    d: int
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        M = np.array(self.matrix, dtype=complex)
        if M.shape != (self.d * self.d, self.d * self.d):
            raise DimensionError(f"Choi matrix shape {M.shape} does not match d={self.d}")
        M = as_hermitian(M)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @cached_property
    def rank(self) -> int:
        return numerical_rank(self.matrix, self.tol)


@dataclass(frozen=True)
class CptpVerdict:
    ok: bool
    min_eigenvalue: float
    trace: float
    marginal_residual: float

    def to_dict(self) -> dict:
        return {
            "cptp": self.ok,
            "min_eigenvalue": self.min_eigenvalue,
            "trace": self.trace,
            "marginal_residual": self.marginal_residual,
        }


def max_entangled(d: int) -> np.ndarray:
    """``|Phi+> = sum_i |ii> / sqrt(d)`` as a flat vector of length d**2."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    v = np.zeros(d * d, dtype=complex)
    v[np.arange(d) * d + np.arange(d)] = 1 / np.sqrt(d)
    return v


def weyl(a: int, b: int, d: int) -> np.ndarray:
    """Heisenberg-Weyl operator ``W_{a,b} = sum_n w^{bn} |n+a><n|``, ``w = e^{2 pi i/d}``."""
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    a %= d
    b %= d
    n = np.arange(d)
    W = np.zeros((d, d), dtype=complex)
    W[(n + a) % d, n] = np.exp(2j * np.pi * b * n / d)
    return W


def bell_state(d: int, a: int, b: int) -> np.ndarray:
    """``|Phi_ab> = (1 (x) W_{a,b}) |Phi+>``."""
    return np.kron(np.eye(d), weyl(a, b, d)) @ max_entangled(d)


def bell_basis(d: int) -> list[np.ndarray]:
    """All d**2 Bell vectors in lexicographic ``(a, b)`` order."""
    return [bell_state(d, a, b) for a in range(d) for b in range(d)]


def kraus_to_choi(ch: KrausChannel) -> ChoiState:
    d = ch.d
    phi = max_entangled(d)
    J = np.zeros((d * d, d * d), dtype=complex)
    for K in ch.kraus_ops:
        v = np.kron(K, np.eye(d)) @ phi
        J += np.outer(v, v.conj())
    return ChoiState(J, d)


def choi_to_kraus(J: ChoiState, tol: Tolerance = DEFAULT_TOL) -> KrausChannel:
    """Minimal Kraus set from the eigendecomposition of ``J``.

    Each eigenpair ``(lam, v)`` above threshold gives ``K = sqrt(d lam) v``
    reshaped to ``d x d`` with the A index as row.
    """
    verdict = is_cptp(J, tol)
    if not verdict.ok:
        raise ChannelError(
            f"Choi matrix is not CPTP (min eig {verdict.min_eigenvalue:.3e}, "
            f"marginal residual {verdict.marginal_residual:.3e})"
        )
    d = J.d
    spec, V = eig_hermitian(J.matrix, tol)
    r = numerical_rank(J.matrix, tol)
    ops = tuple(
        np.sqrt(d * spec.eigenvalues[i]) * V[:, i].reshape(d, d) for i in range(r)
    )
    return KrausChannel(ops)


def apply_kraus(ch: KrausChannel, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.d, ch.d):
        raise DimensionError(f"state shape {rho.shape} does not match channel dimension {ch.d}")
    out = sum(K @ rho @ K.conj().T for K in ch.kraus_ops)
    return (out + out.conj().T) / 2


def apply_via_choi(J: ChoiState, rho, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """``d * tr_B[(1 (x) rho^T) J]``."""
    d = J.d
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise DimensionError(f"state shape {rho.shape} does not match channel dimension {d}")
    verdict = is_cptp(J, tol)
    if not verdict.ok:
        raise ChannelError(f"Choi matrix is not CPTP (marginal residual {verdict.marginal_residual:.3e})")
    out = d * partial_trace(np.kron(np.eye(d), rho.T) @ J.matrix, "A", (d, d))
    return (out + out.conj().T) / 2


def choi_rank(J: ChoiState) -> int:
    """Rank of the Choi matrix (cached on the instance)."""
    return J.rank


def is_cptp(J: ChoiState, tol: Tolerance = DEFAULT_TOL) -> CptpVerdict:
    """PSD within slack and ``tr_A J = 1/d`` within 1e-8 (Frobenius)."""
    d = J.d
    lo = min_eigenvalue(J.matrix)
    marginal = partial_trace(J.matrix, "B", (d, d))
    residual = float(np.linalg.norm(marginal - np.eye(d) / d))
    ok = lo >= -tol.psd_slack and residual <= COMPLETENESS_ATOL
    return CptpVerdict(ok, lo, float(np.trace(J.matrix).real), residual)


def _check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return p


def make_depolarizing(d: int, p: float) -> KrausChannel:
    """``rho -> p rho + (1-p) tr[rho] 1/d`` as a Weyl twirl.

    Weights are ``p + (1-p)/d**2`` on the identity and ``(1-p)/d**2`` on every
    other ``W_{a,b}``; zero-weight operators are dropped.
    """
    p = _check_probability(p)
    base = (1 - p) / d**2
    ops = []
    for a in range(d):
        for b in range(d):
            q = p + base if (a, b) == (0, 0) else base
            if q > 0:
                ops.append(np.sqrt(q) * weyl(a, b, d))
    return KrausChannel(tuple(ops))


def make_dephasing(d: int, p: float) -> KrausChannel:
    """``rho -> p rho + (1-p) sum_n |n><n| rho |n><n|``."""
    p = _check_probability(p)
    ops = []
    if p > 0:
        ops.append(np.sqrt(p) * np.eye(d))
    if p < 1:
        for n in range(d):
            P = np.zeros((d, d))
            P[n, n] = 1.0
            ops.append(np.sqrt(1 - p) * P)
    return KrausChannel(tuple(ops))


def make_unitary_channel(U) -> KrausChannel:
    U = np.asarray(U, dtype=complex)
    if not _is_unitary(U):
        raise ChannelError("matrix is not unitary to 1e-10")
    return KrausChannel((U,))


def make_amplitude_damping(gamma: float) -> KrausChannel:
    """Qubit amplitude damping; non-unital for ``gamma > 0``."""
    g = _check_probability(gamma)
    K0 = np.array([[1, 0], [0, np.sqrt(1 - g)]])
    K1 = np.array([[0, np.sqrt(g)], [0, 0]])
    return KrausChannel((K0, K1))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_state(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix ``A A^dag / tr`` with ``A`` a d x rank Ginibre matrix."""
    r = d if rank is None else rank
    A = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = A @ A.conj().T
    rho /= np.trace(rho).real
    return (rho + rho.conj().T) / 2


def random_kraus_channel(d: int, m: int, rng: np.random.Generator) -> KrausChannel:
    """Random CPTP map with ``m`` Kraus operators.

    Stacks ``m`` Ginibre blocks into an ``(m d) x d`` matrix, orthonormalizes
    its columns with QR and slices the isometry back into blocks.
    """
    G = rng.standard_normal((m * d, d)) + 1j * rng.standard_normal((m * d, d))
    Q, _ = np.linalg.qr(G)
    return KrausChannel(tuple(Q[i * d:(i + 1) * d, :] for i in range(m)))


def random_unital_channel(
    d: int,
    rng: np.random.Generator,
    terms: int | None = None,
    unitaries: Sequence[np.ndarray] | None = None,
) -> KrausChannel:
    """Random mixture of unitaries.

    With ``unitaries=None`` the mixture is over randomly chosen Weyl
    operators; otherwise over the supplied list.
    """
    if unitaries is None:
        pool = [weyl(a, b, d) for a in range(d) for b in range(d)]
        n = terms if terms is not None else int(rng.integers(1, d * d + 1))
        picks = rng.choice(len(pool), size=min(n, len(pool)), replace=False)
        unitaries = [pool[i] for i in picks]
    weights = rng.dirichlet(np.ones(len(unitaries)))
    return KrausChannel(tuple(np.sqrt(w) * U for w, U in zip(weights, unitaries)))
