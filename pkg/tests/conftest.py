import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20241017)


def random_hermitian(rng, d, scale=1.0):
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * (A + A.conj().T) / 2


def random_psd(rng, d, rank):
    A = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    return A @ A.conj().T


def ket(d, i):
    v = np.zeros(d, dtype=complex)
    v[i] = 1
    return v


def proj(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def gram_schmidt(cols, atol=1e-8):
    """Orthonormal basis of the span of the given columns (oracle, no eigensolver)."""
    basis = []
    for c in cols.T:
        w = c.astype(complex).copy()
        for b in basis:
            w -= np.vdot(b, w) * b
        n = np.linalg.norm(w)
        if n > atol:
            basis.append(w / n)
    return np.array(basis).T


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
