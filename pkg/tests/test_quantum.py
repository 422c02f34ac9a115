import numpy as np
import pytest

from choi_exclusion.matop import partial_trace
from choi_exclusion.quantum import (
    ChannelError,
    ChoiState,
    KrausChannel,
    apply_kraus,
    apply_via_choi,
    bell_basis,
    bell_state,
    choi_rank,
    choi_to_kraus,
    is_cptp,
    kraus_to_choi,
    make_dephasing,
    make_depolarizing,
    make_unitary_channel,
    max_entangled,
    random_kraus_channel,
    random_state,
    random_unitary,
    weyl,
)

from conftest import ket, proj

X = np.array([[0, 1], [1, 0]])
Z = np.array([[1, 0], [0, -1]])


def weyl_oracle(a, b, d):
    om = np.exp(2j * np.pi / d)
    W = np.zeros((d, d), dtype=complex)
    for n in range(d):
        W += om ** (b * n) * np.outer(ket(d, (n + a) % d), ket(d, n))
    return W


def dephasing_choi_oracle(d, p):
    """Matrix-element form: (1/d) sum |nn><nn| + (p/d) sum_{n != j} |nn><jj|."""
    J = np.zeros((d * d, d * d), dtype=complex)
    for n in range(d):
        for j in range(d):
            J[n * d + n, j * d + j] = 1 / d if n == j else p / d
    return J


def test_max_entangled():
    np.testing.assert_allclose(max_entangled(2), [2**-0.5, 0, 0, 2**-0.5])
    phi = max_entangled(3)
    np.testing.assert_allclose(partial_trace(proj(phi), "B", (3, 3)), np.eye(3) / 3, atol=1e-12)
    assert abs(np.vdot(bell_state(3, 0, 0), phi)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        max_entangled(1)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_weyl_against_defining_sum(d):
    for a in range(d):
        for b in range(d):
            W = weyl(a, b, d)
            np.testing.assert_allclose(W, weyl_oracle(a, b, d), atol=1e-12)
            np.testing.assert_allclose(W.conj().T @ W, np.eye(d), atol=1e-12)


def test_weyl_paulis():
    np.testing.assert_allclose(weyl(0, 0, 2), np.eye(2))
    np.testing.assert_allclose(weyl(1, 0, 2), X, atol=1e-12)
    np.testing.assert_allclose(weyl(0, 1, 2), Z, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_weyl_identities(d):
    om = np.exp(2j * np.pi / d)
    idx = [(a, b) for a in range(d) for b in range(d)]
    for a, b in idx:
        np.testing.assert_allclose(weyl(a, b, d).T, om ** (-a * b) * weyl(-a, b, d), atol=1e-12)
        for n, m in idx:
            lhs = weyl(a, b, d) @ weyl(n, m, d)
            np.testing.assert_allclose(lhs, om ** (b * n) * weyl(a + n, b + m, d), atol=1e-12)
            np.testing.assert_allclose(
                lhs, om ** (b * n - a * m) * weyl(n, m, d) @ weyl(a, b, d), atol=1e-12
            )


def test_bell_states():
    np.testing.assert_allclose(bell_state(2, 0, 0), max_entangled(2))
    np.testing.assert_allclose(bell_state(2, 0, 1), np.array([1, 0, 0, -1]) / np.sqrt(2), atol=1e-12)
    for d in (2, 3, 5):
        B = np.array(bell_basis(d)).T
        np.testing.assert_allclose(B.conj().T @ B, np.eye(d * d), atol=1e-10)


def test_kraus_to_choi_examples():
    J = kraus_to_choi(make_unitary_channel(np.eye(3)))
    np.testing.assert_allclose(J.matrix, proj(max_entangled(3)), atol=1e-12)
    for p in (0.0, 0.3, 0.5, 1.0):
        J = kraus_to_choi(make_dephasing(2, p))
        ref = (1 + p) / 2 * proj(bell_state(2, 0, 0)) + (1 - p) / 2 * proj(bell_state(2, 0, 1))
        np.testing.assert_allclose(J.matrix, ref, atol=1e-12)
    for d in (2, 3, 4):
        np.testing.assert_allclose(
            kraus_to_choi(make_depolarizing(d, 0.0)).matrix, np.eye(d * d) / d**2, atol=1e-12
        )


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_dephasing_choi_general_d(d, p):
    J = kraus_to_choi(make_dephasing(d, p)).matrix
    np.testing.assert_allclose(J, dephasing_choi_oracle(d, p), atol=1e-12)
    # Bell-diagonal form: alpha on Phi_00 and (1 - alpha)/(d - 1) on each Phi_0c
    alpha = 1 - (d - 1) * (1 - p) / d
    ref = alpha * proj(bell_state(d, 0, 0)) + sum(
        (1 - alpha) / (d - 1) * proj(bell_state(d, 0, c)) for c in range(1, d)
    )
    np.testing.assert_allclose(J, ref, atol=1e-12)


def test_kraus_channel_rejects_incomplete():
    with pytest.raises(ChannelError):
        KrausChannel((0.5 * np.eye(2),))
    with pytest.raises(ChannelError):
        KrausChannel((np.ones((2, 3)),))


def test_choi_to_kraus_examples(rng):
    U = random_unitary(3, rng)
    ch = choi_to_kraus(kraus_to_choi(make_unitary_channel(U)))
    assert len(ch.kraus_ops) == 1
    K = ch.kraus_ops[0]
    np.testing.assert_allclose(K.conj().T @ K, np.eye(3), atol=1e-10)
    # equal up to a global phase
    phase = np.vdot(U.ravel(), K.ravel()) / 3
    np.testing.assert_allclose(K, phase * U, atol=1e-10)

    assert len(choi_to_kraus(kraus_to_choi(make_dephasing(3, 0.5))).kraus_ops) == 3

    ch = random_kraus_channel(2, 5, rng)
    J = kraus_to_choi(ch)
    back = choi_to_kraus(J)
    assert len(back.kraus_ops) <= 4
    assert np.linalg.norm(kraus_to_choi(back).matrix - J.matrix) <= 1e-8


def test_choi_to_kraus_rejects_non_cptp():
    J = ChoiState(np.eye(4) / 4 + np.diag([0.1, 0, 0, -0.1]), 2)
    with pytest.raises(ChannelError):
        choi_to_kraus(J)


def test_apply_kraus_examples(rng):
    rho = random_state(3, rng)
    np.testing.assert_allclose(apply_kraus(make_unitary_channel(np.eye(3)), rho), rho, atol=1e-12)
    plus = proj(np.array([1, 1]) / np.sqrt(2))
    np.testing.assert_allclose(apply_kraus(make_dephasing(2, 0.0), plus), np.eye(2) / 2, atol=1e-12)
    for d in (2, 3):
        rho = random_state(d, rng)
        for p in (0.0, 0.3, 1.0):
            out = apply_kraus(make_depolarizing(d, p), rho)
            np.testing.assert_allclose(out, p * rho + (1 - p) * np.eye(d) / d, atol=1e-12)


def test_apply_via_choi_examples(rng):
    rho = random_state(3, rng)
    J = kraus_to_choi(make_unitary_channel(np.eye(3)))
    np.testing.assert_allclose(apply_via_choi(J, rho), rho, atol=1e-12)
    plus = proj(np.array([1, 1]) / np.sqrt(2))
    out = apply_via_choi(kraus_to_choi(make_dephasing(2, 0.5)), plus)
    np.testing.assert_allclose(out, [[0.5, 0.25], [0.25, 0.5]], atol=1e-12)


def test_apply_via_choi_matches_kraus(rng):
    worst = 0.0
    for i in range(100):
        d = 2 + i % 2
        ch = random_kraus_channel(d, int(rng.integers(1, 6)), rng)
        rho = random_state(d, rng)
        worst = max(worst, np.abs(apply_via_choi(kraus_to_choi(ch), rho) - apply_kraus(ch, rho)).max())
    assert worst <= 1e-9


def test_choi_rank_examples(rng):
    for d in (2, 3):
        assert choi_rank(kraus_to_choi(make_unitary_channel(random_unitary(d, rng)))) == 1
    for p in (0.0, 0.3, 0.99):
        assert choi_rank(kraus_to_choi(make_depolarizing(2, p))) == 4
    for d in (2, 3, 4):
        assert choi_rank(kraus_to_choi(make_dephasing(d, 0.5))) == d


def test_is_cptp_examples():
    d = 2
    Phi = proj(max_entangled(d))
    assert is_cptp(ChoiState(Phi, d)).ok
    assert is_cptp(ChoiState(np.eye(d * d) / d**2, d)).ok
    # swap in a different |00><00| block: still PSD, wrong B marginal
    bad = Phi.copy()
    bad[0, 0] = 1.0
    bad[3, 3] = 0.0
    bad[0, 3] = bad[3, 0] = 0.0
    v = is_cptp(ChoiState(bad, d))
    assert not v.ok
    assert v.min_eigenvalue >= 0
    assert v.marginal_residual > 1e-8


def test_builders_validate():
    with pytest.raises(ValueError):
        make_dephasing(2, 1.5)
    with pytest.raises(ValueError):
        make_depolarizing(2, -0.1)
    with pytest.raises(ChannelError):
        make_unitary_channel(np.diag([1.0, 0.5]))


def test_builder_limits(rng):
    rho = random_state(3, rng)
    np.testing.assert_allclose(apply_kraus(make_dephasing(3, 1.0), rho), rho, atol=1e-12)
    sigma = random_state(3, rng)
    dep = make_depolarizing(3, 0.0)
    np.testing.assert_allclose(apply_kraus(dep, rho), apply_kraus(dep, sigma), atol=1e-12)
    np.testing.assert_allclose(apply_kraus(dep, rho), np.eye(3) / 3, atol=1e-12)


def test_round_trip_corpus(rng):
    for i in range(200):
        d = 2 + i % 2
        ch = random_kraus_channel(d, int(rng.integers(1, 7)), rng)
        J = kraus_to_choi(ch)
        assert is_cptp(J).ok
        back = choi_to_kraus(J)
        J2 = kraus_to_choi(back)
        assert np.linalg.norm(J2.matrix - J.matrix) <= 1e-8
        assert len(back.kraus_ops) == choi_rank(J)
        assert is_cptp(J2).ok


def test_builders_are_cptp():
    for d in (2, 3, 4):
        for p in (0.0, 0.5, 1.0):
            assert is_cptp(kraus_to_choi(make_dephasing(d, p))).ok
            assert is_cptp(kraus_to_choi(make_depolarizing(d, p))).ok
