import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from choi_exclusion.majorization import (
    NotUnitalError,
    majorizes,
    spectrum,
    supp_count,
    unital_monotonicity_check,
)
from choi_exclusion.matop import numerical_rank
from choi_exclusion.quantum import (
    apply_kraus,
    make_amplitude_damping,
    make_dephasing,
    make_unitary_channel,
    random_state,
    random_unital_channel,
    random_unitary,
)

from conftest import ket, proj


def test_spectrum_examples(rng):
    np.testing.assert_allclose(spectrum(proj(ket(3, 1))).values, [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(spectrum(np.eye(4) / 4).values, [0.25] * 4, atol=1e-12)
    for _ in range(20):
        s = spectrum(random_state(4, rng))
        assert s.values.sum() == pytest.approx(1.0, abs=1e-9)
        assert s.sum_residual <= 1e-9
        assert np.all(np.diff(s.values) <= 0)


def test_majorizes_examples():
    assert majorizes([1, 0], [0.5, 0.5])
    assert not majorizes([0.5, 0.5], [1, 0])
    x = [0.2, 0.5, 0.3]
    assert majorizes(x, x)
    with pytest.raises(ValueError):
        majorizes([1, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        majorizes([1, 0], [0.5, 0.4])


def test_supp_count_examples(rng):
    assert supp_count([1, 0, 0]) == 1
    assert supp_count([0.3, 0.3, 0.4]) == 3
    for _ in range(50):
        v = rng.random(6)
        v[rng.random(6) < 0.4] = 0.0
        assert supp_count(v) == numerical_rank(np.diag(v))


def test_monotonicity_examples(rng):
    rho = random_state(3, rng, rank=2)
    v = unital_monotonicity_check(make_unitary_channel(np.eye(3)), rho)
    assert v.majorized and v.rank_in == v.rank_out == 2
    assert majorizes(spectrum(rho).values, spectrum(rho).values)

    plus = proj(np.array([1, 1]) / np.sqrt(2))
    v = unital_monotonicity_check(make_dephasing(2, 0.0), plus)
    assert (v.rank_in, v.rank_out) == (1, 2)
    assert v.majorized and v.holds
    np.testing.assert_allclose(spectrum(apply_kraus(make_dephasing(2, 0.0), plus)).values, [0.5, 0.5])


def test_monotonicity_rejects_non_unital():
    with pytest.raises(NotUnitalError) as info:
        unital_monotonicity_check(make_amplitude_damping(0.5), np.eye(2) / 2)
    assert info.value.residual > 1e-8


def test_non_unital_negative_control():
    """Full amplitude damping sends the maximally mixed qubit to |0><0|."""
    out = apply_kraus(make_amplitude_damping(1.0), np.eye(2) / 2)
    np.testing.assert_allclose(out, proj(ket(2, 0)), atol=1e-12)
    assert numerical_rank(out) == 1 < numerical_rank(np.eye(2) / 2) == 2
    assert not majorizes(spectrum(np.eye(2) / 2).values, spectrum(out).values)


def test_monotonicity_corpus(rng):
    for i in range(200):
        d = (2, 3, 4)[i % 3]
        if i % 2:
            E = random_unital_channel(d, rng)
        else:
            E = random_unital_channel(d, rng, unitaries=[random_unitary(d, rng) for _ in range(3)])
        rho = random_state(d, rng, rank=int(rng.integers(1, d + 1)))
        assert unital_monotonicity_check(E, rho).holds


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8), p=st.floats(1e-3, 1 - 1e-3))
def test_support_inequality(seed, n, p):
    # components and weights kept well above the 1e-9 zero threshold
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.01, 1, n), rng.uniform(0.01, 1, n)
    a[rng.random(n) < 0.5] = 0
    b[rng.random(n) < 0.5] = 0
    a = a / a.sum() if a.sum() else np.eye(n)[0]
    b = b / b.sum() if b.sum() else np.eye(n)[-1]
    mix = p * a + (1 - p) * b
    assert supp_count(mix) >= max(supp_count(a), supp_count(b))
    perm = rng.permutation(n)
    assert supp_count(a[perm]) == supp_count(a)
