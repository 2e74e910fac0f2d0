import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatinstab.amplitude import expand_coefficients
from scatinstab.sphere import (HarmonicIndex, build_quadrature, eval_harmonic,
                               fibonacci_directions, harmonic_degrees, n_harmonics,
                               real_harmonics)

C1 = np.sqrt(3.0 / (4.0 * np.pi))


def test_low_degree_closed_forms():
    d = fibonacci_directions(17)
    Y = real_harmonics(1, d)
    assert np.allclose(Y[:, 0], 1.0 / np.sqrt(4.0 * np.pi), atol=1e-15)
    assert np.allclose(Y[:, 1], C1 * d[:, 1], atol=1e-14)
    assert np.allclose(Y[:, 2], C1 * d[:, 2], atol=1e-14)
    assert np.allclose(Y[:, 3], C1 * d[:, 0], atol=1e-14)


@pytest.mark.parametrize("L", [0, 3, 12, 30])
def test_gram_identity(L):
    q = build_quadrature(2 * L)
    Y = real_harmonics(L, q.nodes)
    G = (Y * q.weights[:, None]).T @ Y
    assert np.abs(G - np.eye(n_harmonics(L))).max() < 1e-12


def test_weights_sum_to_sphere_area():
    q = build_quadrature(10)
    assert q.weights.sum() == pytest.approx(4 * np.pi, rel=1e-14)
    assert q.exactness_degree >= 10


def test_quadrature_degree_limit():
    with pytest.raises(ValueError, match="exceeds table"):
        build_quadrature(130)


def test_harmonic_index_validation():
    assert HarmonicIndex(2, 1).m == -2 and HarmonicIndex(2, 5).m == 2
    assert HarmonicIndex(3, 4).flat == 12
    for bad in [(1, 0), (1, 4), (-1, 1)]:
        with pytest.raises(ValueError):
            HarmonicIndex(*bad)


def test_degrees_layout():
    assert list(harmonic_degrees(2)) == [0, 1, 1, 1, 2, 2, 2, 2, 2]


def test_eval_harmonic_rejects_non_unit():
    with pytest.raises(ValueError):
        eval_harmonic(HarmonicIndex(1, 1), (1.0, 1.0, 0.0))


def test_single_coefficient_recovery():
    L = 6
    q = build_quadrature(2 * L + 4)
    Y = real_harmonics(L, q.nodes)
    a, b = HarmonicIndex(4, 3).flat, HarmonicIndex(2, 5).flat
    f = np.outer(Y[:, a], Y[:, b])
    c = expand_coefficients(f, q, L)
    assert c[a, b] == pytest.approx(1.0, abs=1e-12)
    c[a, b] = 0.0
    assert np.abs(c).max() < 1e-12


unit = st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(
    lambda v: 0.1 < np.linalg.norm(v))


@settings(max_examples=50, deadline=None)
@given(unit, st.integers(0, 10))
def test_addition_theorem(v, j):
    # sum_p Y_jp(x)^2 = (2j+1)/(4 pi) for every unit x
    x = np.asarray(v) / np.linalg.norm(v)
    Y = real_harmonics(j, x[None])[0]
    block = Y[j * j:(j + 1) ** 2]
    assert np.sum(block ** 2) == pytest.approx((2 * j + 1) / (4 * np.pi), rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(unit, st.integers(0, 8))
def test_parity(v, j):
    x = np.asarray(v) / np.linalg.norm(v)
    Y = real_harmonics(j, np.stack([x, -x]))
    sl = slice(j * j, (j + 1) ** 2)
    assert np.allclose(Y[1, sl], (-1) ** j * Y[0, sl], atol=1e-12)
