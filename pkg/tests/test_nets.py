import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatinstab.amplitude import (AmplitudeMatrix, EnergyInterval, NormWeights,
                                  compute_amplitude_matrix)
from scatinstab.nets import (EllipseDomain, NetQuantizationError, SmoothnessBudget,
                             build_amplitude_net, build_packing, chebyshev_degree,
                             coefficient_tolerance, fixed_energy_grid_net, holo_net,
                             lattice_size, packing_count_table, power_law_exponent,
                             quantize_to_net, truncation_degree)
from scatinstab.potential import VoxelGrid, cm_norm_estimate, make_bump


def brute_truncation(delta, S, c4, horizon=400):
    env = [c4 * (2 * l + 1) ** S * 2.0 ** -l for l in range(horizon)]
    bad = [l for l, e in enumerate(env) if e >= delta]
    return bad[-1] + 1 if bad else 0


def test_truncation_degree_frozen():
    assert truncation_degree(0.01, NormWeights(), 1.0) == 7
    assert truncation_degree(0.3, NormWeights(), 1.0) == 2


@pytest.mark.parametrize("delta,s1,s2,c4", [(0.01, 0, 0, 1.0), (1e-6, 3, 3, 1e-4),
                                            (0.2, 1.5, -0.5, 5.0), (1e-3, -2, 0, 0.5)])
def test_truncation_degree_minimal(delta, s1, s2, c4):
    w = NormWeights(s1, s2)
    l = truncation_degree(delta, w, c4)
    assert l == brute_truncation(delta, s1 + s2, c4)
    env = lambda k: c4 * (2 * k + 1) ** (s1 + s2) * 2.0 ** -k
    assert all(env(k) < delta for k in range(l, l + 21))
    if l > 0:
        assert env(l - 1) >= delta


def test_delta_range_enforced():
    for bad in (0.0, 0.4, -1):
        with pytest.raises(ValueError):
            truncation_degree(bad, NormWeights(), 1.0)


def test_fixed_energy_grid_count():
    net = fixed_energy_grid_net(1.0, 0.25)
    assert net.step == 0.125
    assert net.cardinality == 17 ** 2


def test_ellipse_touches_strip():
    d = EllipseDomain.for_strip(1.0, 2.0, 0.2)
    assert d.max_imag == pytest.approx(0.2)
    assert np.abs(d.boundary(64).imag).max() == pytest.approx(0.2, rel=1e-3)


def test_chebyshev_degree_minimal():
    D = chebyshev_degree(1.0, 0.7, 1e-3)
    r = math.exp(-0.7)
    assert 2 * r ** (D + 1) / (1 - r) <= 5e-4 < 2 * r ** D / (1 - r)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(1e-3, 0.3))
def test_holo_net_covers_bounded_analytic_functions(b_re, b_im, delta):
    dom = EllipseDomain.for_strip(1.0, 1.5, 0.2)
    b = complex(b_re, b_im)
    f = lambda s: np.exp(b * s)
    C = float(np.abs(f(dom.boundary(512))).max()) * 1.01
    net = holo_net(dom, C, delta)
    idx = net.nearest(f)
    s = np.linspace(1.0, 1.5, 301)
    assert np.abs(net.evaluate(idx, s) - f(s)).max() <= delta


def test_coefficient_tolerance_matches_net_when_weight_falls():
    net = build_amplitude_net(0.01, NormWeights(3, 3), EnergyInterval(1.0, 1.5, (1.0, 1.5)),
                              0.2, 1e-3, 1e-6)
    for j1, j2 in [(1, 1), (2, 5), (4, 0)]:
        assert net.tolerance(j1, j2) == pytest.approx(
            coefficient_tolerance(j1, j2, NormWeights(3, 3), 1.0, 0.01), rel=1e-12)


@pytest.fixture(scope="module")
def small_net_setup():
    v = make_bump(VoxelGrid(16), (0.1, 0, 0), 0.3, 0.4)
    I = EnergyInterval.chebyshev(1.0, 1.5, 3)
    A = compute_amplitude_matrix(v, I.samples, 4)
    net = build_amplitude_net(1e-3, NormWeights(3, 3), I, 0.2, 1e-3, 1e-6)
    return A, net


def test_zero_matrix_quantizes_to_origin(small_net_setup):
    _, net = small_net_setup
    Z = AmplitudeMatrix.zeros(4, [1.0, 1.25, 1.5])
    idx = quantize_to_net(Z, net)
    assert idx.distance == 0 and not np.any(np.frombuffer(idx.key, dtype=np.int64))


def test_round_trip_within_delta(small_net_setup):
    A, net = small_net_setup
    idx = quantize_to_net(A, net)
    assert idx.distance <= net.delta
    assert quantize_to_net(A, net).key == idx.key


def test_bound_violation_raises(small_net_setup):
    A, net = small_net_setup
    big = AmplitudeMatrix(A.L, A.s_samples, A.entries * 10.0)
    with pytest.raises(NetQuantizationError, match="c2"):
        quantize_to_net(big, net)


def test_manifest_deterministic():
    I = EnergyInterval(1.0, 1.5, (1.0, 1.5))
    a = build_amplitude_net(0.01, NormWeights(), I, 0.2, 1e-2, 1e-3).manifest_text()
    b = build_amplitude_net(0.01, NormWeights(), I, 0.2, 1e-2, 1e-3).manifest_text()
    assert a == b


def test_lattice_size_is_largest_admissible():
    g = VoxelGrid(16)
    for eps in (0.05, 0.01, 0.002):
        b = SmoothnessBudget(2, 60.0, eps)
        k = lattice_size(b)
        fam = build_packing(b)
        assert cm_norm_estimate(fam.member(g, 0), 2) <= 60.0
        half = 0.5 / math.sqrt(3)
        assert eps * ((k + 1) / half) ** 2 * 21.06588211892647 > 60.0


def test_packing_signs_enumeration():
    fam = build_packing(SmoothnessBudget(2, 60.0, 0.05), k=1)
    assert fam.member_count == 2
    assert fam.signs(0) == (-1,) and fam.signs(1) == (1,)
    with pytest.raises(ValueError):
        build_packing(SmoothnessBudget(2, 60.0, 0.05), k=5)


def test_packing_count_exponent():
    eps = [1e-4, 1e-5, 1e-6, 1e-7]
    tab = packing_count_table(eps, 1.0, 2)
    slope = power_law_exponent([1 / e for e in eps], [r[2] for r in tab])
    assert slope == pytest.approx(1.5, rel=0.15)
