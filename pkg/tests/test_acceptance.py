"""Desk-scale acceptance suite: one printed pass/fail line per criterion."""
import math
import time

import numpy as np
import pytest

from scatinstab.amplitude import (AmplitudeMatrix, EnergyInterval, NormWeights,
                                  analyticity_check, c3_constant, compute_amplitude_matrix,
                                  decay_bound_check, default_quadrature, expand_coefficients,
                                  interval_sup_norm, odd_reciprocal_square_sum, stefanov_sup)
from scatinstab.experiments import (ExperimentConfig, calibrate_constants, cmd_instability_sweep,
                                    cmd_net_count, cmd_pigeonhole, ellipse_samples)
from scatinstab.nets import (SmoothnessBudget, build_amplitude_net, build_packing,
                             quantize_to_net, truncation_degree)
from scatinstab.potential import VoxelGrid, make_bump, potential_fourier
from scatinstab.solver import (IncidentWave, MuField, SolverConfig, amplitude_on_nodes,
                               c1_constant, far_field_check, scattering_amplitude, solve_mu)
from scatinstab.sphere import (HarmonicIndex, build_quadrature, fibonacci_directions,
                               real_harmonics)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail, seconds, limit):
        ok = bool(ok) and seconds < limit
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail} "
                  f"({seconds:.1f} s, limit {limit:.0f} s)")
        assert ok, detail
    return emit


def test_c01_c1_closed_form(report):
    t = time.perf_counter()
    c32, c64 = c1_constant(0.0, 32), c1_constant(0.0, 64)
    e32, e64 = abs(c32 - 0.5) / 0.5, abs(c64 - 0.5) / 0.5
    report(1, "c1(0) = 1/2", e32 < 0.01 and e64 < 0.0025,
           f"32^3 {c32:.5f} (err {e32:.2%}), 64^3 {c64:.5f} (err {e64:.2%})",
           time.perf_counter() - t, 10)


def test_c02_contraction_and_bound(report):
    g = VoxelGrid(32)
    v = make_bump(g, (0, 0, 0), 0.45, 1.0)
    assert v.sup_norm == 1.0
    t = time.perf_counter()
    mu = solve_mu(v, IncidentWave((0, 0, 1), 1.0, 0.0))
    sec = time.perf_counter() - t
    ratios = mu.residual_ratios()
    peak = float(np.abs(mu.values).max())
    report(2, "contraction and |mu| bound", ratios.max() <= 0.55 and peak <= 2.05,
           f"max residual ratio {ratios.max():.3f}, max|mu| {peak:.4f}, "
           f"{mu.iterations} iterations", sec, 30)


def test_c03_born_oracle(report):
    g = VoxelGrid(16)
    v = make_bump(g, (0.1, -0.05, 0.0), 0.3, 0.6)
    rng = np.random.default_rng(3)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        th, om = fibonacci_directions(200)[rng.integers(0, 200, 2)]
        s = rng.uniform(0.2, 3.0)
        wave = IncidentWave(tuple(th / np.linalg.norm(th)), s)
        ones = MuField(g, np.ones((16,) * 3, complex), wave, 0.0, 0)
        a = scattering_amplitude(v, ones, om)
        b = potential_fourier(v, s * (np.asarray(wave.theta) - om))
        worst = max(worst, abs(a - b) / abs(b))
    report(3, "Born oracle identity", worst <= 1e-13, f"max relative difference {worst:.2e}",
           time.perf_counter() - t, 5)


def test_c04_second_order_remainder(report):
    g = VoxelGrid(16)
    v = make_bump(g, (0.05, 0, 0.1), 0.35, 1.0)
    dirs = fibonacci_directions(6)
    cfg = SolverConfig(tol=1e-15, max_iter=200)
    t = time.perf_counter()
    born = np.array([potential_fourier(v, th[None, :] - dirs) for th in dirs])
    rem = {}
    for lam in (1e-2, 1e-3):
        f = amplitude_on_nodes(v.scaled(lam), 1.0, dirs, dirs, 0.2, cfg)
        rem[lam] = np.abs(f - lam * born).max() / lam ** 2
    ratio = rem[1e-2] / rem[1e-3]
    report(4, "second-order Born remainder", 0.5 <= ratio <= 2.0 and np.isfinite(ratio),
           f"|R|/lambda^2 = {rem[1e-2]:.4e} (1e-2), {rem[1e-3]:.4e} (1e-3), ratio {ratio:.4f}",
           time.perf_counter() - t, 120)


def test_c05_far_field(report):
    v = make_bump(VoxelGrid(24), (0.05, 0, 0), 0.35, 0.7)
    t = time.perf_counter()
    rep = far_field_check(v, IncidentWave((0, 0, 1), 1.0), [2.0, 4.0, 8.0])
    rel = rep.relative_difference
    report(5, "far-field consistency at R = 8", rel <= 0.05,
           f"relative difference {rel:.3%}, discrepancy by radius "
           + ", ".join(f"{d:.2e}" for d in rep.discrepancies), time.perf_counter() - t, 300)


def test_c06_harmonic_infrastructure(report):
    t = time.perf_counter()
    L = 12
    q = build_quadrature(2 * L)
    Y = real_harmonics(L, q.nodes)
    gram = np.abs((Y * q.weights[:, None]).T @ Y - np.eye(Y.shape[1])).max()
    q2 = default_quadrature(L)
    Y2 = real_harmonics(L, q2.nodes)
    a, b = HarmonicIndex(7, 3).flat, HarmonicIndex(12, 20).flat
    c = expand_coefficients(np.outer(Y2[:, a], Y2[:, b]), q2, L)
    hit = c[a, b]
    c[a, b] = 0
    report(6, "Gram identity and single-coefficient recovery",
           gram < 1e-10 and abs(hit - 1) < 1e-10 and np.abs(c).max() < 1e-10,
           f"Gram error {gram:.1e}, recovered {hit.real:.14f}, others <= {np.abs(c).max():.1e}",
           time.perf_counter() - t, 60)


def test_c07_decay_envelope(report):
    v = make_bump(VoxelGrid(24), (0.1, 0, 0.05), 0.3, 0.5)
    t = time.perf_counter()
    A = compute_amplitude_matrix(v, [1.0], 10)
    fit = decay_bound_check(A, 1.0, 0.5)
    report(7, "decay envelope", fit.passed and fit.super_linear(),
           f"fitted C {fit.C:.3e}, super-linear {fit.super_linear()}, profile "
           + " ".join(f"{p:.1e}" for p in fit.degree_profile[:8]), time.perf_counter() - t, 600)


def test_c08_analyticity(report):
    v = make_bump(VoxelGrid(24), (0.05, 0.05, 0), 0.35, 0.5)
    q = build_quadrature(8)

    def a0101(s):
        f = amplitude_on_nodes(v, s, q.nodes, q.nodes, 0.2)
        return expand_coefficients(f, q, 0)[0, 0]

    t = time.perf_counter()
    s0 = 1.0
    err = analyticity_check(a0101, s0, 0.1, 0.2, nodes=64)
    rel = err / abs(a0101(s0))
    report(8, "Cauchy reconstruction of a_0101", rel <= 1e-6, f"relative error {rel:.2e}",
           time.perf_counter() - t, 900)


def test_c09_norm_chain(report):
    t = time.perf_counter()
    I = EnergyInterval(1.0, 1.5, (1.0, 1.25, 1.5))
    c3 = c3_constant(I)
    series = odd_reciprocal_square_sum()
    corpus = [AmplitudeMatrix.zeros(4, I.samples)]
    for center, scale, amp in [((0, 0, 0), 0.45, 0.5), ((0.1, 0, 0.05), 0.3, 0.5),
                               ((0.2, 0.1, 0), 0.2, -0.8)]:
        v = make_bump(VoxelGrid(16), center, scale, amp)
        corpus.append(compute_amplitude_matrix(v, I.samples, 6))
    rng = np.random.default_rng(9)
    corpus += [AmplitudeMatrix(3, I.samples, rng.normal(size=(3, 16, 16))) for _ in range(5)]
    ok = abs(series - math.pi ** 2 / 8) < 1e-6
    worst = 0.0
    for A in corpus:
        for sig in [(0, 0), (1.5, -0.5), (-1, 2)]:
            w = NormWeights(*sig)
            lhs, rhs = stefanov_sup(A, w), c3 * interval_sup_norm(A, w.shifted(3))
            ok &= lhs <= rhs * (1 + 1e-12)
            if rhs > 0:
                worst = max(worst, lhs / rhs)
    report(9, "norm chain", ok, f"c3 {c3:.4f}, series - pi^2/8 = {series - math.pi ** 2 / 8:.1e},"
           f" worst lhs/rhs {worst:.3e} over {len(corpus)} matrices", time.perf_counter() - t, 60)


def test_c10_truncation_degree(report):
    t = time.perf_counter()
    l = truncation_degree(0.01, NormWeights(), 1.0)
    env = [2.0 ** -k for k in range(200)]
    brute = max(k for k in range(200) if env[k] >= 0.01) + 1
    minimal = env[l - 1] >= 0.01 and all(env[k] < 0.01 for k in range(l, l + 21))
    report(10, "truncation degree", l == 7 == brute and minimal,
           f"l_delta = {l}, enumeration {brute}", time.perf_counter() - t, 1)


def test_c11_net_covering(report):
    t = time.perf_counter()
    grid = VoxelGrid(16)
    I = EnergyInterval.chebyshev(1.0, 1.5, 3)
    w = NormWeights().shifted(3)
    eps, alpha = 0.05, 5.0
    fam = build_packing(SmoothnessBudget(2, 60.0, eps))
    rng = np.random.default_rng(11)
    chosen = rng.choice(fam.member_count, 20, replace=False)
    members = [fam.member(grid, int(i)) for i in chosen]
    mats = [compute_amplitude_matrix(v, I.samples, 6) for v in members]
    extra = [compute_amplitude_matrix(members[0], ellipse_samples(I, 0.2), 6)]
    c2, c4 = calibrate_constants(mats + extra, w)
    delta = math.exp(-eps ** (-1 / alpha)) / (2 * c3_constant(I))
    net = build_amplitude_net(delta, w, I, 0.2, c2, c4)
    dists = [quantize_to_net(A, net).distance for A in mats]
    report(11, "net covering", max(dists) <= delta,
           f"delta {delta:.3e}, max distance {max(dists):.3e}, l_delta {net.l_max}, "
           f"log|Y| {net.log_cardinality:.3e}", time.perf_counter() - t, 1800)


def test_c12_pigeonhole(report, tmp_path):
    t = time.perf_counter()
    rep = cmd_pigeonhole(ExperimentConfig(k=2, delta=0.3, out=str(tmp_path)))
    card = rep.net_cardinality
    ok = (rep.packing_size == 256 and card is not None and card < 256 and rep.collision
          and rep.linf_distance == 2 * 0.05 and rep.net_distance <= 2 * rep.delta
          and all(rep.inequalities.values()))
    report(12, "pigeonhole collision", ok,
           f"|Z| {rep.packing_size}, |Y| {card}, pair {rep.pair}, L-inf {rep.linf_distance}, "
           f"net distance {rep.net_distance:.2e} <= {2 * rep.delta}, sup Stefanov "
           f"{rep.sup_stefanov_distance:.2e}, inequalities "
           + ",".join(k for k, v in rep.inequalities.items() if v), time.perf_counter() - t,
           2700)


def test_c13_instability_sweep(report, tmp_path):
    t = time.perf_counter()
    rows = cmd_instability_sweep(ExperimentConfig(grid_n=32, L=9, out=str(tmp_path)))
    d = [r.distance for r in rows]
    live = [x for x in d if x >= 1e-14]
    ratios = [b / a for a, b in zip(live, live[1:])]
    decreasing = all(b < a for a, b in zip(live, live[1:]))
    ratios_decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    report(13, "instability sweep super-geometric", decreasing and ratios_decreasing,
           "distances " + " ".join(f"{x:.2e}" for x in d) + "; ratios "
           + " ".join(f"{r:.3f}" for r in ratios), time.perf_counter() - t, 1800)


def test_c14_counting_shapes(report, tmp_path):
    t = time.perf_counter()
    out = cmd_net_count(ExperimentConfig(beta=1.0, out=str(tmp_path)))
    pe = out["packing_exponent"]
    ok = (abs(pe - 1.5) / 1.5 <= 0.15 and out["interval_degree"] <= 6
          and out["fixed_energy_degree"] <= 5)
    report(14, "counting shapes", ok,
           f"packing exponent {pe:.3f} (3/m = 1.5), net polylog degree interval "
           f"{out['interval_degree']:.2f}, fixed energy {out['fixed_energy_degree']:.2f}",
           time.perf_counter() - t, 600)
