"""Packings of the fat potential space and delta-nets of the thin amplitude space."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C

from .amplitude import AmplitudeMatrix, EnergyInterval, NormWeights, degree_weights
from .potential import (SUPPORT_RADIUS_LIMIT, Potential, VoxelGrid, assemble_from_signs,
                        cube_layout, mollifier_constant)
from .sphere import harmonic_degrees

LOG_INT_LIMIT = 63 * math.log(2.0)
DIMENSION = 3


class NetQuantizationError(ValueError):
    """The matrix is not in the set the net was built for."""


@dataclass(frozen=True)
class SmoothnessBudget:
    m: int
    beta: float
    epsilon: float

    def __post_init__(self):
        if self.m < 0 or self.beta <= 0 or self.epsilon <= 0:
            raise ValueError("need m >= 0, beta > 0, epsilon > 0")

    @property
    def admissible(self) -> bool:
        return self.epsilon <= packing_margin(self.m) * self.beta


def packing_margin(m: int) -> float:
    """mu_eff: a single lattice bump of amplitude eps has C^m estimate eps / mu_eff."""
    half = SUPPORT_RADIUS_LIMIT / math.sqrt(3.0)
    return half ** m / mollifier_constant(m)


def _cardinality(log_count: float):
    if log_count < LOG_INT_LIMIT:
        return int(round(math.exp(log_count)))
    return None


@dataclass(frozen=True, eq=False)
class PackingFamily:
    layout: tuple
    epsilon: float
    m: int
    k: int

    @property
    def member_count(self) -> int:
        return 2 ** len(self.layout)

    @property
    def log_member_count(self) -> float:
        return len(self.layout) * math.log(2.0)

    def signs(self, index: int) -> tuple:
        if not 0 <= index < self.member_count:
            raise IndexError(index)
        return tuple(1 if (index >> b) & 1 else -1 for b in range(len(self.layout)))

    def member(self, grid: VoxelGrid, index: int) -> Potential:
        return assemble_from_signs(grid, list(self.layout), self.signs(index),
                                   self.epsilon, self.m)


def lattice_size(budget: SmoothnessBudget) -> int:
    """Largest k whose k^3 lattice bumps keep the C^m estimate within beta."""
    half = SUPPORT_RADIUS_LIMIT / math.sqrt(3.0)
    K = mollifier_constant(budget.m)
    k = int(math.floor(half * (budget.beta / (budget.epsilon * K)) ** (1.0 / budget.m))) \
        if budget.m > 0 else 10 ** 6
    # float guard on both sides of the threshold
    while k >= 1 and budget.epsilon * (half / k) ** (-budget.m) * K > budget.beta * (1 + 1e-12):
        k -= 1
    while budget.epsilon * (half / (k + 1)) ** (-budget.m) * K <= budget.beta:
        k += 1
        if budget.m == 0:
            break
    return k


def build_packing(budget: SmoothnessBudget, k: int | None = None) -> PackingFamily:
    """k^3 disjoint bumps on a lattice in B(0,1/2), all sign patterns of amplitude eps.

    ``k`` defaults to the largest lattice the budget allows; a smaller ``k`` may
    be forced for toy experiments.
    """
    kmax = lattice_size(budget)
    if kmax < 1:
        raise ValueError("epsilon too large for beta")
    if k is None:
        k = kmax
    elif not 1 <= k <= kmax:
        raise ValueError(f"k = {k} outside the budget's range 1..{kmax}")
    return PackingFamily(tuple(cube_layout(k)), budget.epsilon, budget.m, k)


@dataclass(frozen=True)
class EllipseDomain:
    """{(a+b)/2 + (a-b)/2 cos z : |Im z| <= gamma}, a Bernstein ellipse with parameter e^gamma."""

    a: float
    b: float
    gamma: float

    def __post_init__(self):
        if self.b < self.a:
            raise ValueError("need a <= b")
        if self.gamma <= 0 and self.b > self.a:
            raise ValueError("gamma must be positive")

    @property
    def max_imag(self) -> float:
        if self.b == self.a:
            return 0.0
        return 0.5 * (self.b - self.a) * math.sinh(self.gamma)

    def inside_strip(self, h: float) -> bool:
        return self.max_imag <= h * (1 + 1e-12)

    @classmethod
    def for_strip(cls, a: float, b: float, h: float) -> "EllipseDomain":
        """Largest gamma whose ellipse stays in |Im s| <= h."""
        if h <= 0:
            raise ValueError("strip half-width must be positive")
        if b == a:
            return cls(a, b, math.inf)
        return cls(a, b, math.asinh(2.0 * h / (b - a)))

    def to_unit(self, s):
        if self.b == self.a:
            return np.zeros_like(np.asarray(s, dtype=float))
        return (2.0 * np.asarray(s, dtype=float) - self.a - self.b) / (self.b - self.a)

    def boundary(self, count: int = 16) -> np.ndarray:
        t = 2 * np.pi * np.arange(count) / count
        return 0.5 * (self.a + self.b) + 0.5 * (self.a - self.b) * np.cos(t + 1j * self.gamma)


@dataclass(frozen=True, eq=False)
class HoloNet:
    """Quantized truncated Chebyshev expansions on [a, b].

    Coefficient n lives on a grid of step ``step`` in both real and imaginary
    part, with ``half_counts[n]`` grid points on either side of zero.  A
    fixed-energy net is the degree-0 case with step delta/2.  Tolerances and
    steps are carried as logarithms because high-degree tolerances underflow.
    """

    domain: EllipseDomain
    bound_C: float
    log_delta: float
    degree: int
    step: float
    log_step: float
    log_half_counts: np.ndarray = field(repr=False)

    @property
    def delta(self) -> float:
        return math.exp(self.log_delta)

    @property
    def half_counts(self) -> np.ndarray:
        return np.exp(self.log_half_counts)

    @property
    def log_cardinality(self) -> float:
        lh = self.log_half_counts
        # log(2 H + 1), with the +1 dropped where it no longer matters
        exact = np.log(2.0 * np.exp(np.minimum(lh, 700.0)) + 1.0)
        return float(2.0 * np.sum(np.where(lh < 35.0, exact, math.log(2.0) + lh)))

    @property
    def cardinality(self):
        return _cardinality(self.log_cardinality)

    def quantize(self, coeffs) -> np.ndarray:
        """Integer grid indices (degree+1, 2) of the nearest admissible coefficients."""
        step = self.step
        if step == 0.0:
            raise NetQuantizationError("net step below floating-point range")
        c = np.zeros(self.degree + 1, dtype=complex)
        src = np.asarray(coeffs, dtype=complex)[: self.degree + 1]
        c[: len(src)] = src
        lim = np.minimum(self.half_counts, 2.0 ** 62)
        re = np.clip(np.rint(c.real / step), -lim, lim)
        im = np.clip(np.rint(c.imag / step), -lim, lim)
        return np.stack([re, im], axis=1).astype(np.int64)

    def coefficients(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return self.step * (idx[:, 0] + 1j * idx[:, 1])

    def evaluate(self, idx, s) -> np.ndarray:
        return C.chebval(self.domain.to_unit(s), self.coefficients(idx))

    def nearest(self, fn, samples: int = 65):
        """Grid indices of a net member close to the callable ``fn`` on [a, b]."""
        if self.domain.a == self.domain.b:
            return self.quantize([complex(fn(self.domain.a))])
        x = np.cos(np.pi * (np.arange(samples) + 0.5) / samples)
        s = 0.5 * (self.domain.a + self.domain.b) + 0.5 * (self.domain.b - self.domain.a) * x
        vals = np.array([complex(fn(t)) for t in s])
        coef = C.chebfit(x, vals.real, samples - 1) + 1j * C.chebfit(x, vals.imag, samples - 1)
        return self.quantize(coef)


def fixed_energy_grid_net(C_bound: float, delta: float, s: float = 1.0) -> HoloNet:
    """(delta/2)Z cap [-C, C] in both real and imaginary part."""
    if not 0 < delta < 1 / math.e:
        raise ValueError("delta must lie in (0, 1/e)")
    if C_bound <= 0:
        raise ValueError("C must be positive")
    return _grid_net(C_bound, delta, math.log(delta), s)


def _log_half(bound: float, step: float, log_ratio: float, rounding) -> float:
    """log of rounding(bound / step), exact while the ratio is representable."""
    if step == 0.0 or log_ratio >= 35.0:
        return log_ratio
    half = rounding(bound / step)
    return math.log(half) if half > 0 else -math.inf


def _grid_net(C_bound, tol, log_tol, s):
    step = tol / 2.0
    log_step = log_tol - math.log(2.0)
    lh = _log_half(C_bound, step, math.log(C_bound) - log_step, math.floor)
    return HoloNet(EllipseDomain(s, s, math.inf), C_bound, log_tol, 0, step, log_step,
                   np.array([lh]))


def chebyshev_degree(C_bound: float, gamma: float, tol: float) -> int:
    """Smallest D with 2C e^{-gamma (D+1)} / (1 - e^{-gamma}) <= tol / 2."""
    return _chebyshev_degree(C_bound, gamma, math.log(tol))


def _chebyshev_degree(C_bound, gamma, log_tol):
    # log of 2C e^{-gamma(D+1)}/(1-e^{-gamma}) minus log(tol/2), linear in D
    excess = math.log(4.0 * C_bound) - math.log(-math.expm1(-gamma)) - gamma - log_tol
    D = max(0, math.ceil(excess / gamma))
    while D > 0 and excess - gamma * (D - 1) <= 0:
        D -= 1
    while excess - gamma * D > 1e-12:
        D += 1
    return D


def holo_net(domain: EllipseDomain, C_bound: float, delta: float) -> HoloNet:
    """delta-net for functions on [a, b] bounded by C on the ellipse.

    Truncation after degree D costs at most delta/2 (Chebyshev coefficients of
    such functions are bounded by 2C e^{-gamma n}); rounding D+1 complex
    coefficients to a grid of step delta / (sqrt 2 (D+1)) costs the other half.
    """
    if not 0 < delta < 1 / math.e:
        raise ValueError("delta must lie in (0, 1/e)")
    return _chebyshev_net(domain, C_bound, delta, math.log(delta))


def _chebyshev_net(domain, C_bound, tol, log_tol):
    """``tol`` may underflow to zero; ``log_tol`` carries the value then."""
    if domain.a == domain.b:
        return _grid_net(C_bound, tol, log_tol, domain.a)
    D = _chebyshev_degree(C_bound, domain.gamma, log_tol)
    step = tol / (math.sqrt(2.0) * (D + 1))
    log_step = log_tol - math.log(math.sqrt(2.0) * (D + 1))
    lh = []
    for n in range(D + 1):
        bound = C_bound if n == 0 else 2.0 * C_bound * math.exp(-domain.gamma * n)
        log_bound = math.log(C_bound) if n == 0 else math.log(2.0 * C_bound) - domain.gamma * n
        lh.append(_log_half(bound, step, log_bound - log_step, math.ceil))
    return HoloNet(domain, C_bound, log_tol, D, step, log_step, np.array(lh))


def truncation_degree(delta: float, w: NormWeights, c4: float) -> int:
    """Smallest l with c4 (2l'+1)^(sigma1+sigma2) 2^-l' < delta for every l' >= l."""
    if not 0 < delta < 1 / math.e:
        raise ValueError("delta must lie in (0, 1/e)")
    if c4 <= 0:
        raise ValueError("c4 must be positive")
    S = w.sigma1 + w.sigma2

    def env(l):
        return c4 * (2 * l + 1) ** S * 2.0 ** (-l)

    # log env is concave in l, so past its peak it decreases for good
    peak = max(0, math.ceil(S / math.log(2.0) - 0.5)) if S > 0 else 0
    l = peak
    while env(l) >= delta:
        l += 1
    last_bad = l - 1
    if last_bad < peak:
        # nothing fails past the peak; look below it
        bad = [k for k in range(peak) if env(k) >= delta]
        last_bad = bad[-1] if bad else -1
    return last_bad + 1


def coefficient_tolerance(j1: int, j2: int, w: NormWeights, s1: float, delta: float) -> float:
    """(e s1/(2j1+1))^(j1+sigma1) (e s1/(2j2+1))^(j2+sigma2) delta."""
    return ((math.e * s1 / (2 * j1 + 1)) ** (j1 + w.sigma1)
            * (math.e * s1 / (2 * j2 + 1)) ** (j2 + w.sigma2) * delta)


def _log_pair_weight(j1, j2, w, s):
    return ((j1 + w.sigma1) * math.log((2 * j1 + 1) / (math.e * s))
            + (j2 + w.sigma2) * math.log((2 * j2 + 1) / (math.e * s)))


@dataclass(frozen=True, eq=False)
class NetIndex:
    key: bytes
    distance: float
    point: AmplitudeMatrix

    @property
    def digest(self) -> str:
        return hashlib.sha1(self.key).hexdigest()


@dataclass(frozen=True, eq=False)
class AmplitudeNet:
    delta: float
    weights: NormWeights
    s1: float
    s2: float
    strip_h: float
    c2: float
    c4: float
    l_max: int
    domain: EllipseDomain
    per_index_nets: dict = field(repr=False)

    @property
    def fixed_energy(self) -> bool:
        return self.s1 == self.s2

    def log_tolerance(self, j1: int, j2: int) -> float:
        # equals log coefficient_tolerance at s1 whenever the weight falls with s
        worst = max(_log_pair_weight(j1, j2, self.weights, self.s1),
                    _log_pair_weight(j1, j2, self.weights, self.s2))
        return math.log(self.delta) - worst

    def tolerance(self, j1: int, j2: int) -> float:
        return math.exp(self.log_tolerance(j1, j2))

    @property
    def log_cardinality(self) -> float:
        return float(sum((2 * j1 + 1) * (2 * j2 + 1) * net.log_cardinality
                         for (j1, j2), net in self.per_index_nets.items()))

    @property
    def cardinality(self):
        return _cardinality(self.log_cardinality)

    def manifest(self) -> dict:
        return {
            "delta": self.delta,
            "weights": [self.weights.sigma1, self.weights.sigma2],
            "interval": [self.s1, self.s2],
            "strip_h": self.strip_h,
            "c2": self.c2,
            "c4": self.c4,
            "gamma": None if math.isinf(self.domain.gamma) else self.domain.gamma,
            "l_max": self.l_max,
            "log_cardinality": self.log_cardinality,
            "cardinality": self.cardinality,
            "per_index": [
                {"j1": j1, "j2": j2, "log_tolerance": net.log_delta, "degree": net.degree,
                 "log_step": net.log_step,
                 "log_half_counts": [float(c) for c in net.log_half_counts]}
                for (j1, j2), net in sorted(self.per_index_nets.items())],
        }

    def manifest_text(self) -> str:
        return json.dumps(self.manifest(), indent=1, sort_keys=True)


def build_amplitude_net(delta: float, w: NormWeights, I: EnergyInterval, h: float,
                        c2: float, c4: float) -> AmplitudeNet:
    if not 0 < delta < 1 / math.e:
        raise ValueError("delta must lie in (0, 1/e)")
    if c2 <= 0 or c4 <= 0:
        raise ValueError("c2 and c4 must be positive")
    domain = EllipseDomain.for_strip(I.s1, I.s2, h)
    if not domain.inside_strip(h):
        raise ValueError("ellipse leaves the strip")
    l_max = truncation_degree(delta, w, c4)
    net = AmplitudeNet(delta, w, I.s1, I.s2, h, c2, c4, l_max, domain, {})
    for j1 in range(l_max + 1):
        for j2 in range(l_max + 1):
            net.per_index_nets[(j1, j2)] = _chebyshev_net(domain, c2, net.tolerance(j1, j2),
                                                           net.log_tolerance(j1, j2))
    return net


def quantize_to_net(A: AmplitudeMatrix, net: AmplitudeNet) -> NetIndex:
    """Nearest net member, entry by entry, and its distance in the sup-weighted norm."""
    s = np.real(A.s_samples)
    if np.any(s < net.s1 - 1e-12) or np.any(s > net.s2 + 1e-12):
        raise NetQuantizationError("matrix sampled outside the net's interval")
    mags = np.abs(A.entries)
    if mags.max(initial=0.0) > net.c2:
        raise NetQuantizationError(
            f"entry of modulus {mags.max():.3e} exceeds the bound c2 = {net.c2:.3e}")
    deg = harmonic_degrees(A.L)
    x = net.domain.to_unit(s)
    point = np.zeros_like(A.entries)
    keys = []
    ns = len(s)
    for (j1, j2), hnet in sorted(net.per_index_nets.items()):
        if j1 > A.L or j2 > A.L:
            continue
        rows = np.nonzero(deg == j1)[0]
        cols = np.nonzero(deg == j2)[0]
        block = A.entries[:, rows[:, None], cols[None, :]].reshape(ns, -1)
        if net.fixed_energy or ns == 1:
            coef = block[:1]
        else:
            # interpolating Chebyshev coefficients through the samples
            V = C.chebvander(x, ns - 1)
            coef = np.linalg.lstsq(V, block, rcond=None)[0]
        idx = np.stack([hnet.quantize(coef[:, e]) for e in range(block.shape[1])])
        keys.append(idx.ravel())
        vals = np.stack([hnet.evaluate(i, s) for i in idx], axis=1)
        point[:, rows[:, None], cols[None, :]] = vals.reshape(ns, len(rows), len(cols))
    diff = A.entries - point
    dist = 0.0
    for k, sk in enumerate(s):
        w1 = degree_weights(A.L, sk, net.weights.sigma1)
        w2 = degree_weights(A.L, sk, net.weights.sigma2)
        weighted = w1[:, None] * np.abs(diff[k]) * w2[None, :]
        beyond = np.maximum(deg[:, None], deg[None, :]) > net.l_max
        if np.any(weighted[beyond] > net.delta):
            raise NetQuantizationError("entry beyond l_delta exceeds the decay envelope")
        dist = max(dist, float(weighted.max()))
    key = np.concatenate(keys).tobytes() if keys else b""
    return NetIndex(key, dist, AmplitudeMatrix(A.L, A.s_samples, point))


def packing_count_table(epsilons, beta: float, m: int):
    """(epsilon, k, log member count) for each epsilon."""
    rows = []
    for eps in epsilons:
        k = lattice_size(SmoothnessBudget(m, beta, eps))
        rows.append((float(eps), k, k ** DIMENSION * math.log(2.0)))
    return rows


def net_count_table(deltas, w: NormWeights, I: EnergyInterval, h: float, c2: float, c4: float):
    """(delta, l_delta, log cardinality) for each delta."""
    rows = []
    for d in deltas:
        net = build_amplitude_net(d, w, I, h, c2, c4)
        rows.append((float(d), net.l_max, net.log_cardinality))
    return rows


def power_law_exponent(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
