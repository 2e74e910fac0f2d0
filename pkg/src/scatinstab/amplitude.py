"""Double spherical-harmonic expansion of scattering amplitudes and their norms."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .potential import Potential
from .solver import DEFAULT_STRIP, SolverConfig, amplitude_on_nodes
from .sphere import (SphereQuadrature, build_quadrature, harmonic_degrees,
                     n_harmonics, real_harmonics)

E = np.e
NOISE_FLOOR = 1e-14


@dataclass(frozen=True)
class EnergyInterval:
    s1: float
    s2: float
    samples: tuple

    def __post_init__(self):
        if not self.s1 > 0:
            raise ValueError("interval needs s1 > 0")
        if self.s2 < self.s1:
            raise ValueError("interval needs s2 >= s1")
        samples = tuple(sorted(float(s) for s in self.samples))
        if not samples:
            raise ValueError("interval needs at least one sample")
        if samples[0] < self.s1 - 1e-12 or samples[-1] > self.s2 + 1e-12:
            raise ValueError("samples must lie in [s1, s2]")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def chebyshev(cls, s1: float, s2: float, count: int) -> "EnergyInterval":
        """Chebyshev-Lobatto samples (endpoints included)."""
        if count == 1 or s1 == s2:
            return cls(s1, s2, (0.5 * (s1 + s2),) if count == 1 else (s1,))
        t = np.cos(np.pi * np.arange(count) / (count - 1))
        return cls(s1, s2, tuple(0.5 * (s1 + s2) + 0.5 * (s2 - s1) * t))

    @property
    def is_fixed_energy(self) -> bool:
        return self.s1 == self.s2


@dataclass(frozen=True)
class NormWeights:
    sigma1: float = 0.0
    sigma2: float = 0.0

    def shifted(self, by: float) -> "NormWeights":
        return NormWeights(self.sigma1 + by, self.sigma2 + by)


@dataclass(frozen=True, eq=False)
class AmplitudeMatrix:
    """Coefficients ``entries[k, flat(j1,p1), flat(j2,p2)]`` at ``s_samples[k]``."""

    L: int
    s_samples: np.ndarray
    entries: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s_samples))
        e = np.asarray(self.entries, dtype=complex)
        K = n_harmonics(self.L)
        if e.shape != (len(s), K, K):
            raise ValueError(f"entries shape {e.shape} does not match L={self.L}, {len(s)} samples")
        if not np.all(np.isfinite(e)):
            raise ValueError("amplitude coefficients must be finite")
        object.__setattr__(self, "s_samples", s)
        object.__setattr__(self, "entries", e)

    @classmethod
    def zeros(cls, L: int, s_samples) -> "AmplitudeMatrix":
        s = np.atleast_1d(np.asarray(s_samples))
        K = n_harmonics(L)
        return cls(L, s, np.zeros((len(s), K, K), dtype=complex))

    def sample_index(self, s) -> int:
        hit = np.nonzero(np.isclose(self.s_samples, s, rtol=1e-12, atol=1e-14))[0]
        if len(hit) == 0:
            raise ValueError(f"s = {s} is not among the sampled values")
        return int(hit[0])

    def entry(self, j1: int, p1: int, j2: int, p2: int, k: int = 0) -> complex:
        return complex(self.entries[k, j1 * j1 + p1 - 1, j2 * j2 + p2 - 1])

    def truncated(self, L: int) -> "AmplitudeMatrix":
        K = n_harmonics(L)
        return AmplitudeMatrix(L, self.s_samples, self.entries[:, :K, :K])

    def __sub__(self, other: "AmplitudeMatrix") -> "AmplitudeMatrix":
        if self.L != other.L or not np.array_equal(self.s_samples, other.s_samples):
            raise ValueError("matrices sampled differently")
        return AmplitudeMatrix(self.L, self.s_samples, self.entries - other.entries)


def expand_coefficients(f_samples, quad: SphereQuadrature, L: int) -> np.ndarray:
    """a[j1p1, j2p2] = sum over node pairs of w_i w_k f(theta_i, omega_k) Y(theta_i) Y(omega_k)."""
    if quad.exactness_degree < 2 * L:
        raise ValueError(f"quadrature exact to degree {quad.exactness_degree}, "
                         f"need at least {2 * L} for L = {L}")
    f = np.asarray(f_samples)
    n = len(quad.weights)
    if f.shape != (n, n):
        raise ValueError("f_samples must be given on all node pairs")
    Yw = real_harmonics(L, quad.nodes) * quad.weights[:, None]
    return Yw.T @ f @ Yw


def synthesize(coeffs: np.ndarray, L: int, thetas, omegas) -> np.ndarray:
    """Evaluate sum a Y(theta) Y(omega) at the given direction sets."""
    return real_harmonics(L, thetas) @ coeffs @ real_harmonics(L, omegas).T


def default_quadrature(L: int, margin: int = 4) -> SphereQuadrature:
    return build_quadrature(2 * L + margin)


def compute_amplitude_matrix(v: Potential, s_samples, L: int, h: float = DEFAULT_STRIP,
                             cfg: SolverConfig = SolverConfig(),
                             quad: SphereQuadrature | None = None) -> AmplitudeMatrix:
    """Solve at every quadrature node for each s and expand up to degree L."""
    quad = quad or default_quadrature(L)
    s_samples = np.atleast_1d(np.asarray(s_samples))
    out = []
    for s in s_samples:
        f = amplitude_on_nodes(v, s, quad.nodes, quad.nodes, h, cfg)
        out.append(expand_coefficients(f, quad, L))
    return AmplitudeMatrix(L, s_samples, np.array(out))


def degree_weights(L: int, s: float, sigma: float) -> np.ndarray:
    """((2j+1)/(e s))^(j + sigma) for every flat index up to degree L."""
    j = harmonic_degrees(L)
    return ((2 * j + 1) / (E * s)) ** (j + sigma)


def stefanov_norm(A: AmplitudeMatrix, s: float, w: NormWeights) -> float:
    k = A.sample_index(s)
    s = float(np.real(A.s_samples[k]))
    if s <= 0:
        raise ValueError("Stefanov norm needs s > 0")
    w1 = degree_weights(A.L, s, w.sigma1)
    w2 = degree_weights(A.L, s, w.sigma2)
    weighted = w1[:, None] * np.abs(A.entries[k]) * w2[None, :]
    return float(np.sqrt(np.sum(weighted ** 2)))


def stefanov_sup(A: AmplitudeMatrix, w: NormWeights) -> float:
    return max(stefanov_norm(A, s, w) for s in A.s_samples)


def weighted_entries(A: AmplitudeMatrix, w: NormWeights) -> np.ndarray:
    """Entries multiplied by the sup-norm weights, one slice per s sample."""
    out = np.empty(A.entries.shape)
    for k, s in enumerate(np.real(A.s_samples)):
        w1 = degree_weights(A.L, s, w.sigma1)
        w2 = degree_weights(A.L, s, w.sigma2)
        out[k] = w1[:, None] * np.abs(A.entries[k]) * w2[None, :]
    return out


def interval_sup_norm(A: AmplitudeMatrix, w: NormWeights,
                      I: EnergyInterval | None = None) -> float:
    """sup over s samples and indices of the weighted |a(s)|."""
    if I is not None:
        for s in I.samples:
            A.sample_index(s)
    return float(weighted_entries(A, w).max()) if A.entries.size else 0.0


def interval_distance(A: AmplitudeMatrix, B: AmplitudeMatrix, w: NormWeights) -> float:
    return interval_sup_norm(A - B, w)


def odd_reciprocal_square_sum(terms: int = 100_000) -> float:
    """sum_{j>=0} (2j+1)^-2 by partial sum plus the integral upper bound on the tail."""
    j = np.arange(terms, dtype=float)
    partial = float(np.sum(1.0 / (2 * j[::-1] + 1) ** 2))
    return partial + 1.0 / (2.0 * (2 * terms + 1))


def c3_constant(I: EnergyInterval) -> float:
    """1 + sum over all (j1,p1,j2,p2) of ((2j1+1)/(e s2))^-3 ((2j2+1)/(e s2))^-3.

    Each degree has 2j+1 orders, so the double sum factors into
    (e s2)^6 (sum_j (2j+1)^-2)^2.
    """
    return 1.0 + (E * I.s2) ** 6 * odd_reciprocal_square_sum() ** 2


@dataclass(frozen=True)
class DecayFit:
    C: float
    passed: bool
    degree_profile: np.ndarray
    envelope_profile: np.ndarray

    def super_linear(self) -> bool:
        """True when successive log-drops of the profile keep growing."""
        prof = self.degree_profile
        keep = prof > NOISE_FLOOR
        logs = np.log(prof[keep])
        if len(logs) < 3:
            return True
        steps = np.diff(logs)
        return bool(np.all(steps < 0) and np.all(np.diff(steps) < 0))


def decay_envelope(L: int, s: float, rho: float) -> np.ndarray:
    j = harmonic_degrees(L)
    e = (E * s * rho / (2 * j + 1)) ** (j + 1.5)
    return e[:, None] * e[None, :]


def decay_bound_check(A: AmplitudeMatrix, s: float, rho: float,
                      cap: float = 1e12, floor: float = NOISE_FLOOR) -> DecayFit:
    """Smallest C with |a| <= C * envelope over all entries above the noise floor."""
    k = A.sample_index(s)
    s = float(np.real(A.s_samples[k]))
    a = np.abs(A.entries[k])
    env = decay_envelope(A.L, s, rho)
    above = a > floor
    C = float((a[above] / env[above]).max()) if np.any(above) else 0.0
    deg = harmonic_degrees(A.L)
    top = np.maximum(deg[:, None], deg[None, :])
    profile = np.array([a[top == J].max() for J in range(A.L + 1)])
    env_prof = np.array([C * env[top == J].max() for J in range(A.L + 1)])
    return DecayFit(C, bool(np.isfinite(C) and C <= cap), profile, env_prof)


def analyticity_check(coeff_fn, s0: complex, r: float, h: float, nodes: int = 64) -> float:
    """|a(s0) - (2 pi i)^-1 \\oint a(s)/(s - s0) ds| by the trapezoid rule on |s - s0| = r."""
    if abs(complex(s0).imag) + r > h:
        raise ValueError("contour leaves the strip |Im s| <= h")
    if nodes < 64:
        raise ValueError("use at least 64 contour nodes")
    t = 2.0 * np.pi * np.arange(nodes) / nodes
    ring = complex(s0) + r * np.exp(1j * t)
    # with s - s0 = r e^{it}, ds/(s - s0) = i dt
    cauchy = np.mean([complex(coeff_fn(s)) for s in ring])
    return float(abs(complex(coeff_fn(complex(s0))) - cauchy))


def save_amplitude_matrix(path, A: AmplitudeMatrix, w: NormWeights | None = None) -> None:
    """npz container; ``entries_flat`` is ordered (j1, p1, j2, p2, s), s fastest."""
    meta = {"order": "j1,p1,j2,p2,s (s fastest)"}
    if w is not None:
        meta.update(sigma1=w.sigma1, sigma2=w.sigma2)
    with open(path, "wb") as fh:
        np.savez(fh, L=np.int64(A.L), s_samples=A.s_samples,
                 entries_flat=np.ascontiguousarray(np.moveaxis(A.entries, 0, -1)).ravel(),
                 meta=np.array(json.dumps(meta)))


def load_amplitude_matrix(path):
    with np.load(path, allow_pickle=False) as z:
        L = int(z["L"])
        s = z["s_samples"].copy()
        K = n_harmonics(L)
        entries = np.moveaxis(z["entries_flat"].reshape(K, K, len(s)), -1, 0)
        meta = json.loads(str(z["meta"]))
    w = NormWeights(meta["sigma1"], meta["sigma2"]) if "sigma1" in meta else None
    return AmplitudeMatrix(L, s, np.ascontiguousarray(entries)), w
