"""Quadrature on the unit sphere and real orthonormal spherical harmonics.

Harmonics are indexed by ``(j, p)`` with ``1 <= p <= 2j + 1``.  The order
``m = p - j - 1`` runs over ``-j..j``; ``m < 0`` are the sine-type functions,
``m > 0`` the cosine-type ones.  No Condon-Shortley phase is applied.

Flat index of ``(j, p)`` inside a degree-``L`` block is ``j*j + p - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUADRATURE_DEGREE = 129
MAX_HARMONIC_DEGREE = 64


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Product Gauss-Legendre (polar) x trapezoid (azimuthal) rule on S^2."""

    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, order=True)
class HarmonicIndex:
    j: int
    p: int

    def __post_init__(self):
        if self.j < 0 or not 1 <= self.p <= 2 * self.j + 1:
            raise ValueError(f"invalid harmonic index (j={self.j}, p={self.p})")

    @property
    def m(self) -> int:
        return self.p - self.j - 1

    @property
    def flat(self) -> int:
        return self.j * self.j + self.p - 1


def n_harmonics(L: int) -> int:
    return (L + 1) ** 2


def harmonic_degrees(L: int) -> np.ndarray:
    """Degree ``j`` of every flat index up to degree ``L``."""
    return np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)


def build_quadrature(min_exactness_degree: int) -> SphereQuadrature:
    if min_exactness_degree < 0:
        raise ValueError("min_exactness_degree must be >= 0")
    if min_exactness_degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"degree exceeds table: {min_exactness_degree} > {MAX_QUADRATURE_DEGREE}")
    n_polar = min_exactness_degree // 2 + 1
    n_azim = min_exactness_degree + 1
    x, wx = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azim) / n_azim
    sin_t = np.sqrt(1.0 - x * x)
    nodes = np.empty((n_polar, n_azim, 3))
    nodes[..., 0] = sin_t[:, None] * np.cos(phi)[None, :]
    nodes[..., 1] = sin_t[:, None] * np.sin(phi)[None, :]
    nodes[..., 2] = x[:, None]
    nodes = nodes.reshape(-1, 3)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.repeat(wx * (2.0 * np.pi / n_azim), n_azim)
    exact = min(2 * n_polar - 1, n_azim - 1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(nodes, weights, exact)


def real_harmonics(L: int, dirs) -> np.ndarray:
    """All real orthonormal harmonics up to degree ``L`` at unit vectors ``dirs``.

    Returns an array of shape ``(len(dirs), (L+1)**2)`` in flat-index order.
    Normalized associated Legendre functions are built with the standard
    three-term recurrence, so no factorials appear.
    """
    if L < 0 or L > MAX_HARMONIC_DEGREE:
        raise ValueError(f"harmonic degree {L} outside 0..{MAX_HARMONIC_DEGREE}")
    d = np.atleast_2d(np.asarray(dirs, dtype=float))
    ct = np.clip(d[:, 2], -1.0, 1.0)
    st = np.hypot(d[:, 0], d[:, 1])
    phi = np.arctan2(d[:, 1], d[:, 0])
    npts = len(d)

    # q[l][m] = sqrt((2l+1)/(4pi) (l-m)!/(l+m)!) P_l^m(ct)
    q = np.zeros((L + 1, L + 1, npts))
    q[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, L + 1):
        q[m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * st * q[m - 1, m - 1]
    for m in range(0, L):
        q[m + 1, m] = np.sqrt(2 * m + 3.0) * ct * q[m, m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            q[l, m] = a * (ct * q[l - 1, m] - b * q[l - 2, m])

    out = np.empty((npts, n_harmonics(L)))
    root2 = np.sqrt(2.0)
    for l in range(L + 1):
        base = l * l + l
        out[:, base] = q[l, 0]
        for m in range(1, l + 1):
            out[:, base + m] = root2 * q[l, m] * np.cos(m * phi)
            out[:, base - m] = root2 * q[l, m] * np.sin(m * phi)
    return out


def eval_harmonic(idx: HarmonicIndex, direction) -> float:
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-10:
        raise ValueError("direction must be a unit vector")
    return float(real_harmonics(idx.j, d[None, :])[0, idx.flat])


def fibonacci_directions(n: int) -> np.ndarray:
    """Roughly uniform unit vectors, used for sampling checks."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([r * np.cos(golden * i), r * np.sin(golden * i), z], axis=1)
