"""Lippmann-Schwinger solver for mu+ by successive approximations.

The integral operator is discretized with the midpoint rule on the voxel grid.
The singular voxel uses the exact integral of the kernel over a ball of equal
volume.  The operator is a convolution, so it is applied with zero-padded FFTs;
``apply_operator_direct`` keeps the O(N^2) sum as an independent check.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.fft as sfft

from . import kernels
from .potential import Potential, VoxelGrid, support_points

FOUR_PI = 4.0 * np.pi
TWO_PI_CUBED = (2.0 * np.pi) ** 3
BALL_FACTOR = (3.0 / FOUR_PI) ** (1.0 / 3.0)
DEFAULT_STRIP = 0.2
_BATCH_BYTES = 64 << 20


def fft_workers() -> int:
    env = os.environ.get("SCATINSTAB_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class ContractionError(ValueError):
    """c1(h) * ||v||_inf exceeds 1/2; the Born series is not guaranteed to converge."""

    def __init__(self, q: float):
        super().__init__(f"contraction condition violated: q = c1*||v|| = {q:.6g} > 1/2")
        self.q = q


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(last residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class IncidentWave:
    theta: tuple
    s: complex
    h: float = DEFAULT_STRIP

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        if th.shape != (3,) or abs(np.linalg.norm(th) - 1.0) > 1e-12:
            raise ValueError("theta must be a unit 3-vector")
        if self.h < 0:
            raise ValueError("strip half-width must be >= 0")
        if abs(complex(self.s).imag) > self.h + 1e-15:
            raise ValueError(f"|Im s| = {abs(complex(self.s).imag)} exceeds strip h = {self.h}")
        object.__setattr__(self, "theta", tuple(float(t) for t in th))
        object.__setattr__(self, "s", complex(self.s))

    @property
    def k(self) -> np.ndarray:
        return self.s * np.asarray(self.theta)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 500
    singular_cell_rule: str = "analytic_ball"

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("need tol > 0 and max_iter >= 1")
        if self.singular_cell_rule not in ("analytic_ball", "zero_skip"):
            raise ValueError(f"unknown singular cell rule {self.singular_cell_rule!r}")


@dataclass(frozen=True, eq=False)
class MuField:
    grid: VoxelGrid
    values: np.ndarray
    wave: IncidentWave
    residual: float
    iterations: int
    residual_history: tuple = field(default=())

    def residual_ratios(self) -> np.ndarray:
        r = np.asarray(self.residual_history)
        r = r[r > 0]
        return r[1:] / r[:-1]


def green_kernel(r, s: complex) -> complex:
    r = np.asarray(r, dtype=float)
    d = float(np.linalg.norm(r))
    if d == 0.0:
        raise ValueError("Green's function is singular at r = 0")
    return complex(np.exp(1j * s * d) / (FOUR_PI * d))


def _series(z: complex, coeff) -> complex:
    return sum(coeff(k) * z ** k for k in range(40))


def _expm1_minus_z_over_z2(z: complex) -> complex:
    # (e^z - 1 - z) / z^2
    if abs(z) < 0.5:
        return _series(z, lambda k: 1.0 / factorial(k + 2))
    return (np.expm1(z) - z) / (z * z)


def _ramp_integral(z: complex) -> complex:
    # int_0^1 t e^{z t} dt = (e^z (z - 1) + 1) / z^2
    if abs(z) < 0.5:
        return _series(z, lambda k: 1.0 / (factorial(k) * (k + 2)))
    return (np.exp(z) * (z - 1.0) + 1.0) / (z * z)


def ball_radius(cell_size: float) -> float:
    return BALL_FACTOR * cell_size


def singular_cell_value(s: complex, cell_size: float,
                        rule: str = "analytic_ball") -> complex:
    """Integral of G(r) e^{-i s theta.r} over the ball of one voxel's volume.

    The angular average of the plane-wave factor is sin(sr)/(sr), so the result
    does not depend on theta.
    """
    if rule == "zero_skip":
        return 0j
    a = ball_radius(cell_size)
    return complex(a * a * _expm1_minus_z_over_z2(2j * complex(s) * a))


def _offset_radii(shape) -> np.ndarray:
    axes = []
    for n in shape:
        i = np.arange(2 * n)
        axes.append(np.where(i < n, i, i - 2 * n).astype(float))
    I, J, K = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(I * I + J * J + K * K)
    for ax, n in enumerate(shape):
        sl = [slice(None)] * 3
        sl[ax] = n
        r[tuple(sl)] = np.inf  # wrap-around slot, never reached by a linear convolution
    return r


@lru_cache(maxsize=16)
def _kernel_hat(shape: tuple, s: complex, cell_size: float, rule: str) -> np.ndarray:
    r = _offset_radii(shape) * cell_size
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.exp(1j * s * r) / (FOUR_PI * r)
    g[~np.isfinite(r)] = 0.0
    g *= cell_size ** 3
    g[0, 0, 0] = singular_cell_value(s, cell_size, rule)
    return sfft.fftn(g, workers=fft_workers())


def _convolve(u: np.ndarray, khat: np.ndarray) -> np.ndarray:
    """Linear convolution of a batch ``u[b, i, j, k]`` with a padded kernel."""
    shape = u.shape[1:]
    fshape = khat.shape
    w = fft_workers()
    U = sfft.fftn(u, s=fshape, axes=(1, 2, 3), workers=w)
    U *= khat
    out = sfft.ifftn(U, axes=(1, 2, 3), workers=w, overwrite_x=True)
    return out[:, :shape[0], :shape[1], :shape[2]]


@lru_cache(maxsize=32)
def c1_constant(h: float, n: int = 32) -> float:
    """sup over grid points x in B(0,1) of the voxel quadrature of
    int_{B(0,1)} e^{2h|x-y|} / (4 pi |x-y|) dy."""
    if h < 0:
        raise ValueError("h must be >= 0")
    grid = VoxelGrid(n)
    inside = grid.radii < 1.0
    cell = grid.cell_size
    r = _offset_radii((n, n, n)) * cell
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.exp(2.0 * h * r) / (FOUR_PI * r)
    g[~np.isfinite(r)] = 0.0
    a = ball_radius(cell)
    g *= cell ** 3
    g[0, 0, 0] = (a * a * _ramp_integral(2.0 * h * a)).real
    conv = sfft.irfftn(sfft.rfftn(inside.astype(float), s=g.shape)
                       * sfft.rfftn(g), s=g.shape)[:n, :n, :n]
    return float(conv[inside].max())


def check_contraction(v: Potential, h: float) -> float:
    """q = c1(h) * ||v||_inf on the potential's own grid."""
    norm = v.sup_norm
    if norm == 0.0:
        return 0.0
    return c1_constant(float(h), v.grid.n) * norm


def _support_box(v: Potential):
    idx = np.nonzero(v.values)
    lo = [int(i.min()) for i in idx]
    hi = [int(i.max()) + 1 for i in idx]
    return tuple(slice(a, b) for a, b in zip(lo, hi))


def _batch_size(shape) -> int:
    per = 16 * 8 * int(np.prod(shape)) * 3
    return max(1, _BATCH_BYTES // per)


def _iterate_box(v: Potential, thetas: np.ndarray, s: complex, cfg: SolverConfig):
    """Successive approximations restricted to the bounding box of supp v.

    Returns (box slices, mu on the box, residual histories).  mu on supp v
    only depends on mu on supp v, so the box is enough for the fixed point.
    """
    box = _support_box(v)
    vb = v.values[box]
    pts = v.grid.points[box]
    shape = vb.shape
    khat = _kernel_hat(shape, complex(s), v.grid.cell_size, cfg.singular_cell_rule)
    mus = np.empty((len(thetas),) + shape, dtype=complex)
    histories = []
    bs = _batch_size(shape)
    for b0 in range(0, len(thetas), bs):
        th = thetas[b0:b0 + bs]
        phase = np.exp(1j * s * np.einsum("bk,ijlk->bijl", th, pts))
        src = vb[None] * phase
        sink = 1.0 / phase
        mu = np.ones((len(th),) + shape, dtype=complex)
        hist = [[] for _ in th]
        for it in range(cfg.max_iter):
            new = 1.0 - sink * _convolve(src * mu, khat)
            diff = np.abs(new - mu).reshape(len(th), -1).max(axis=1)
            mu = new
            for hb, d in zip(hist, diff):
                hb.append(float(d))
            if diff.max() <= cfg.tol:
                break
        else:
            raise ConvergenceError(float(diff.max()), cfg.max_iter)
        mus[b0:b0 + bs] = mu
        histories.extend(hist)
    return box, mus, histories


def _trim_history(hist, tol):
    out = []
    for d in hist:
        out.append(d)
        if d <= tol:
            break
    return tuple(out)


def solve_mu(v: Potential, wave: IncidentWave, cfg: SolverConfig = SolverConfig()) -> MuField:
    """Fixed point of the discretized Lippmann-Schwinger equation on the whole grid."""
    q = check_contraction(v, wave.h)
    if q > 0.5:
        raise ContractionError(q)
    grid = v.grid
    if v.sup_norm == 0.0:
        return MuField(grid, np.ones((grid.n,) * 3, dtype=complex), wave, 0.0, 1, (0.0,))
    theta = np.asarray(wave.theta)[None, :]
    box, mus, hist = _iterate_box(v, theta, wave.s, cfg)
    # extend from the box to every grid point with one more application
    u = np.zeros((1,) + (grid.n,) * 3, dtype=complex)
    phase = np.exp(1j * wave.s * grid.points @ theta[0])
    u[(0,) + box] = v.values[box] * phase[box] * mus[0]
    khat = _kernel_hat((grid.n,) * 3, wave.s, grid.cell_size, cfg.singular_cell_rule)
    mu_full = 1.0 - _convolve(u, khat)[0] / phase
    h = _trim_history(hist[0], cfg.tol)
    return MuField(grid, mu_full, wave, h[-1], len(h), h)


def solve_mu_support(v: Potential, thetas, s: complex, h: float = DEFAULT_STRIP,
                     cfg: SolverConfig = SolverConfig()):
    """Batched solve over incident directions; mu on the support voxels only.

    Returns (support points, support values, mu of shape (n_theta, n_support)).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if abs(complex(s).imag) > h + 1e-15:
        raise ValueError(f"|Im s| exceeds strip h = {h}")
    q = check_contraction(v, h)
    if q > 0.5:
        raise ContractionError(q)
    pts, vals = support_points(v)
    if len(vals) == 0:
        return pts, vals, np.ones((len(thetas), 0), dtype=complex)
    box, mus, _ = _iterate_box(v, thetas, complex(s), cfg)
    mask = v.support_mask()[box]
    return pts, vals, mus[:, mask]


def apply_operator_fft(v: Potential, wave: IncidentWave, mu: np.ndarray,
                       rule: str = "analytic_ball") -> np.ndarray:
    """(K mu)(x) = sum_y G(x-y) e^{-is theta.(x-y)} v(y) mu(y) h^3 on the full grid."""
    grid = v.grid
    phase = np.exp(1j * wave.s * grid.points @ np.asarray(wave.theta))
    khat = _kernel_hat((grid.n,) * 3, wave.s, grid.cell_size, rule)
    return _convolve((v.values * phase * mu)[None], khat)[0] / phase


def apply_operator_direct(v: Potential, wave: IncidentWave, mu: np.ndarray,
                          rule: str = "analytic_ball") -> np.ndarray:
    """Same operator as ``apply_operator_fft`` by the O(N^2) direct sum."""
    grid = v.grid
    theta = np.asarray(wave.theta)
    mask = v.support_mask()
    src = grid.points[mask]
    q = v.values[mask] * np.exp(1j * wave.s * src @ theta) * mu[mask] * grid.cell_volume
    tgt = grid.points.reshape(-1, 3)
    # q already carries h^3; the singular term is a whole-cell integral
    self_val = singular_cell_value(wave.s, grid.cell_size, rule) / grid.cell_volume
    out = kernels.green_sum(tgt, src, q[None], wave.s, self_val)[0]
    return (out * np.exp(-1j * wave.s * tgt @ theta)).reshape((grid.n,) * 3)


def scattering_amplitude(v: Potential, mu: MuField, omega) -> complex:
    """(2 pi)^-3 sum_x e^{i s (theta - omega).x} v(x) mu(x) h^3."""
    if mu.grid != v.grid:
        raise ValueError("grid mismatch")
    omega = np.asarray(omega, dtype=float)
    pts, vals = support_points(v)
    if len(vals) == 0:
        return 0j
    q = vals * mu.values[v.support_mask()] * (v.grid.cell_volume / TWO_PI_CUBED)
    p = mu.wave.s * (np.asarray(mu.wave.theta) - omega)
    return complex(kernels.phase_sum(pts, q, p[None])[0])


def amplitude_on_nodes(v: Potential, s: complex, thetas, omegas, h: float = DEFAULT_STRIP,
                       cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """f(theta_i, omega_k, s) for all pairs; shape (n_theta, n_omega)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    omegas = np.atleast_2d(np.asarray(omegas, dtype=float))
    pts, vals, mu = solve_mu_support(v, thetas, s, h, cfg)
    if len(vals) == 0:
        return np.zeros((len(thetas), len(omegas)), dtype=complex)
    scale = v.grid.cell_volume / TWO_PI_CUBED
    src = mu * vals[None] * np.exp(1j * s * thetas @ pts.T) * scale
    return src @ np.exp(-1j * s * pts @ omegas.T)


@dataclass(frozen=True)
class FarFieldReport:
    radii: tuple
    discrepancies: tuple
    extracted: np.ndarray
    formula: np.ndarray

    @property
    def discrepancy(self) -> float:
        """Discrepancy at the largest radius."""
        return self.discrepancies[-1]

    @property
    def relative_difference(self) -> float:
        return float(np.abs(self.extracted - self.formula).max() / np.abs(self.formula).max())


def far_field_check(v: Potential, wave: IncidentWave, radius_list, directions=None,
                    cfg: SolverConfig = SolverConfig()) -> FarFieldReport:
    """Compare psi+ at finite radius with the asymptotic form built from f.

    For each radius R returns max over ``directions`` of
    | R (psi+ - e^{ik.x}) + 2 pi^2 e^{isR} f(theta, omega, s) |.
    """
    if abs(wave.s.imag) > 0:
        raise ValueError("far-field check needs real s")
    radii = sorted(float(r) for r in radius_list)
    if radii[0] <= v.support_radius:
        raise ValueError("radius inside the support of v")
    if directions is None:
        from .sphere import fibonacci_directions
        directions = fibonacci_directions(32)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    s = wave.s
    theta = np.asarray(wave.theta)
    pts, vals, mu = solve_mu_support(v, theta, s, wave.h, cfg)
    if len(vals) == 0:
        zeros = np.zeros(len(directions), dtype=complex)
        return FarFieldReport(tuple(radii), tuple(0.0 for _ in radii), zeros, zeros)
    q = vals * np.exp(1j * s * pts @ theta) * mu[0] * v.grid.cell_volume
    f = (q * np.exp(-1j * s * pts @ directions.T).T).sum(axis=1) / TWO_PI_CUBED
    disc, extracted = [], None
    for R in radii:
        x = R * directions
        scattered = -kernels.green_sum(x, pts, q[None], s)[0]
        disc.append(float(np.abs(R * scattered + 2 * np.pi ** 2 * np.exp(1j * s * R) * f).max()))
        extracted = -R * scattered * np.exp(-1j * s * R) / (2 * np.pi ** 2)
    return FarFieldReport(tuple(radii), tuple(disc), extracted, f)
