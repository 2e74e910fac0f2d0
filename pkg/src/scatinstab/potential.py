"""Compactly supported potentials on a voxel grid over [-1, 1]^3.

Grid points sit at ``-1 + i*h`` with ``h = 2/n`` (the origin is a grid point
for even ``n``).  All norms are grid proxies: sup norms are voxel maxima and
derivatives are finite differences unless the potential carries an analytic
bump description.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from . import kernels

SUPPORT_RADIUS_LIMIT = 0.5
_GEOM_TOL = 1e-12

# max over |alpha| = k of sup |d^alpha phi|, phi(x) = exp(1 - 1/(1 - |x|^2));
# produced by tools/tabulate_mollifier.py
MOLLIFIER_DERIVATIVE_SUP = (
    1.0,
    2.1703570857103394,
    21.06588211892647,
    506.68751894716723,
    22604.932867178522,
    1621068.5129024568,
    221471342.0006686,
    39546260573.19565,
    8972779662837.93,
)
MAX_ANALYTIC_ORDER = len(MOLLIFIER_DERIVATIVE_SUP) - 1
MAX_FD_ORDER = 4


def mollifier_constant(m: int) -> float:
    """K_phi(m): bound on every derivative of order <= m of the unit mollifier."""
    if not 0 <= m <= MAX_ANALYTIC_ORDER:
        raise ValueError(f"mollifier constants tabulated for m <= {MAX_ANALYTIC_ORDER}")
    return max(MOLLIFIER_DERIVATIVE_SUP[: m + 1])


def mollifier(r2):
    """exp(1 - 1/(1 - r^2)) for r^2 < 1, else 0; peak value 1 at the origin."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


@dataclass(frozen=True)
class VoxelGrid:
    n: int

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")

    @property
    def cell_size(self) -> float:
        return 2.0 / self.n

    @property
    def cell_volume(self) -> float:
        return self.cell_size ** 3

    @cached_property
    def coords(self) -> np.ndarray:
        return -1.0 + self.cell_size * np.arange(self.n)

    @cached_property
    def points(self) -> np.ndarray:
        c = self.coords
        X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=-1)


@dataclass(frozen=True)
class Bump:
    center: tuple
    scale: float
    amplitude: float
    m: int


@dataclass(frozen=True, eq=False)
class Potential:
    grid: VoxelGrid
    values: np.ndarray
    support_radius: float
    analytic_spec: tuple | None = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,) * 3:
            raise ValueError("values do not match the grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential values must be finite")
        if self.support_radius > 1.0:
            raise ValueError("support radius must be <= 1")
        outside = self.grid.radii > self.support_radius + _GEOM_TOL
        if np.any(vals[outside] != 0.0):
            raise ValueError("potential has values outside its support radius")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, grid: VoxelGrid) -> "Potential":
        return cls(grid, np.zeros((grid.n,) * 3), 0.0, ())

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def _combine(self, other: "Potential", sign: float) -> "Potential":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        spec = None
        if self.analytic_spec is not None and other.analytic_spec is not None:
            flipped = tuple(Bump(b.center, b.scale, sign * b.amplitude, b.m)
                            for b in other.analytic_spec)
            spec = merge_bumps(self.analytic_spec + flipped)
        return Potential(self.grid, self.values + sign * other.values,
                         max(self.support_radius, other.support_radius), spec)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def scaled(self, factor: float) -> "Potential":
        spec = None
        if self.analytic_spec is not None:
            spec = tuple(Bump(b.center, b.scale, factor * b.amplitude, b.m)
                         for b in self.analytic_spec)
        return Potential(self.grid, factor * self.values, self.support_radius, spec)

    def __neg__(self):
        return self.scaled(-1.0)

    def support_mask(self) -> np.ndarray:
        return self.values != 0.0


def merge_bumps(bumps) -> tuple:
    """Add up bumps sharing center, scale and order; drop the ones that cancel."""
    total = {}
    for b in bumps:
        key = (b.center, b.scale, b.m)
        total[key] = total.get(key, 0.0) + b.amplitude
    return tuple(Bump(c, r, a, m) for (c, r, m), a in total.items() if a != 0.0)


def bumps_disjoint(bumps) -> bool:
    for b1, b2 in combinations(bumps, 2):
        if np.linalg.norm(np.subtract(b1.center, b2.center)) < b1.scale + b2.scale - _GEOM_TOL:
            return False
    return True


def _check_inside(center, scale):
    if scale <= 0:
        raise ValueError("bump scale must be positive")
    if np.linalg.norm(center) + scale > SUPPORT_RADIUS_LIMIT + _GEOM_TOL:
        raise ValueError("bump leaves B(0, 1/2)")


def make_bump(grid: VoxelGrid, center, scale: float, amplitude: float,
              m: int = 2) -> Potential:
    """``amplitude * phi((x - center)/scale)`` sampled on ``grid``."""
    center = np.asarray(center, dtype=float)
    _check_inside(center, scale)
    d = (grid.points - center) / scale
    vals = amplitude * mollifier(np.einsum("...k,...k->...", d, d))
    radius = float(np.linalg.norm(center) + scale)
    bump = Bump(tuple(float(c) for c in center), float(scale), float(amplitude), int(m))
    return Potential(grid, vals, min(radius, SUPPORT_RADIUS_LIMIT), (bump,))


def assemble_from_signs(grid: VoxelGrid, layout, signs, epsilon: float,
                        m: int = 2) -> Potential:
    """Sum of ``signs[i] * epsilon`` bumps over a disjoint ``layout`` of (center, scale)."""
    if len(layout) != len(signs):
        raise ValueError("layout and signs differ in length")
    for (c1, r1), (c2, r2) in combinations(layout, 2):
        if np.linalg.norm(np.subtract(c1, c2)) < r1 + r2 - _GEOM_TOL:
            raise ValueError("bumps in layout overlap")
    total = Potential.zero(grid)
    for (c, r), sg in zip(layout, signs):
        if sg not in (-1, 1):
            raise ValueError("signs must be -1 or +1")
        total = total + make_bump(grid, c, r, sg * epsilon, m)
    return total


def linf_distance(v1: Potential, v2: Potential) -> float:
    """sup |v1 - v2|; exact for disjoint bump sums (the mollifier peaks at 1), else the voxel max."""
    if v1.grid != v2.grid:
        raise ValueError("grid mismatch")
    diff = v1 - v2
    if diff.analytic_spec is not None and bumps_disjoint(diff.analytic_spec):
        return max((abs(b.amplitude) for b in diff.analytic_spec), default=0.0)
    return float(np.abs(diff.values).max())


def _central_diff(a: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    # zero padding is exact because supports stay well inside the box
    out = a
    for _ in range(order // 2):
        p = np.pad(out, [(1, 1) if k == axis else (0, 0) for k in range(3)])
        sl = [slice(None)] * 3
        sl[axis] = slice(2, None)
        up = p[tuple(sl)]
        sl[axis] = slice(None, -2)
        down = p[tuple(sl)]
        out = (up - 2.0 * out + down) / (h * h)
    if order % 2:
        p = np.pad(out, [(1, 1) if k == axis else (0, 0) for k in range(3)])
        sl = [slice(None)] * 3
        sl[axis] = slice(2, None)
        up = p[tuple(sl)]
        sl[axis] = slice(None, -2)
        down = p[tuple(sl)]
        out = (up - down) / (2.0 * h)
    return out


def finite_difference_cm(v: Potential, m: int) -> float:
    """max over |alpha| <= m of the voxel max of a central-difference d^alpha v."""
    if m > MAX_FD_ORDER:
        raise ValueError(f"finite-difference C^m estimate supports m <= {MAX_FD_ORDER}")
    h = v.grid.cell_size
    best = float(np.abs(v.values).max())
    for k in range(1, m + 1):
        for a in range(k + 1):
            for b in range(k - a + 1):
                d = v.values
                for axis, order in enumerate((a, b, k - a - b)):
                    if order:
                        d = _central_diff(d, axis, order, h)
                best = max(best, float(np.abs(d).max()))
    return best


def cm_norm_estimate(v: Potential, m: int) -> float:
    """Upper estimate of ||v||_{C^m}.

    Bump potentials use ``|amplitude| * scale^-m * K_phi(m)``: the max over
    bumps when supports are disjoint, the sum otherwise.  Other potentials
    fall back to finite differences, available for ``m <= 4``.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return v.sup_norm
    if v.analytic_spec is not None and m <= MAX_ANALYTIC_ORDER:
        if not v.analytic_spec:
            return 0.0
        k = mollifier_constant(m)
        terms = [abs(b.amplitude) * b.scale ** (-m) * k for b in v.analytic_spec]
        return max(terms) if bumps_disjoint(v.analytic_spec) else sum(terms)
    if m > MAX_FD_ORDER:
        raise ValueError(f"C^{m} estimate needs an analytic bump description")
    return finite_difference_cm(v, m)


def support_points(v: Potential):
    """Coordinates and values of the voxels where ``v`` is nonzero."""
    mask = v.support_mask()
    return v.grid.points[mask], v.values[mask]


def potential_fourier(v: Potential, p) -> complex | np.ndarray:
    """Voxel quadrature of (2 pi)^-3 int e^{i p.x} v(x) dx; accepts one or many ``p``."""
    p = np.asarray(p)
    single = p.ndim == 1
    pts, vals = support_points(v)
    if len(vals) == 0:
        out = np.zeros(len(np.atleast_2d(p)), dtype=complex)
    else:
        q = vals.astype(complex) * (v.grid.cell_volume / (2.0 * np.pi) ** 3)
        out = kernels.phase_sum(pts, q, np.atleast_2d(p))
    return complex(out[0]) if single else out


def cube_layout(k: int):
    """k^3 disjoint balls on a cubic lattice inscribed in B(0, 1/2)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    half = SUPPORT_RADIUS_LIMIT / np.sqrt(3.0)
    scale = half / k
    centers = -half + scale * (2 * np.arange(k) + 1)
    # shrink by a hair so that touching balls never count as overlapping
    scale *= 1.0 - 1e-9
    return [((float(x), float(y), float(z)), scale)
            for x in centers for y in centers for z in centers]


def angular_perturbation(grid: VoxelGrid, degree: int, amplitude: float,
                         r_inner: float = 0.05, r_outer: float = 0.45,
                         order: int = 1) -> Potential:
    """``g(|x|) Y_degree^order(x/|x|)`` rescaled to sup norm ``amplitude``.

    ``g`` is the mollifier stretched over the shell ``r_inner < |x| < r_outer``.
    """
    from .sphere import real_harmonics

    if not 0 < r_inner < r_outer <= SUPPORT_RADIUS_LIMIT:
        raise ValueError("shell must sit inside (0, 1/2)")
    r = grid.radii
    mid, half = 0.5 * (r_inner + r_outer), 0.5 * (r_outer - r_inner)
    g = mollifier(((r - mid) / half) ** 2)
    vals = np.zeros_like(r)
    mask = g > 0
    dirs = grid.points[mask] / r[mask, None]
    flat = degree * degree + order - 1
    vals[mask] = g[mask] * real_harmonics(degree, dirs)[:, flat]
    peak = np.abs(vals).max()
    if peak > 0:
        vals *= amplitude / peak
    return Potential(grid, vals, r_outer)


def save_potential(path, v: Potential) -> None:
    spec = None if v.analytic_spec is None else [
        {"center": list(b.center), "scale": b.scale, "amplitude": b.amplitude, "m": b.m}
        for b in v.analytic_spec]
    with open(path, "wb") as fh:
        np.savez(fh, n=np.int64(v.grid.n), support_radius=np.float64(v.support_radius),
                 values=v.values, analytic_spec=np.array(json.dumps(spec)))


def load_potential(path) -> Potential:
    with np.load(path, allow_pickle=False) as z:
        spec = json.loads(str(z["analytic_spec"]))
        bumps = None if spec is None else tuple(
            Bump(tuple(b["center"]), b["scale"], b["amplitude"], b["m"]) for b in spec)
        return Potential(VoxelGrid(int(z["n"])), z["values"].copy(),
                         float(z["support_radius"]), bumps)
