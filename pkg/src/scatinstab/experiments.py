"""Desk-scale experiments: forward runs, the pigeonhole collision demo, the
instability sweep, the stability diagnostic and net/packing counts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .amplitude import (AmplitudeMatrix, EnergyInterval, NormWeights, c3_constant,
                        compute_amplitude_matrix, decay_bound_check, interval_distance,
                        save_amplitude_matrix, stefanov_norm, weighted_entries)
from .nets import (AmplitudeNet, SmoothnessBudget, build_amplitude_net, build_packing,
                   EllipseDomain, net_count_table, packing_count_table, power_law_exponent,
                   quantize_to_net)
from .potential import (Potential, VoxelGrid, angular_perturbation, cm_norm_estimate,
                        linf_distance, make_bump)
from .solver import IncidentWave, check_contraction, far_field_check
from .sphere import harmonic_degrees

FLOOR = 1e-14
# entries of a difference matrix below this fraction of the operands' largest
# entry are rounding noise; the degree weights would otherwise amplify them
RELATIVE_NOISE = 1e-12
MAX_ENUMERATED_MEMBERS = 2 ** 12


@dataclass
class ExperimentConfig:
    grid_n: int = 16
    h: float = 0.2
    s1: float = 1.0
    s2: float = 1.5
    s_samples: int = 3
    sigma1: float = 0.0
    sigma2: float = 0.0
    L: int = 4
    m: int = 2
    beta: float = 60.0
    epsilon: float = 0.05
    epsilons: list = field(default_factory=lambda: [1e-4, 1e-5, 1e-6, 1e-7])
    degrees: list = field(default_factory=lambda: [2, 4, 6, 8])
    alpha: float | None = None
    delta: float | None = None
    deltas: list = field(default_factory=lambda: [1e-3, 1e-5, 1e-8, 1e-12, 1e-16, 1e-20])
    coupling_c: float = 1.0
    k: int | None = None
    seed: int = 0
    shell: list = field(default_factory=lambda: [0.05, 0.45])
    bump: dict | None = None
    far_field_radii: list = field(default_factory=lambda: [4.0, 8.0])
    safety: float = 2.0
    out: str = "out"

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def interval(self) -> EnergyInterval:
        return EnergyInterval.chebyshev(self.s1, self.s2, self.s_samples)

    def weights(self) -> NormWeights:
        return NormWeights(self.sigma1, self.sigma2)

    def grid(self) -> VoxelGrid:
        return VoxelGrid(self.grid_n)

    def effective_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return default_alpha(self.m, self.s1 == self.s2)


def default_alpha(m: int, fixed_energy: bool) -> float:
    """One unit above the admissibility threshold (2m, or 5m/3 at fixed energy)."""
    return (5.0 * m / 3.0 if fixed_energy else 2.0 * m) + 1.0


def instability_bound(epsilon: float, alpha: float, c: float = 1.0) -> float:
    return math.exp(-c * epsilon ** (-1.0 / alpha))


def coupled_delta(epsilon: float, alpha: float, c3: float, c: float = 1.0) -> float:
    """delta with 2 c3 delta = exp(-c eps^(-1/alpha))."""
    return instability_bound(epsilon, alpha, c) / (2.0 * c3)


@dataclass(frozen=True)
class StabilityModulus:
    delta_exponent: float

    def __post_init__(self):
        if not 0 < self.delta_exponent < 1:
            raise ValueError("exponent must lie in (0, 1)")

    def __call__(self, t: float) -> float:
        if not 0 < t < math.exp(-1.0):
            raise ValueError("modulus undefined outside (0, 1/e)")
        return (-math.log(t)) ** (-self.delta_exponent)


def sup_stefanov(A: AmplitudeMatrix, w: NormWeights) -> float:
    return max(stefanov_norm(A, s, w) for s in A.s_samples)


def denoised_difference(A: AmplitudeMatrix, B: AmplitudeMatrix) -> AmplitudeMatrix:
    """A - B with entries under the rounding-noise level of A and B set to zero."""
    D = (A - B).entries.copy()
    for k in range(D.shape[0]):
        level = RELATIVE_NOISE * max(np.abs(A.entries[k]).max(), np.abs(B.entries[k]).max())
        D[k][np.abs(D[k]) < level] = 0.0
    return AmplitudeMatrix(A.L, A.s_samples, D)


def format_value(x: float) -> str:
    return f"<={FLOOR:.0e}" if abs(x) < FLOOR else f"{x:.6e}"


# ---------------------------------------------------------------- output

def write_atomic(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def write_report(out_dir, name: str, manifest: dict, header=None, rows=None) -> None:
    if header is not None:
        write_atomic(os.path.join(out_dir, f"{name}.csv"), csv_text(header, rows))
    write_atomic(os.path.join(out_dir, f"{name}.json"),
                 json.dumps(manifest, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


# ---------------------------------------------------------------- forward

def config_potential(cfg: ExperimentConfig, grid: VoxelGrid) -> Potential:
    if cfg.bump is None:
        return Potential.zero(grid)
    b = cfg.bump
    return make_bump(grid, b.get("center", (0.0, 0.0, 0.0)), b.get("scale", 0.4),
                     b.get("amplitude", 0.5), b.get("m", 2))


@dataclass
class ForwardReport:
    stefanov: list
    decay_C: list
    decay_passed: bool
    far_field_relative: float | None
    contraction_q: float

    def as_dict(self):
        return asdict(self)


def cmd_forward(cfg: ExperimentConfig, write: bool = True) -> ForwardReport:
    grid = cfg.grid()
    v = config_potential(cfg, grid)
    q = check_contraction(v, cfg.h)
    I = cfg.interval()
    A = compute_amplitude_matrix(v, I.samples, cfg.L, cfg.h)
    w = cfg.weights()
    stef = [stefanov_norm(A, s, w) for s in A.s_samples]
    rho = 2.0 * max(v.support_radius, 1e-3)
    fits = [decay_bound_check(A, s, rho) for s in A.s_samples]
    ff = None
    if v.sup_norm > 0 and cfg.far_field_radii:
        rep = far_field_check(v, IncidentWave((0.0, 0.0, 1.0), float(I.samples[0]), cfg.h),
                              cfg.far_field_radii)
        ff = rep.relative_difference
    report = ForwardReport(stef, [f.C for f in fits], all(f.passed for f in fits), ff, q)
    if write:
        deg = harmonic_degrees(cfg.L)
        rows = []
        for k, s in enumerate(A.s_samples):
            for a in range(len(deg)):
                for b in range(len(deg)):
                    z = A.entries[k, a, b]
                    rows.append((f"{s:.12g}", a, b, f"{z.real:.16e}", f"{z.imag:.16e}"))
        write_report(cfg.out, "forward", {"config": asdict(cfg), "report": report.as_dict()},
                     ("s", "row", "col", "re", "im"), rows)
        save_amplitude_matrix(os.path.join(cfg.out, "forward_matrix.npz"), A, w)
    return report


# ---------------------------------------------------------------- nets

def calibrate_constants(mats, w_net: NormWeights, safety: float = 2.0):
    """(c2, c4): bound on |a| and on weighted |a| / ((2l+1)^(sigma1+sigma2) 2^-l)."""
    c2 = 0.0
    c4 = 0.0
    S = w_net.sigma1 + w_net.sigma2
    for A in mats:
        c2 = max(c2, float(np.abs(A.entries).max()))
        if np.any(np.abs(np.imag(A.s_samples)) > 0):
            continue
        deg = harmonic_degrees(A.L)
        top = np.maximum(deg[:, None], deg[None, :])
        env = (2 * top + 1.0) ** S * 2.0 ** (-top)
        c4 = max(c4, float((weighted_entries(A, w_net) / env[None]).max()))
    tiny = np.finfo(float).tiny
    return safety * max(c2, tiny), safety * max(c4, tiny)


def ellipse_samples(I: EnergyInterval, h: float, count: int = 4) -> np.ndarray:
    if I.is_fixed_energy:
        return np.array([I.s1 + 1j * h * math.sin(2 * math.pi * t / count) for t in range(count)])
    return EllipseDomain.for_strip(I.s1, I.s2, h).boundary(count)


# ---------------------------------------------------------------- pigeonhole

@dataclass
class PigeonholeReport:
    packing_size: int
    net_log_cardinality: float
    net_cardinality: int | None
    pair: tuple | None
    collision: bool
    net_distance: float
    linf_distance: float
    sup_stefanov_distance: float
    delta: float
    coupled_delta: float
    c3: float
    inequalities: dict
    passed: bool

    def as_dict(self):
        return asdict(self)


def cmd_pigeonhole(cfg: ExperimentConfig, write: bool = True) -> PigeonholeReport:
    grid = cfg.grid()
    I = cfg.interval()
    w = cfg.weights()
    w_net = w.shifted(3.0)
    budget = SmoothnessBudget(cfg.m, cfg.beta, cfg.epsilon)
    packing = build_packing(budget, cfg.k)
    if packing.member_count > MAX_ENUMERATED_MEMBERS:
        raise ValueError(f"{packing.member_count} members exceed the enumeration limit")
    v0 = config_potential(cfg, grid)
    members = [v0 + packing.member(grid, i) for i in range(packing.member_count)]
    for v in members:
        check_contraction(v, cfg.h)
    mats = [compute_amplitude_matrix(v, I.samples, cfg.L, cfg.h) for v in members]
    extra = [compute_amplitude_matrix(members[i], ellipse_samples(I, cfg.h), cfg.L, cfg.h)
             for i in (0, packing.member_count - 1)]
    c2, c4 = calibrate_constants(mats + extra, w_net, cfg.safety)
    c3 = c3_constant(I)
    alpha = cfg.effective_alpha()
    bound = instability_bound(cfg.epsilon, alpha, cfg.coupling_c)
    d_coupled = bound / (2.0 * c3)
    delta = cfg.delta if cfg.delta is not None else d_coupled
    net = build_amplitude_net(delta, w_net, I, cfg.h, c2, c4)
    cells = {}
    pair = None
    for i, A in enumerate(mats):
        key = quantize_to_net(A, net).key
        if key in cells:
            pair = (cells[key], i)
            break
        cells[key] = i
    collision = pair is not None
    if not collision:
        best = math.inf
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                d = interval_distance(mats[i], mats[j], w_net)
                if d < best:
                    best, pair = d, (i, j)
    i, j = pair
    net_dist = interval_distance(mats[i], mats[j], w_net)
    stef = sup_stefanov(mats[i] - mats[j], w)
    linf = linf_distance(members[i], members[j])
    dev = [linf_distance(members[t], v0) for t in (i, j)]
    cm = [cm_norm_estimate(members[t] - v0, cfg.m) for t in (i, j)]
    ineq = {
        "amplitude_close": stef <= bound,
        "potentials_apart": linf >= cfg.epsilon * (1 - 1e-12),
        "linf_budget": max(dev) <= cfg.epsilon * (1 + 1e-12),
        "cm_budget": max(cm) <= cfg.beta,
        "norm_chain": stef <= c3 * net_dist + FLOOR,
    }
    passed = net_dist <= 2.0 * delta and all(ineq.values())
    report = PigeonholeReport(packing.member_count, net.log_cardinality, net.cardinality,
                              (int(i), int(j)), collision, net_dist, linf, stef, delta,
                              d_coupled, c3, ineq, passed)
    if write:
        manifest = {"config": asdict(cfg), "report": report.as_dict(),
                    "net": net.manifest(), "alpha": alpha, "bound": bound,
                    "member_signs": [packing.signs(i), packing.signs(j)]}
        write_report(cfg.out, "pigeonhole", manifest)
    return report


def net_coverage(mats, net: AmplitudeNet):
    """Round-trip distances of each matrix to its quantized net point."""
    return [quantize_to_net(A, net).distance for A in mats]


# ---------------------------------------------------------------- sweep

@dataclass
class SweepRow:
    parameter: float
    epsilon: float
    distance: float
    raw_distance: float
    linf: float
    cm: float
    seconds: float

    @property
    def floor_limited(self) -> bool:
        return self.distance < FLOOR


def sweep_pair(v0: Potential, wpert: Potential, I: EnergyInterval, L: int, h: float,
               w: NormWeights):
    v1, v2 = v0 + wpert, v0 - wpert
    check_contraction(v1, h)
    check_contraction(v2, h)
    A1 = compute_amplitude_matrix(v1, I.samples, L, h)
    A2 = compute_amplitude_matrix(v2, I.samples, L, h)
    D = denoised_difference(A1, A2)
    return (sup_stefanov(D, w), float(np.abs(D.entries).max()), linf_distance(v1, v2))


def degree_for_budget(grid: VoxelGrid, epsilon: float, m: int, beta: float,
                      shell, max_degree: int) -> int:
    """Largest angular degree whose perturbation keeps the C^m estimate within beta."""
    best = 0
    for n in range(1, max_degree + 1):
        if cm_norm_estimate(angular_perturbation(grid, n, epsilon, *shell), m) <= beta:
            best = n
    if best == 0:
        raise ValueError("no angular degree fits the smoothness budget")
    return best


def cmd_instability_sweep(cfg: ExperimentConfig, mode: str = "degree",
                          write: bool = True) -> list:
    grid = cfg.grid()
    I = cfg.interval()
    w = cfg.weights()
    v0 = config_potential(cfg, grid)
    rows = []
    if mode == "degree":
        params = [(float(n), int(n), cfg.epsilon) for n in cfg.degrees]
    elif mode == "epsilon":
        params = [(float(e), degree_for_budget(grid, e, cfg.m, cfg.beta, cfg.shell, cfg.L), e)
                  for e in cfg.epsilons]
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    for param, n, eps in params:
        t0 = time.perf_counter()
        if eps == 0:
            wpert = Potential.zero(grid)
        else:
            wpert = angular_perturbation(grid, n, eps, *cfg.shell)
        dist, raw, linf = sweep_pair(v0, wpert, I, cfg.L, cfg.h, w)
        cm = cm_norm_estimate(wpert, min(cfg.m, 4))
        rows.append(SweepRow(param, eps, dist, raw, linf, cm, time.perf_counter() - t0))
    if write:
        header = ("parameter", "epsilon", "sup_stefanov_distance", "max_coefficient_difference",
                  "linf_distance", "cm_estimate", "seconds")
        body = [(r.parameter, r.epsilon, format_value(r.distance), format_value(r.raw_distance),
                 f"{r.linf:.6e}", f"{r.cm:.6e}", f"{r.seconds:.2f}") for r in rows]
        write_report(cfg.out, f"sweep_{mode}", {"config": asdict(cfg), "mode": mode,
                                                "super_geometric": super_geometric(
                                                    [r.distance for r in rows])},
                     header, body)
    return rows


def super_geometric(distances, floor: float = FLOOR) -> bool:
    """Strictly decreasing with decreasing successive ratios, up to the floor."""
    d = [x for x in distances if x >= floor]
    if len(d) < len(distances):
        # the first floor-limited value ends the checked sequence
        d = distances[:len(d)]
    if any(b >= a for a, b in zip(d, d[1:])):
        return False
    ratios = [b / a for a, b in zip(d, d[1:])]
    return all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))


# ---------------------------------------------------------------- diagnostics

STABILITY_WEIGHTS = NormWeights(1.5, -0.5)


def cmd_stability_diagnostic(linf: float, amplitude_distance: float,
                             modulus: StabilityModulus) -> float:
    """||v1 - v2|| / phi(t): an empirical lower estimate of the stability constant."""
    if amplitude_distance <= 0:
        raise ValueError("modulus undefined at zero amplitude distance")
    return linf / modulus(amplitude_distance)


def stability_pair(cfg: ExperimentConfig, v1: Potential, v2: Potential):
    I = cfg.interval()
    A1 = compute_amplitude_matrix(v1, I.samples, cfg.L, cfg.h)
    A2 = compute_amplitude_matrix(v2, I.samples, cfg.L, cfg.h)
    return linf_distance(v1, v2), sup_stefanov(denoised_difference(A1, A2), STABILITY_WEIGHTS)


# ---------------------------------------------------------------- counting

def cmd_net_count(cfg: ExperimentConfig, c2: float = 1.0, c4: float = 1.0,
                  write: bool = True) -> dict:
    pack = packing_count_table(cfg.epsilons, cfg.beta, cfg.m)
    x = [cfg.beta / r[0] for r in pack]
    pack_exp = power_law_exponent(x, [r[2] for r in pack])
    w = cfg.weights().shifted(3.0)
    out = {"packing": pack, "packing_exponent": pack_exp,
           "packing_exponent_expected": 3.0 / cfg.m}
    for label, I in (("interval", cfg.interval()),
                     ("fixed_energy", EnergyInterval(cfg.s1, cfg.s1, (cfg.s1,)))):
        tab = net_count_table(cfg.deltas, w, I, cfg.h, c2, c4)
        out[label] = tab
        out[f"{label}_degree"] = power_law_exponent([math.log(1 / r[0]) for r in tab],
                                                    [r[2] for r in tab])
    if write:
        rows = [("packing", e, k, f"{lg:.6e}") for e, k, lg in pack]
        rows += [(lab, d, l, f"{lg:.6e}") for lab in ("interval", "fixed_energy")
                 for d, l, lg in out[lab]]
        write_report(cfg.out, "net_count", {"config": asdict(cfg), "fits": {
            k: out[k] for k in ("packing_exponent", "packing_exponent_expected",
                                "interval_degree", "fixed_energy_degree")}},
                     ("table", "parameter", "size_index", "log_count"), rows)
    return out
