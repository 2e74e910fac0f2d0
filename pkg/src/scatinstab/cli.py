"""Command-line driver.

Exit codes: 0 success, 2 precondition violation (contraction, support,
bad parameters), 3 experiment-level failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .experiments import (ExperimentConfig, StabilityModulus, cmd_forward, cmd_instability_sweep,
                          cmd_net_count, cmd_pigeonhole, cmd_stability_diagnostic,
                          config_potential, format_value, stability_pair, super_geometric,
                          write_report)
from .potential import angular_perturbation
from .solver import ContractionError

EXIT_OK, EXIT_PRECONDITION, EXIT_FAILED, EXIT_IO = 0, 2, 3, 4

FLAG_FIELDS = {
    "grid_n": int, "h": float, "s1": float, "s2": float, "s_samples": int,
    "sigma1": float, "sigma2": float, "m": int, "beta": float, "epsilon": float,
    "alpha": float, "delta": float, "seed": int, "out": str,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    for name, typ in FLAG_FIELDS.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    common.add_argument("--L", dest="L", type=int, default=None, help="harmonic degree cutoff")

    p = argparse.ArgumentParser(prog="scatinstab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("forward", parents=[common], help="solve, expand, report norms")
    ph = sub.add_parser("pigeonhole", parents=[common], help="packing vs net collision demo")
    ph.add_argument("--k", type=int, default=None, help="force the lattice size")
    sw = sub.add_parser("sweep", parents=[common], help="instability sweep")
    sw.add_argument("--mode", choices=("degree", "epsilon"), default="degree")
    sd = sub.add_parser("stability-diag", parents=[common],
                        help="ratio ||v1-v2|| / phi(t) for an angular perturbation pair")
    sd.add_argument("--degree", type=int, default=2)
    sd.add_argument("--exponent", type=float, default=0.5, help="exponent of phi")
    sub.add_parser("net-count", parents=[common], help="packing and net cardinalities")
    return p


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for name in list(FLAG_FIELDS) + ["L", "k"]:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    return ExperimentConfig.from_dict(data)


def _run(args) -> int:
    cfg = load_config(args)
    if args.command == "forward":
        rep = cmd_forward(cfg)
        print("stefanov norms:", ", ".join(format_value(x) for x in rep.stefanov))
        print(f"decay fit C: {max(rep.decay_C, default=0):.3e} pass={rep.decay_passed}")
        if rep.far_field_relative is not None:
            print(f"far-field relative difference: {rep.far_field_relative:.3e}")
        return EXIT_OK
    if args.command == "pigeonhole":
        rep = cmd_pigeonhole(cfg)
        print(f"packing {rep.packing_size} members, net log-cardinality "
              f"{rep.net_log_cardinality:.4g}")
        print(f"pair {rep.pair} collision={rep.collision} net distance "
              f"{rep.net_distance:.3e} (2 delta = {2 * rep.delta:.3e}) "
              f"L-inf {rep.linf_distance:.3e}")
        for name, ok in rep.inequalities.items():
            print(f"  {name}: {'ok' if ok else 'FAIL'}")
        return EXIT_OK if rep.passed else EXIT_FAILED
    if args.command == "sweep":
        rows = cmd_instability_sweep(cfg, mode=args.mode)
        for r in rows:
            print(f"{r.parameter:g}\t{format_value(r.distance)}\t{r.linf:.3e}\t{r.cm:.3e}")
        print("super-geometric:", super_geometric([r.distance for r in rows]))
        return EXIT_OK
    if args.command == "stability-diag":
        grid = cfg.grid()
        v0 = config_potential(cfg, grid)
        w = angular_perturbation(grid, args.degree, cfg.epsilon, *cfg.shell)
        linf, t = stability_pair(cfg, v0 + w, v0 - w)
        ratio = cmd_stability_diagnostic(linf, t, StabilityModulus(args.exponent))
        write_report(cfg.out, "stability_diag", {"config": asdict(cfg), "degree": args.degree,
                                                 "exponent": args.exponent, "linf": linf,
                                                 "amplitude_distance": t, "ratio": ratio})
        print(f"L-inf {linf:.4e}  amplitude distance {t:.4e}  ratio {ratio:.4e}")
        return EXIT_OK
    if args.command == "net-count":
        out = cmd_net_count(cfg)
        print(f"packing exponent {out['packing_exponent']:.3f} "
              f"(expected {out['packing_exponent_expected']:.3f})")
        print(f"net polylog degree: interval {out['interval_degree']:.2f}, "
              f"fixed energy {out['fixed_energy_degree']:.2f}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContractionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
