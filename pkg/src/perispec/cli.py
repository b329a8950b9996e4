"""Command-line entry point for the sweep harness.

Subcommands:

* ``gamma N P``  — print the sphere moment constant gamma(N, p).
* ``eigen``      — solve one eigenproblem from a config and print the pair.
* ``sweep-zero`` — run a horizon-to-zero study from a config file.
* ``sweep-inf``  — run a horizon-to-infinity study from a config file.
* ``bbm``        — run the localization cross-check from a config file.
* ``all``        — run every study config in a directory.

Exit codes: 0 all verdicts pass, 1 a study failed, 2 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

from . import __version__
from .kernelmath import INFINITE, KernelParams, gamma_constant
from .mesh import DomainSpec, build_mesh
from .harness import (
    ConfigError,
    StudyError,
    SweepConfig,
    run_all,
    run_study,
    write_report,
)
from .eigensolver import SolverOptions, solve_first_eigenpair, solve_p2_spectrum


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perispec",
        description="Horizon sweeps for the truncated fractional p-Laplacian spectrum",
    )
    parser.add_argument("--version", action="version", version=f"perispec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gamma", help="print the sphere moment constant gamma(N, p)")
    g.add_argument("N", type=int, help="spatial dimension (1, 2 or 3)")
    g.add_argument("P", type=float, help="exponent p > 1")

    def study_flags(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="path to a JSON study config")
        sp.add_argument("--out", default=None, help="report output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent rows (default 1)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config's solver seed")

    e = sub.add_parser("eigen", help="solve a single eigenproblem from a config")
    e.add_argument("--config", required=True,
                   help="JSON with p, s, delta (number or \"INF\"), a, b, n_interior, k_max")
    e.add_argument("--out", default=None, help="write the eigenpair JSON here (default stdout)")
    e.add_argument("--threads", type=int, default=1, help=argparse.SUPPRESS)
    e.add_argument("--seed", type=int, default=None, help="solver seed override")

    for name, help_text in (
        ("sweep-zero", "horizon-to-zero eigenvalue sweep"),
        ("sweep-inf", "horizon-to-infinity eigenvalue sweep"),
        ("bbm", "localization cross-check on a fixed test function"),
    ):
        study_flags(sub.add_parser(name, help=help_text))

    a = sub.add_parser("all", help="run every study config in a directory")
    a.add_argument("--config", required=True, help="directory of JSON study configs")
    a.add_argument("--out", default=None, help="report output directory")
    a.add_argument("--threads", type=int, default=1)
    a.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    return parser


_STUDY_OF_COMMAND = {"sweep-zero": "zero", "sweep-inf": "inf", "bbm": "bbm"}


def _cmd_gamma(args) -> int:
    try:
        value = gamma_constant(args.N, args.P)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(repr(value))
    return 0


def _cmd_eigen(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        delta = INFINITE if d.get("delta") == "INF" else float(d["delta"])
        params = KernelParams(float(d["s"]), float(d["p"]), delta)
        domain_delta = INFINITE if (math.isinf(delta) or delta >= float(d.get("b", 1.0)) -
                                    float(d.get("a", 0.0))) else delta
        domain = DomainSpec(float(d.get("a", 0.0)), float(d.get("b", 1.0)), domain_delta)
        n_interior = int(d.get("n_interior", 128))
        k_max = int(d.get("k_max", 1))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    mesh = build_mesh(domain, n_interior)
    if not math.isinf(params.delta) and mesh.has_collar:
        params = params.with_delta(mesh.delta_effective)
    opts = SolverOptions(seed=args.seed if args.seed is not None else int(d.get("seed", 0)))
    if abs(params.p - 2.0) < 1e-12:
        pairs = solve_p2_spectrum(mesh, params, k_max)
    else:
        if k_max > 1:
            print("config error: k_max > 1 requires p = 2", file=sys.stderr)
            return 2
        pairs = [solve_first_eigenpair(mesh, params, opts)]
    out = json.dumps([ep.to_json_dict() for ep in pairs], sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0 if all(ep.converged for ep in pairs) else 1


def _cmd_study(args, study: str) -> int:
    try:
        config = SweepConfig.from_file(args.config)
        if config.study != study:
            raise ConfigError(
                f"{config.name}: config is a {config.study!r} study, "
                f"but the {study!r} runner was requested"
            )
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        report = run_study(config, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StudyError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    out_dir = args.out if args.out else "."
    write_report(report, out_dir)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {config.name} rel_errors="
          f"{ {k: float(f'{v:.3e}') for k, v in report.rel_errors.items()} }")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "gamma":
        return _cmd_gamma(args)
    if args.command == "eigen":
        return _cmd_eigen(args)
    if args.command == "all":
        return run_all(args.config, out_dir=args.out, threads=args.threads)
    return _cmd_study(args, _STUDY_OF_COMMAND[args.command])


if __name__ == "__main__":
    sys.exit(main())
