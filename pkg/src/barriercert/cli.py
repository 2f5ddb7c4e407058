"""Command-line interface.

Subcommands: verify (grid search + certificates), simulate (Monte-Carlo
reference estimate), check (re-verify a certificate), export-sdp (write
SDPA files without solving).  Exit codes: 0 success, 2 validation error,
3 every verify cell failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .pipeline import export_problem, run_check, run_simulate, run_verify
from .problemfile import ValidationError, load_problem

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ALL_FAILED = 3


def _fmt_cell(c) -> str:
    bound = "-" if c["bound"] is None else f"{c['bound']:.4f}"
    beta = "dec" if c["beta"] is None else f"{c['beta']:g}"
    return (f"{c['alpha']:>7g} {beta:>8} {c['degrees'][0]:>3}/{c['degrees'][1]:<2} "
            f"{bound:>8} {c['status']:>22} {c['wall_time']:>8.2f}s")


def _print_report(report: dict, fmt: str, out=sys.stdout):
    if fmt == "json":
        json.dump(report, out, indent=2, sort_keys=True, default=str)
        out.write("\n")
        return
    out.write(f"variant: {report['variant']}   backend: {report['backend']}\n")
    out.write(f"{'alpha':>7} {'beta':>8} {'deg':>6} {'bound':>8} "
              f"{'status':>22} {'time':>9}\n")
    for c in report["cells"]:
        out.write(_fmt_cell(c) + "\n")
    best = report["best"]
    if best is None:
        out.write("best: - (no feasible cell)\n")
    else:
        out.write(f"best: bound={best['bound']:.4f} at alpha={best['alpha']:g} "
                  f"beta={'dec' if best['beta'] is None else best['beta']} "
                  f"deg={tuple(best['degrees'])}\n")


def cmd_verify(args) -> int:
    problem = load_problem(args.problem)
    if args.export_sdpa:
        os.makedirs(args.export_sdpa, exist_ok=True)
        for tag, text in export_problem(problem).items():
            with open(os.path.join(args.export_sdpa, f"{tag}.dat-s"), "w") as f:
                f.write(text)
        print(f"wrote SDPA files to {args.export_sdpa}")
        return EXIT_OK
    report = run_verify(problem, jobs=args.jobs, keep_gram=args.certificates is not None)
    if args.certificates and report["best"] is not None:
        with open(args.certificates, "w") as f:
            json.dump(report["best"], f, indent=2, sort_keys=True)
    _print_report(report, args.format)
    return EXIT_ALL_FAILED if report["all_failed"] else EXIT_OK


def cmd_simulate(args) -> int:
    problem = load_problem(args.problem)
    report = run_simulate(problem, trajectories=args.trajectories, seed=args.seed)
    if args.format == "json":
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        print(f"{report['kind']} estimate: {report['p_hat']:.4f} "
              f"[{report['ci_lo']:.4f}, {report['ci_hi']:.4f}] "
              f"({report['successes']}/{report['trials']}, seed={report['seed']})")
    return EXIT_OK


def cmd_check(args) -> int:
    problem = load_problem(args.problem)
    with open(args.certificate) as f:
        cert = json.load(f)
    report = run_check(cert, problem, samples=args.samples, seed=args.seed or 0)
    if args.format == "json":
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        print(f"bound={report['bound']:.4f} (raw {report['raw_bound']:.4f})")
        if "residual" in report:
            print(f"identity residual: {report['residual']:.3e}  "
                  f"min Gram eigenvalue: {report['min_gram_eigenvalue']:.3e}")
        print(f"sampling violations: {report['sampling_violations']}")
    return EXIT_OK if report["sampling_violations"] == 0 else EXIT_ALL_FAILED


def cmd_export_sdp(args) -> int:
    problem = load_problem(args.problem)
    os.makedirs(args.out, exist_ok=True)
    for tag, text in export_problem(problem).items():
        with open(os.path.join(args.out, f"{tag}.dat-s"), "w") as f:
            f.write(text)
    print(f"wrote SDPA files to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="barriercert",
                                 description="stochastic barrier certificate synthesis")
    sub = ap.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="grid search for certified bounds")
    pv.add_argument("problem")
    pv.add_argument("--jobs", type=int, default=1)
    pv.add_argument("--seed", type=int, default=None)
    pv.add_argument("--format", choices=("json", "table"), default="table")
    pv.add_argument("--export-sdpa", metavar="DIR", default=None,
                    help="write one .dat-s per grid cell and skip solving")
    pv.add_argument("--certificates", metavar="FILE", default=None,
                    help="write the best cell (with Gram blocks) as JSON")
    pv.set_defaults(fn=cmd_verify)

    ps = sub.add_parser("simulate", help="Monte-Carlo reference estimate")
    ps.add_argument("problem")
    ps.add_argument("--jobs", type=int, default=1)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--trajectories", type=int, default=None)
    ps.add_argument("--format", choices=("json", "table"), default="table")
    ps.set_defaults(fn=cmd_simulate)

    pc = sub.add_parser("check", help="re-verify a certificate JSON")
    pc.add_argument("certificate")
    pc.add_argument("problem")
    pc.add_argument("--samples", type=int, default=10_000)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--format", choices=("json", "table"), default="table")
    pc.set_defaults(fn=cmd_check)

    pe = sub.add_parser("export-sdp", help="write SDPA sparse files")
    pe.add_argument("problem")
    pe.add_argument("--out", default="sdpa-out")
    pe.set_defaults(fn=cmd_export_sdp)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
