"""Command-line entry point: ``savqe run|oracle|metrics``.

Exit codes: 0 when every solve converged, 2 when any solve hit its iteration
cap (results are still written), 1 on input or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Sequence

from savqe.exceptions import SavqeError
from savqe.harness import ScanIOError, ScanReport, emit_reports, format_metrics, load_scan_config, run_scan
from savqe.hamiltonian import read_fcidump
from savqe.oracle import casci_solve, csf_character
from savqe.states import enumerate_csfs

log = logging.getLogger("savqe")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SAVQE_THREADS", "1")))
    except ValueError:
        return 1


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_scan_config(args.config)
    if args.out:
        config.output_dir = args.out
    report = run_scan(config, threads=args.threads, dry_run=args.dry_run)
    if report is None:
        print(f"configuration OK: {len(config.scan_points)} points, methods "
              f"{', '.join(m.name for m in config.methods)}")
        return 0
    files = emit_reports(report, config.output_dir)
    print(format_metrics(report.metrics))
    print(f"wrote {len(files)} files to {config.output_dir}")
    return 0 if report.converged else 2


def _cmd_oracle(args: argparse.Namespace) -> int:
    h = read_fcidump(args.fcidump)
    result = casci_solve(h, args.roots, spin=args.spin)
    characters = csf_character(result, enumerate_csfs(h.n_electrons, h.n_spatial_orbitals, args.spin))
    if args.json:
        data = result.to_dict()
        data["characters"] = characters
        print(json.dumps(data, indent=1))
        return 0
    print(f"CSF dimension {result.csf_dimension}, determinant dimension {result.basis.dim}")
    for k, e in enumerate(result.energies):
        lead = ", ".join(f"{label} ({w:.3f})" for label, w in characters[k])
        print(f"root {k}: {e:.12f}  <S^2>={result.s2_expectations[k]:.2e}  {lead}")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    report = ScanReport.load(args.report)
    print(format_metrics(report.metrics))
    return 0 if report.converged else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="savqe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a geometry scan described by a JSON file")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--threads", type=int, default=_default_threads(),
                     help="parallel scan points (default: $SAVQE_THREADS or 1)")
    run.add_argument("--dry-run", action="store_true", help="validate inputs only")
    run.set_defaults(func=_cmd_run)

    oracle = sub.add_parser("oracle", help="exact CASCI roots of an FCIDUMP")
    oracle.add_argument("fcidump")
    oracle.add_argument("--roots", type=int, default=3)
    oracle.add_argument("--spin", type=float, default=0.0)
    oracle.add_argument("--json", action="store_true")
    oracle.set_defaults(func=_cmd_oracle)

    metrics = sub.add_parser("metrics", help="print the metrics table of a report.json")
    metrics.add_argument("report")
    metrics.set_defaults(func=_cmd_metrics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SavqeError, ScanIOError, OSError, ValueError, KeyError) as exc:
        print(f"savqe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
