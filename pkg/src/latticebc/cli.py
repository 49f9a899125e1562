"""Command line entry point: ``latticebc study | greens | check``."""
from __future__ import annotations

import argparse
import sys
import time


def _study(args):
    from .harness import emit_plotdata, fit_rate, load_config, run_study

    config = load_config(args.config)

    def progress(rec):
        if not args.quiet:
            print(
                f"{rec.scheme:>4s} K={rec.K:<4d} N={rec.N:<6d} geom={rec.geom_error:.3e} "
                f"energy={rec.energy_error:.3e} it={rec.iterations}{'' if rec.converged else ' (not converged)'}",
                file=sys.stderr,
                flush=True,
            )

    records = run_study(config, progress=progress)
    emit_plotdata(records, args.out)
    for scheme in config.schemes:
        rows = [r for r in records if r.scheme == scheme]
        for name in ("geom_error", "energy_error"):
            try:
                fit = fit_rate(rows, name)
            except ValueError as exc:
                print(f"{scheme} {name}: {exc}")
                continue
            print(f"{scheme} {name}: slope {fit.slope:+.3f} (K {fit.window[0]}..{fit.window[1]}, r2 {fit.r_squared:.4f})")
    return 0


def _greens(args):
    from .greens import LatticeGreens, write_greens_csv

    start = time.perf_counter()
    rows = write_greens_csv(LatticeGreens(tol=args.tol), args.radius, args.out)
    print(f"wrote {rows} rows to {args.out} in {time.perf_counter() - start:.1f} s")
    return 0


def _check(args):
    from .checks import run_checks

    results = run_checks(progress=lambda r: print(r.line(), flush=True))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="latticebc", description="Artificial boundary conditions for crystalline defects.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("study", help="run a convergence study and write its CSV")
    p.add_argument("--config", required=True, help="TOML study description")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--quiet", action="store_true", help="suppress per-record progress")
    p.set_defaults(func=_study)

    p = sub.add_parser("greens", help="tabulate first differences of the lattice Green's function")
    p.add_argument("--radius", type=int, required=True, help="hexagon side of the tabulated sites")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--tol", type=float, default=1e-6, help="quadrature refinement tolerance")
    p.set_defaults(func=_greens)

    p = sub.add_parser("check", help="run the property suites")
    p.set_defaults(func=_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"latticebc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
