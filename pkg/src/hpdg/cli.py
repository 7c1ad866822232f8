"""Command line driver for the reentrant corner benchmark.

Example::

    hpdg-poisson --grid quad --out run_quad
"""
import argparse
import logging
import sys
from pathlib import Path

from .benchmark import BenchmarkConfig, format_table, run_benchmark
from .mesh import MacroGridError
from .sipg import SolverBreakdown

log = logging.getLogger("hpdg")


def build_parser() -> argparse.ArgumentParser:
    defaults = BenchmarkConfig()
    p = argparse.ArgumentParser(
        prog="hpdg-poisson",
        description="hp-adaptive SIPG solve of -lap u = 0 on the L-shaped domain "
                    "with exact solution r^(2/3) sin(2 phi / 3).")
    p.add_argument("--grid", choices=("quad", "simplex"), default=defaults.grid,
                   help="macro grid cell type (default: %(default)s)")
    p.add_argument("--tol", type=float, default=defaults.tol,
                   help="stop once the global estimator drops below TOL (default: %(default)g)")
    p.add_argument("--gamma", type=float, default=defaults.gamma,
                   help="interior penalty parameter (default: %(default)g)")
    p.add_argument("--kmin", type=int, default=defaults.k_min,
                   help="minimal local degree, also the initial one (default: %(default)s)")
    p.add_argument("--kmax", type=int, default=defaults.k_max,
                   help="maximal local degree (default: %(default)s)")
    p.add_argument("--max-iter", type=int, default=defaults.max_iterations,
                   help="iteration cap (default: %(default)s)")
    p.add_argument("--out", type=Path, default=Path("."),
                   help="output directory for table.csv and mesh_<iter>.vtk (default: cwd)")
    p.add_argument("--macro", type=Path, default=None,
                   help="macro grid file overriding the built-in L-shape")
    p.add_argument("--eta-star", type=float, default=None, dest="eta_lower",
                   help="coarsening threshold (default: TOL/|G|)")
    p.add_argument("--eta-upper", type=float, default=None,
                   help="refinement threshold (default: TOL/sqrt(|G|))")
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = BenchmarkConfig(grid=args.grid, tol=args.tol, gamma=args.gamma,
                                 k_min=args.kmin, k_max=args.kmax,
                                 max_iterations=args.max_iter, out=args.out,
                                 macro=args.macro, eta_lower=args.eta_lower,
                                 eta_upper=args.eta_upper)
        result = run_benchmark(config)
    except (ValueError, MacroGridError, OSError, SolverBreakdown) as exc:
        print(f"hpdg-poisson: error: {exc}", file=sys.stderr)
        return 2
    print(format_table(result.records))
    return 0


if __name__ == "__main__":
    sys.exit(main())
