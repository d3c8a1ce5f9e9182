"""Command-line driver: ``solve``, ``lfa`` and ``reproduce``.

Exit codes: 0 success, 2 usage error, 3 solver did not converge,
4 at least one reproduced cell outside its tolerance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass

from . import experiments
from .lfa import LfaSmoother, analyse
from .multigrid import CycleSpec, SmootherSpec, block_size_for_degree, solve
from .problems import PROBLEMS, build_problem

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_CELL_FAILED = 4

_SMOOTHER_NAMES = {"gs": "gauss_seidel", "schwarz": "schwarz", "colored-schwarz": "colored_schwarz"}


@dataclass
class ExperimentConfig:
    problem: str
    p: int
    m: int
    smoother: str
    block: int | None
    cycle: str = "V"
    nu1: int = 1
    nu2: int = 0
    tol: float = 1e-8
    seed: int = 42
    maxiter: int = 200

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"tolerance must lie in (0, 1), got {self.tol}")
        if self.p < 1:
            raise ValueError(f"degree must be >= 1, got {self.p}")

    def smoother_spec(self) -> SmootherSpec:
        kind = _SMOOTHER_NAMES[self.smoother]
        return SmootherSpec(kind, block=None if kind == "gauss_seidel" else self.block)

    def cycle_spec(self) -> CycleSpec:
        return CycleSpec(self.cycle, self.nu1, self.nu2)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _emit(rows: list[dict], args, extra: dict | None = None) -> None:
    """CSV to stdout (and ``--out``); with ``--json`` a JSON mirror instead."""
    if args.json:
        payload = {"rows": rows}
        if extra:
            payload.update(extra)
        text = json.dumps(payload, indent=2, default=float) + "\n"
    else:
        text = _csv_text(rows)
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)


# --- commands -------------------------------------------------------------------------


def cmd_solve(args) -> int:
    if args.block == "auto":
        block = block_size_for_degree(args.p) if args.smoother != "gs" else None
    else:
        block = int(args.block)
    cfg = ExperimentConfig(
        args.problem, args.p, args.m, args.smoother, block, args.cycle,
        args.nu1, args.nu2, args.tol, args.seed, args.maxiter,
    )
    ls = build_problem(cfg.problem, cfg.p, cfg.m)
    h = ls.hierarchy(cfg.smoother_spec())
    rep = solve(h, ls.b, cfg.cycle_spec(), seed=cfg.seed, tol=cfg.tol, maxiter=cfg.maxiter)
    row = asdict(cfg)
    row.update(ndof=ls.ndof, levels=h.nlevels, iterations=rep.iterations,
               reduction=rep.reduction, rho=rep.rho, converged=rep.converged)
    # timings vary run to run, so they stay out of the CSV
    extra = {"wall_time": rep.wall_time, "residuals": rep.residuals}
    _emit([row], args, extra)
    print(f"solve: {rep.iterations} iterations, {rep.wall_time:.3f} s", file=sys.stderr)
    if not rep.converged:
        print(f"solve: no convergence to tol={cfg.tol} within {rep.iterations} iterations", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_lfa(args) -> int:
    if args.smoother == "gs":
        sm = LfaSmoother("gs")
    elif args.smoother == "schwarz":
        if args.n is None:
            raise ValueError("--n is required for the Schwarz smoother")
        sm = LfaSmoother("schwarz", args.n)
    else:
        raise ValueError("LFA covers the 'gs' and 'schwarz' smoothers only")
    if not 1 <= args.p <= 8:
        raise ValueError(f"LFA supports p in [1, 8], got {args.p}")
    rep = analyse(args.p, sm, args.nu1, args.nu2, args.n_theta)
    if args.curve:
        rep.write_curve_csv(args.curve)
    _emit([rep.factors()], args)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cells = experiments.table_cells(args.table, args.max_grid)
    rows = [c.row() for c in cells]
    _emit(rows, args)
    npass = sum(c.passed for c in cells)
    for c in cells:
        if not c.passed:
            print(f"FAIL table {c.table} {c.label} {c.quantity}: got {c.value:.4g}, "
                  f"expected {c.expected:.4g} +/- {c.tol:g}", file=sys.stderr)
    print(f"table {args.table}: {npass}/{len(cells)} cells within tolerance", file=sys.stderr)
    return EXIT_OK if npass == len(cells) else EXIT_CELL_FAILED


# --- parser ---------------------------------------------------------------------------


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iga-mg", description="IGA Poisson solver with Schwarz multigrid and LFA.")
    sub = ap.add_subparsers(dest="command", required=True)

    def output_flags(p):
        p.add_argument("--out", help="also write the report to this file")
        p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")

    s = sub.add_parser("solve", help="assemble and solve a model problem")
    s.add_argument("--problem", choices=PROBLEMS, required=True)
    s.add_argument("--p", type=_positive_int, required=True, help="spline degree")
    s.add_argument("--m", "--grid", dest="m", type=_positive_int, required=True,
                   help="spans per direction (grid G means G x G in 2D)")
    s.add_argument("--smoother", choices=sorted(_SMOOTHER_NAMES), default="colored-schwarz")
    s.add_argument("--block", choices=["auto", "3", "5", "7"], default="auto")
    s.add_argument("--cycle", choices=["V", "W"], default="V")
    s.add_argument("--nu1", type=_nonneg_int, default=1)
    s.add_argument("--nu2", type=_nonneg_int, default=0)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--maxiter", type=_positive_int, default=200)
    output_flags(s)
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("lfa", help="local Fourier analysis factors in 1D")
    f.add_argument("--p", type=_positive_int, required=True)
    f.add_argument("--smoother", choices=["gs", "schwarz"], required=True)
    f.add_argument("--n", type=_positive_int, help="Schwarz block size (odd)")
    f.add_argument("--nu1", type=_nonneg_int, default=1)
    f.add_argument("--nu2", type=_nonneg_int, default=0)
    f.add_argument("--n-theta", dest="n_theta", type=_positive_int, default=256)
    f.add_argument("--curve", help="write (theta, |S|) samples to this CSV")
    output_flags(f)
    f.set_defaults(func=cmd_lfa)

    r = sub.add_parser("reproduce", help="recompute a reference table and diff it")
    r.add_argument("--table", type=int, choices=experiments.TABLES, required=True)
    r.add_argument("--max-grid", dest="max_grid", type=_positive_int,
                   help="skip grids finer than this (tables 3-5)")
    output_flags(r)
    r.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        parser.error(str(exc))  # exits with EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
