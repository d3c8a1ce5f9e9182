"""Recompute the reference tables and write one CSV per table.

Usage: python scripts/reproduce_tables.py [--tables 1 2 3] [--max-grid 128] [--outdir results]
"""
import argparse
import csv
from pathlib import Path

from iga_mg import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tables", type=int, nargs="+", default=list(experiments.TABLES))
    ap.add_argument("--max-grid", type=int, default=None)
    ap.add_argument("--outdir", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    for t in args.tables:
        cells = experiments.table_cells(t, max_grid=args.max_grid)
        rows = [c.row() for c in cells]
        with open(args.outdir / f"table{t}.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        ok = sum(c.passed for c in cells)
        print(f"table {t}: {ok}/{len(cells)} cells within tolerance")
        for c in cells:
            if not c.passed:
                print(f"  off: {c.label} {c.quantity} = {c.value:.4g} (reference {c.expected:.4g})")


if __name__ == "__main__":
    main()
