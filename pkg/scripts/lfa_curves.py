"""Write |S(theta)| curves for Gauss-Seidel and Schwarz smoothers, p = 2..8."""
import argparse
from pathlib import Path

from iga_mg.lfa import LfaSmoother, analyse


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", type=Path, default=Path("results/curves"))
    ap.add_argument("--n-theta", type=int, default=256)
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    for p in range(2, 9):
        for sm in (LfaSmoother("gs"), LfaSmoother("schwarz", 3), LfaSmoother("schwarz", 5), LfaSmoother("schwarz", 7)):
            rep = analyse(p, sm, n_theta=args.n_theta)
            rep.write_curve_csv(args.outdir / f"p{p}_{sm.label}.csv")
            f = rep.factors()
            print(f"p={p} {sm.label:10s} mu={f['mu']:.4f} rho_2g={f['rho_2g']:.4f} rho_3g_V={f['rho_3g_V']:.4f}")


if __name__ == "__main__":
    main()
