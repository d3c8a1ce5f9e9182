"""Gauss-Seidel V(1,0) on the 2D unit square: asymptotic factor versus degree."""
import argparse

from iga_mg.multigrid import SmootherSpec, measured_asymptotic_factor
from iga_mg.problems import poisson2d


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--degrees", type=int, nargs="+", default=[2, 3, 4, 5, 6, 7, 8])
    args = ap.parse_args()
    for p in args.degrees:
        h = poisson2d(p, args.m).hierarchy(SmootherSpec("gauss_seidel", block=None))
        est = measured_asymptotic_factor(h)
        print(f"p={p} rho_h={est.rho:.4f} reliable={est.reliable}")


if __name__ == "__main__":
    main()
