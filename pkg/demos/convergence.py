"""Spatial convergence on the Couette preset against the finest mesh of the ladder.

Usage: python demos/convergence.py [--order P1] [--ladder 8 12 16 32] [--T 0.0504]
"""

import argparse

from qnsch.scenarios import convergence_study, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--order", default="P1")
    ap.add_argument("--ladder", type=int, nargs="+", default=[8, 12, 16, 32])
    ap.add_argument("--T", type=float, default=0.0504)
    args = ap.parse_args()

    tab = convergence_study(preset("couette_low").with_(T=args.T), args.ladder, args.order)
    print(f"{tab.order}, reference {tab.reference[0]}x{tab.reference[1]}")
    for row in tab.rows():
        print(f"  ny={row['ny']:4d}  " + "  ".join(
            f"{f}: {row[f]:.3e} ({row[f + '_rate']:.2f})" for f in tab.fields))


if __name__ == "__main__":
    main()
