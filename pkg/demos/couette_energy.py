"""Couette flow: mass drift and energy history, walls moving and at rest.

Usage: python demos/couette_energy.py [--preset couette_high] [--steps 100] [--order P2]
"""

import argparse

from qnsch.io import write_diagnostics_csv
from qnsch.scenarios import preset, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="couette_low", choices=["couette_low", "couette_high"])
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--order", default="P1")
    args = ap.parse_args()

    base = preset(args.preset)
    for label, sc in (("moving", base), ("rest", base.with_(wall_velocity={"wall_bottom": 0.0, "wall_top": 0.0}))):
        r = run(sc, (48, 8), args.order, n_steps=args.steps)
        m0, mc0 = r.initial.mass_rho, r.initial.mass_rhoc
        drift = max(max(abs(x.mass_rho - m0) / m0, abs(x.mass_rhoc - mc0) / mc0) for x in r.records)
        e = [r.initial.E_total] + [x.E_total for x in r.records]
        rises = sum(b > a for a, b in zip(e, e[1:]))
        print(f"{args.preset} walls {label}: E {e[0]:.6e} -> {e[-1]:.6e}, steps with rising energy {rises}, "
              f"worst relative mass drift {drift:.1e}")
        path = write_diagnostics_csv(r.records, f"couette_{label}.csv")
        print(f"  diagnostics in {path}")


if __name__ == "__main__":
    main()
