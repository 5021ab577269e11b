"""Air bubble at density ratio 0.001:1: rising velocity and where the divergence lives.

Usage: python demos/bubble.py [--n 40] [--steps 50] [--gravity -10]
"""

import argparse

from qnsch import diagnostics as dg
from qnsch.scenarios import preset, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--gravity", type=float, default=-1.0, help="vertical body acceleration")
    args = ap.parse_args()

    sc = preset("bubble").with_(gravity=(0.0, args.gravity))
    r = run(sc, (args.n, args.n), n_steps=args.steps)
    for k in range(0, len(r.records), max(1, len(r.records) // 10)):
        x = r.records[k]
        print(f"t = {x.time:.4f}  V_c = {x.V_c:+.3e}  ||div u|| = {x.div_u_l2:.3e}  Picard {x.picard_iters}")
    print(f"share of ||div u||^2 inside 0.05 < c < 0.95: {dg.div_u_band_fraction(r.state, r.ctx):.3f}")


if __name__ == "__main__":
    main()
