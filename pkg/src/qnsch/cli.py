"""Command-line entry point: ``qnsch run | converge | sweep-eps | check``."""

import argparse
import logging
import os
import sys

from . import checks
from .errors import ConfigError, InvalidArgument, IOFailure, NumericalFailure, QnschError
from .io import DirectorySink, load_config, package_version, _write_text
from .scenarios import convergence_study, eps_sweep, run

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 1, 2, 3

log = logging.getLogger("qnsch")


def _parser():
    p = argparse.ArgumentParser(prog="qnsch", description="Quasi-incompressible two-phase flow with moving contact lines.")
    p.add_argument("--version", action="version", version=f"qnsch {package_version()}")
    p.add_argument("-v", "--verbose", action="store_true", help="log Picard progress")
    sub = p.add_subparsers(dest="command", metavar="command")

    r = sub.add_parser("run", help="run one scenario from a configuration file")
    r.add_argument("config")
    r.add_argument("--steps", type=int, help="stop after this many steps")
    r.add_argument("--output-dir", help="override the output directory")
    r.add_argument("--no-vtk", action="store_true", help="skip field output")

    c = sub.add_parser("converge", help="spatial convergence study (finest run is the reference)")
    c.add_argument("config")
    c.add_argument("--resolutions", nargs="+", type=int, required=True, metavar="NY",
                   help="cells across the short side, coarse to fine")
    c.add_argument("--order", help="override the element order")

    s = sub.add_parser("sweep-eps", help="interface-width sweep of the divergence norm")
    s.add_argument("config")
    s.add_argument("--eps", nargs="+", type=float, required=True)
    s.add_argument("--steps", type=int)

    sub.add_parser("check", help="run the built-in invariant suite")
    return p


def _cmd_run(args):
    cfg = load_config(args.config)
    out = args.output_dir or cfg.output_dir
    sc = cfg.scenario_obj()
    sink = DirectorySink(out, config=cfg, vtk=not args.no_vtk)
    res = run(sc, cfg.resolution, cfg.order, sink=sink, n_steps=args.steps)
    last = res.records[-1] if res.records else res.initial
    print(f"{sc.name}: {len(res.records)} steps to t={res.state.time:.6g}, "
          f"E={last.E_total:.6e}, output in {out}")
    return 0


def _cmd_converge(args):
    if len(args.resolutions) < 3:
        raise ConfigError("need >= 3 resolutions", key="resolutions")
    cfg = load_config(args.config)
    order = (args.order or cfg.order).upper()
    tab = convergence_study(cfg.scenario_obj(), args.resolutions, order)
    lines = ["h,nx,ny,err_u_x,rate_u_x,err_u_y,rate_u_y,err_c,rate_c"]
    print(f"{order} convergence against reference {tab.reference[0]}x{tab.reference[1]}")
    for row in tab.rows():
        vals = [row["h"], row["nx"], row["ny"]]
        for f in tab.fields:
            vals += [row[f], row[f + "_rate"]]
        lines.append(",".join(f"{v:.17e}" if isinstance(v, float) else str(v) for v in vals))
        print("  h=1/%-4d" % row["ny"] + "  ".join(
            f"{f}: {row[f]:.3e} ({row[f + '_rate']:.2f})" for f in tab.fields))
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_text(os.path.join(cfg.output_dir, f"convergence_{order}.csv"), "\n".join(lines) + "\n")
    return 0


def _cmd_sweep(args):
    cfg = load_config(args.config)
    sw = eps_sweep(cfg.scenario_obj(), args.eps, cfg.resolution, cfg.order, n_steps=args.steps)
    lines = ["eps,time,div_u_l2"]
    for e in sw.eps:
        print(f"eps={e:g}: time-averaged ||div u|| = {sw.time_average(e):.6e}")
        lines += [f"{e:.17e},{t:.17e},{d:.17e}" for t, d in zip(sw.times[e], sw.div_u[e])]
    for w in sw.warnings:
        print(f"warning: {w}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_text(os.path.join(cfg.output_dir, "eps_sweep.csv"), "\n".join(lines) + "\n")
    return 0


def _cmd_check(args):
    ok = True
    for res in checks.run_all():
        print(res.line())
        ok = ok and res.passed
    return 0 if ok else EXIT_NUMERICAL


def main(argv=None):
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    handlers = {"run": _cmd_run, "converge": _cmd_converge, "sweep-eps": _cmd_sweep, "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except (ConfigError, InvalidArgument) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IOFailure, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QnschError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
