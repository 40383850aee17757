"""Command line entry point: ``pilot-ura {analyze,simulate,collide,selftest}``.

Exit codes: 0 ok, 1 configuration error, 2 internal error.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path


from pilot_ura.errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2


def _range_arg(text):
    """Comma list of numbers and inclusive ``start:step:stop`` ranges."""
    from pilot_ura.config import _parse_list

    try:
        values = _parse_list(text, float)
    except ValueError:
        values = []
    if not values:
        raise argparse.ArgumentTypeError(f"expected start:step:stop or a list, got {text!r}")
    return values


def _load(args):
    from pilot_ura.config import load_config, parse_items

    cfg = load_config(args.config)
    overrides = [(k, str(v), None) for k, v in (args.set or [])]
    if getattr(args, "seed", None) is not None:
        overrides.append(("campaign_seed", str(args.seed), None))
    if getattr(args, "trials", None) is not None:
        overrides.append(("trials", str(args.trials), None))
    if getattr(args, "ebn0_db", None) is not None:
        overrides.append(("ebn0_db", str(args.ebn0_db), None))
    return parse_items(overrides, base=cfg) if overrides else cfg


def _out(path):
    if path in (None, "-"):
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def cmd_analyze(args):
    from pilot_ura.analysis import CURVE_COLUMNS, curve_rows, sweep

    cfg = _load(args)
    points = sweep(cfg.K_a_grid, cfg.M_grid, cfg.n_p, cfg.n_d, cfg.B, cfg.J, cfg.p_e,
                   collision_adjust=cfg.collision_adjust, N0=cfg.N0, draws=cfg.mse_draws)
    fh, close = _out(args.out)
    try:
        fh.write("# schema: pilot_ura.curve/1\n")
        w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in curve_rows(points):
            w.writerow(row)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_simulate(args):
    from pilot_ura.harness import run_campaign

    cfg = _load(args)
    report = run_campaign(cfg, workers=args.workers)
    fh, close = _out(args.out)
    try:
        fh.write(report.to_csv())
    finally:
        if close:
            fh.close()
    print(report.summary(), file=sys.stderr if not close else sys.stdout)
    return EXIT_OK


def cmd_collide(args):
    from pilot_ura.config import default_design_snr
    from pilot_ura.analysis import collision_sweep
    from pilot_ura.polar import construct, design_z0

    snr_design = args.design_snr if args.design_snr is not None else default_design_snr(args.payload, args.n_d)
    spec = construct(2 * args.n_d, args.payload, args.crc, design_z0(snr_design), args.list_size)
    rows = collision_sweep(args.M, args.snr_db, args.sigma_est_db, args.n_d, spec, args.trials, args.seed)
    fh, close = _out(args.out)
    try:
        fh.write("# schema: pilot_ura.collisions/1\n")
        fh.write(f"# M = {args.M}  snr_db = {args.snr_db}  payload = {args.payload}  crc = {args.crc}"
                 f"  n_d = {args.n_d}  list_size = {args.list_size}\n")
        w = csv.DictWriter(fh, fieldnames=("sigma_est_db", "trials", "both", "one", "none"), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_selftest(args):
    from pilot_ura.selftest import run_all

    return EXIT_OK if run_all(verbose=True) else EXIT_INTERNAL


def build_parser():
    p = argparse.ArgumentParser(prog="pilot-ura", description="Pilot-based unsourced random access simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_config):
        sp.add_argument("--config", default=default_config, help="preset name or key = value file")
        sp.add_argument("--set", nargs=2, action="append", metavar=("KEY", "VALUE"), help="override one key")
        sp.add_argument("--out", default=None, help="output CSV (default stdout)")

    a = sub.add_parser("analyze", help="required Eb/N0 curves over K_a x M")
    common(a, "curves")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="Monte Carlo campaign of the full receiver")
    common(s, "desk")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--ebn0-db", default=None, help="number or 'auto'")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("collide", help="two-user collision model sweep")
    c.add_argument("--sigma-est-db", type=_range_arg, default=_range_arg("-20:2:0"))
    c.add_argument("--M", type=int, default=50)
    c.add_argument("--snr-db", type=float, default=-10.0)
    c.add_argument("--n-d", type=int, default=2048)
    c.add_argument("--payload", type=int, default=84)
    c.add_argument("--crc", type=int, default=16)
    c.add_argument("--list-size", type=int, default=32)
    c.add_argument("--design-snr", type=float, default=None)
    c.add_argument("--trials", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_collide)

    t = sub.add_parser("selftest", help="quick oracle checks")
    t.set_defaults(func=cmd_selftest)
    return p


def _glue_negative_ranges(argv):
    # argparse reads "-20:2:0" as an option flag; bind it to the preceding option
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--sigma-est-db":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_negative_ranges(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("pilot_ura").exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
