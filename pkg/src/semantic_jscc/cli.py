"""Command line for semantic JSCC exponent computations.

Exit codes: 0 success, 1 validation failure, 2 usage, parse or I/O error.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import scenario as sc
from .jscc import convexity_report, optimal_code_rate
from .mimo import ergodic_capacity
from .prob import BITS_PER_NAT, dmc_capacity
from .ratedist import InfeasibleDistortionError, semantic_rd_discrete, semantic_rd_gaussian
from .validation import format_table, run_validation

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, config=True):
    if config:
        p.add_argument("--config", required=True, metavar="PATH", help="scenario TOML file")
    p.add_argument("--seed", type=int, help="Monte Carlo seed")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")
    p.add_argument("--units", choices=("nats", "bits"))
    p.add_argument("--snr", choices=("linear", "db"), help="how channel.snr is read")
    p.add_argument("--method", choices=("closed", "mc"))
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--cache-dir", metavar="PATH",
                   help=f"result cache directory (default ${sc.CACHE_ENV} or ~/.cache)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_ms column (output is then not reproducible)")


def build_parser():
    ap = _Parser(prog="semantic-jscc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("rd", "semantic rate-distortion function"),
                       ("exponent-dmc", "JSCC exponent bounds for a discrete problem"),
                       ("exponent-mimo", "JSCC exponent for a Gaussian source over MIMO"),
                       ("capacity", "channel capacity (ergodic for MIMO)"),
                       ("sweep", "evaluate every point of the [sweep] axis")):
        _common(sub.add_parser(name, help=text))
    v = sub.add_parser("validate", help="run the self-check suite")
    v.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("plot-data", help="write a data file and a gnuplot script")
    p.add_argument("inputs", nargs="*", metavar="CSV",
                   help="result CSVs, one series each; omit to plot E_J(R) for --config")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", required=True, metavar="PREFIX",
                   help="writes PREFIX.dat and PREFIX.gp")
    for flag in ("--seed", "--samples"):
        p.add_argument(flag, type=int)
    p.add_argument("--units", choices=("nats", "bits"))
    p.add_argument("--snr", choices=("linear", "db"))
    p.add_argument("--method", choices=("closed", "mc"))
    return ap


def _load(args):
    cfg = sc.load_config(args.config)
    return sc.apply_overrides(cfg, seed=args.seed, samples=args.samples, units=args.units,
                              snr=args.snr, method=args.method)


def _cache_dir(args):
    return getattr(args, "cache_dir", None) or sc.default_cache_dir()


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scale(cfg):
    return BITS_PER_NAT if cfg["run"]["units"] == "bits" else 1.0


def _seed(cfg):
    return cfg["run"]["seed"] if cfg["run"]["seed"] is not None else 0


def cmd_rd(args):
    cfg = _load(args)
    prob = sc.build_problem(cfg)
    d = prob.distortions
    try:
        if cfg["kind"] == "discrete":
            val = semantic_rd_discrete(prob.source, d).value
        else:
            val = semantic_rd_gaussian(prob.source, d).value
    except InfeasibleDistortionError:
        val = math.inf
    u = cfg["run"]["units"]
    _emit(f"# units={u}\nD_s,D_x,R\n{d.d_s_max!r},{d.d_x_max!r},{sc._fmt(val * _scale(cfg))}\n",
          args.out)
    return EXIT_OK


def cmd_capacity(args):
    cfg = _load(args)
    ch = sc.build_channel(cfg)
    u = cfg["run"]["units"]
    if cfg["kind"] == "discrete":
        val, se = dmc_capacity(ch), math.nan
    else:
        est = ergodic_capacity(ch, cfg["run"]["n_samples"], _seed(cfg))
        val, se = est.value, est.std_error
    s = _scale(cfg)
    _emit(f"# units={u} snr={cfg['run']['snr_convention']}\ncapacity,std_error\n"
          f"{sc._fmt(val * s)},{sc._fmt(se * s)}\n", args.out)
    return EXIT_OK


def _records_out(cfg, args, records):
    _emit(sc.records_to_csv(records, sc.csv_stamp(cfg)), args.out)
    return EXIT_OK


def cmd_exponent_dmc(args):
    cfg = _load(args)
    if cfg["kind"] != "discrete":
        raise UsageError("exponent-dmc needs problem.kind = \"discrete\"")
    cfg.pop("sweep", None)
    records = []
    for bound in ("upper", "lower"):
        c = dict(cfg, run=dict(cfg["run"], bound=bound))
        rec = sc.run_scenario(c, cache_dir=_cache_dir(args), timing=args.timing)[0]
        records.append(sc.ResultRecord(**{**rec.__dict__, "axis_name": "bound",
                                          "axis_value": bound}))
    return _records_out(cfg, args, records)


def cmd_exponent_mimo(args):
    cfg = _load(args)
    if cfg["kind"] != "gaussian-mimo":
        raise UsageError("exponent-mimo needs problem.kind = \"gaussian-mimo\"")
    cfg.pop("sweep", None)
    return _records_out(cfg, args, sc.run_scenario(cfg, cache_dir=_cache_dir(args),
                                                   timing=args.timing))


def cmd_sweep(args):
    cfg = _load(args)
    if "sweep" not in cfg:
        raise UsageError("sweep needs a [sweep] section in the scenario")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    records = sc.run_scenario(cfg, workers=args.workers, cache_dir=_cache_dir(args),
                              timing=args.timing)
    return _records_out(cfg, args, records)


def cmd_validate(args):
    checks = run_validation(seed=args.seed)
    print(format_table(checks))
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# plot data


def _write_plot(prefix, data, script):
    with open(prefix + ".dat", "w", encoding="utf-8") as fh:
        fh.write(data)
    with open(prefix + ".gp", "w", encoding="utf-8") as fh:
        fh.write(script)


def plot_records(series, prefix):
    """Data + gnuplot script of E* against the sweep axis, one block per series.

    ``series`` is a list of (label, records). Every series must sweep the
    same axis in the same units and hold at least two records.
    """
    if not series:
        raise UsageError("no records to plot")
    axes = {(recs[0].axis_name, recs[0].units) if recs else None for _, recs in series}
    if len(axes) != 1 or None in axes:
        raise UsageError("mismatched axes: all inputs must share axis name and units")
    for label, recs in series:
        if len(recs) < 2:
            raise UsageError(f"{label}: need at least 2 records to plot, got {len(recs)}")
        if len({r.axis_name for r in recs}) != 1:
            raise UsageError(f"{label}: mixed axis names")
    axis, units = axes.pop()
    blocks = []
    for label, recs in series:
        lines = [f"# {label}", "# axis_value E_star std_error R_star"]
        for r in recs:
            se = 0.0 if math.isnan(r.std_error) else r.std_error
            lines.append(f"{r.axis_value!r} {r.E_star!r} {se!r} {r.R_star!r}")
        blocks.append("\n".join(lines))
    data = "\n\n\n".join(blocks) + "\n"
    name = os.path.basename(prefix)
    plots = ", \\\n     ".join(
        f"'{name}.dat' index {i} using 1:2:3 with yerrorlines title '{label}'"
        for i, (label, _) in enumerate(series))
    script = (f"set terminal pngcairo size 800,600\nset output '{name}.png'\n"
              f"set xlabel '{axis}'\nset ylabel 'E* ({units})'\nset key best\n"
              f"set grid\nplot {plots}\n")
    _write_plot(prefix, data, script)


def plot_curve(cfg, prefix, r_star=None):
    """E_J(R) curve of one MIMO scenario with R_lo, R_hi and R* markers."""
    prob = sc.build_problem(cfg)
    run = cfg["run"]
    from .jscc import jscc_exponent_mimo  # local: only this path needs it
    rep = jscc_exponent_mimo(prob, grid=run["grid"], method=run["method"],
                             n_samples=run["n_samples"], seed=_seed(cfg))
    if r_star is None and rep.interval.lo < rep.interval.hi:
        r_star = optimal_code_rate(prob, rep.rho_star, run["n_samples"], _seed(cfg),
                                   rep.interval).value
    s = _scale(cfg)
    lines = ["# R E_J"] + [f"{r * s!r} {e * s!r}" for r, e in rep.curve.points]
    name = os.path.basename(prefix)
    marks = [("R_lo", rep.interval.lo), ("R_hi", rep.interval.hi), ("R*", r_star),
             ("argmin", rep.r_star)]
    arrows = "".join(
        f"set arrow from {v * s!r}, graph 0 to {v * s!r}, graph 1 nohead dt 2\n"
        f"set label '{k}' at {v * s!r}, graph 0.95\n"
        for k, v in marks if v is not None and np.isfinite(v))
    u = run["units"]
    script = (f"set terminal pngcairo size 800,600\nset output '{name}.png'\n"
              f"set xlabel 'code rate R ({u})'\nset ylabel 'E_J ({u})'\nset grid\n"
              f"{arrows}plot '{name}.dat' using 1:2 with lines title 'E_J(R)'\n")
    _write_plot(prefix, "\n".join(lines) + "\n", script)
    return rep, convexity_report(rep.curve)


def cmd_plot_data(args):
    if args.inputs:
        series = []
        for path in args.inputs:
            try:
                with open(path, encoding="utf-8") as fh:
                    recs = sc.read_records(fh.read())
            except ValueError as exc:
                raise UsageError(f"{path}: {exc}") from None
            series.append((os.path.splitext(os.path.basename(path))[0], recs))
        plot_records(series, args.out)
        return EXIT_OK
    if not args.config:
        raise UsageError("plot-data needs result CSVs or --config")
    cfg = _load(args)
    if cfg["kind"] != "gaussian-mimo":
        raise UsageError("curve plots need problem.kind = \"gaussian-mimo\"")
    plot_curve(cfg, args.out)
    return EXIT_OK


COMMANDS = {"rd": cmd_rd, "exponent-dmc": cmd_exponent_dmc,
            "exponent-mimo": cmd_exponent_mimo, "capacity": cmd_capacity,
            "sweep": cmd_sweep, "validate": cmd_validate, "plot-data": cmd_plot_data}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors by exiting
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (sc.ConfigError, UsageError) as exc:
        print(f"semantic-jscc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDistortionError as exc:
        print(f"semantic-jscc: infeasible: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"semantic-jscc: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
