"""Command line entry point: ``brlab <command> ...``.

Exit codes: 0 all checks pass, 1 a measurement failed, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import lab
from .errors import BRLabError, ConfigError, DomainError, InputError, ParameterError
from .field import load_field, save_field
from .maximal import (DirectionSet, RectFamily, hl_maximal, kakeya_maximal, powered_maximal,
                      strong_maximal)
from .operators import br_partial, cone_partial_inside, cone_partial_outside, quadrature_for, square_function
from .symbols import cone_window, parse_symbol_spec

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _deltas(s: str):
    try:
        return tuple(lab._parse_delta(x) for x in s.split(","))
    except ValueError as e:
        raise ConfigError(f"bad delta list {s!r}") from e


def _add_experiment(sub, name, help_):
    p = sub.add_parser(name, help=help_)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; overrides flags")
    p.add_argument("--curve")
    p.add_argument("--curves", help="comma-separated presets (lemma suite)")
    p.add_argument("--half-width", type=float)
    p.add_argument("--n", type=int, help="grid points per axis")
    p.add_argument("--deltas", help="comma list, e.g. 2^-4,2^-6,2^-8")
    p.add_argument("--lam", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--n-fields", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ppo", type=int)
    p.add_argument("--r-ppo", type=int)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--out", help="output directory for report.json / report.csv")
    p.set_defaults(kind="experiment", experiment=name)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brlab", description="Curve-adapted Bochner-Riesz laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_experiment(sub, "l2-scaling", "L2 square-function scaling sweep")
    _add_experiment(sub, "l4-scaling", "L4 square-function scaling sweep")
    _add_experiment(sub, "lemmas", "geometric lemma suite")
    _add_experiment(sub, "maximal-domination", "maximal domination chain")

    m = sub.add_parser("maximal", help="apply a maximal operator to a field file")
    m.add_argument("--op", required=True, choices=("hl", "strong", "kakeya", "powered"))
    m.add_argument("--N", type=int, default=16, help="number of directions (kakeya)")
    m.add_argument("--ecc", type=float, default=None, help="max eccentricity length/width (kakeya)")
    m.add_argument("--s", type=float, default=2.0, help="exponent (powered)")
    m.add_argument("--in", dest="inp", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(kind="maximal")

    o = sub.add_parser("op", help="apply a multiplier operator to a field file")
    o.add_argument("name", choices=("br-partial", "square", "cone-inside", "cone-outside"))
    o.add_argument("--curve", default="parabola-b1")
    o.add_argument("--symbol", default="sigma:lambda=0.5", help="e.g. collar:delta=2^-6")
    o.add_argument("--R", type=float, default=1.0)
    o.add_argument("--lam", type=float, default=0.5)
    o.add_argument("--in", dest="inp", required=True)
    o.add_argument("--out", required=True)
    o.set_defaults(kind="op")
    return ap


_FLAG_KEYS = ("curve", "half_width", "n", "lam", "theta", "p", "n_fields", "seed", "ppo", "r_ppo", "n_boot")


def config_from_args(args) -> lab.ExperimentConfig:
    over = {k: getattr(args, k) for k in _FLAG_KEYS}
    if args.deltas:
        over["deltas"] = _deltas(args.deltas)
    if args.curves:
        over["curves"] = tuple(c.strip() for c in args.curves.split(","))
    over["out_dir"] = args.out
    d = {k: v for k, v in over.items() if v is not None}
    if args.config:
        try:
            with open(args.config) as fh:
                file_d = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(file_d, dict):
            raise ConfigError("config must be a JSON object")
        if file_d.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"config is for {file_d['experiment']!r}, not {args.experiment!r}")
        file_d.pop("experiment", None)
        d.update(file_d)
    d["experiment"] = args.experiment
    return lab.ExperimentConfig.from_dict(d)


def _run_experiment(args) -> int:
    cfg = config_from_args(args)
    rep = lab.run(cfg)
    for r in rep.rows:
        if r.verdict != "info":
            d = "" if r.delta is None else f" delta={r.delta:g}"
            print(f"{r.verdict.upper():10s} {r.curve}{d} {r.quantity} = {r.value:.6g} ({r.tolerance})")
    for k, f in rep.fits.items():
        print(f"fit {k}: slope {f.slope:.4f} [{f.interval[0]:.4f}, {f.interval[1]:.4f}]")
    if cfg.out_dir:
        rep.write(cfg.out_dir)
    print("PASS" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _run_maximal(args) -> int:
    f = load_field(args.inp)
    if args.op == "hl":
        out = hl_maximal(f)
    elif args.op == "strong":
        out = strong_maximal(f)
    elif args.op == "powered":
        out = powered_maximal(f, args.s)
    else:
        rects = RectFamily.dyadic(f.grid)
        if args.ecc is not None:
            rects = RectFamily(tuple((l, w) for l, w in rects.pairs if l / w <= args.ecc))
        out = kakeya_maximal(f, DirectionSet.uniform(args.N), rects)
    save_field(out, args.out)
    return EXIT_OK


def _run_op(args) -> int:
    curve = lab.resolve_curve(args.curve)
    f = load_field(args.inp)
    if args.name == "br-partial":
        out = br_partial(f, parse_symbol_spec(args.symbol, curve), args.R)
    elif args.name == "square":
        sym = parse_symbol_spec(args.symbol, curve)
        out = square_function(f, sym, quadrature_for(sym, f))
    elif args.name == "cone-inside":
        out = cone_partial_inside(f, cone_window(curve), curve, args.lam, args.R)
    else:
        out = cone_partial_outside(f, cone_window(curve), curve, args.lam, args.R)
    save_field(out, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "experiment":
            return _run_experiment(args)
        if args.kind == "maximal":
            return _run_maximal(args)
        return _run_op(args)
    except (ConfigError, ParameterError, DomainError, InputError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BRLabError as e:
        print(f"measurement failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
