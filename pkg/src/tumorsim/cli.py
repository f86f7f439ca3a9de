"""Command line entry point: ``tumorsim run|preset|verify|cfl``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from . import constitutive as cst
from .config import PRESETS, init_fields, parse_config, preset, rescale, serialize_config
from .errors import ConfigError, OutputError, TumorSimError
from .runner import run, verify
from .stepper import cfl_macro, cfl_sub, sub_bounds

log = logging.getLogger("tumorsim")


def _load(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    out = args.out or cfg.out_dir
    result = run(cfg, out)
    print(f"done: {len(result.dts)} steps to t={result.state.t:.6g}, "
          f"{len(result.violations)} violation(s), outputs in {out}")
    return 2 if result.violations else 0


def cmd_preset(args) -> int:
    cfg = preset(args.name)
    if args.h:
        cfg = rescale(cfg, _mesh_width(args.h))
    text = serialize_config(cfg)
    if args.emit:
        try:
            Path(args.emit).write_text(text)
        except OSError as exc:
            raise OutputError(f"cannot write {args.emit}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return 0


def _mesh_width(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a mesh width: {text!r}") from None


def cmd_verify(args) -> int:
    cfg = _load(args.config)
    report = verify(cfg, args.mode, seed=args.seed)
    print(report.to_json())
    return 0 if report.passed else 2


def cmd_cfl(args) -> int:
    cfg = _load(args.config)
    state, scheme = init_fields(cfg)
    p, g = cfg.model, scheme.grid
    macro = cfl_macro(state.W, p, cfg.kappa)
    out = {
        "h": g.h,
        "kappa": cfg.kappa,
        "phi_sup": cst.phi_sup(p),
        "density_growth_sup": cst.density_growth_sup(p),
        "n_bar_inf": macro.n_bar,
        "max_grad_W": macro.max_grad_w,
        "transport_bound": macro.transport_bound,
        "pressure_bound": macro.pressure_bound,
        "positivity_bound": macro.positivity_bound,
        "dt_cap": macro.cap,
        "dt": macro.dt,
    }
    for k in ("c", "q"):
        b1, b2 = sub_bounds(p, macro.dt, g.h, g.dim, macro.n_bar, k)
        dt_k, count = cfl_sub(p, macro.dt, g.h, g.dim, macro.n_bar, k, cfg.kappa)
        out[f"{k}_bounds"] = [b1, b2]
        out[f"dt_{k}"] = dt_k
        out[f"n_sub_{k}"] = count
    print(json.dumps(out, indent=1, default=float))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tumorsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a configuration to time.t_end")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="emit one of the experiment configurations")
    p.add_argument("--name", required=True, choices=PRESETS)
    p.add_argument("--emit", help="write to this path instead of stdout")
    p.add_argument("--h", help="override the mesh width, e.g. 1/16")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("verify", help="run a verification battery")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True, choices=("invariants", "convergence", "manufactured"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cfl", help="print the step-size bounds for the initial state")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_cfl)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TumorSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
