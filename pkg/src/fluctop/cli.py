"""Command line front end.

Subcommands map one-to-one onto pipeline stages:

    tabulate        measure raw operator columns over the configured grid
    fit             fit a quadratic surrogate to a saved table
    stencil         decompose a fit into base and gradient stencils
    evolve          run the surrogate dynamics from the configured profile
    reference       run the closed-form dynamics from the same profile
    compare         run both side by side and record error norms
    probe-locality  measure one far-off-diagonal entry
    probe-bias      re-measure one column at half the sampling window

Exit codes: 0 success, 1 usage or configuration problem, 2 numerical
failure (blow-up, rank deficiency, absorbed lattice).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PRESETS, RunConfig, load_config, preset, save_config
from .errors import (AbsorbedStateError, ConfigError, DomainError,
                     NonPositiveDensityError, RankDeficientError, SchemaError)
from .estimator import (ProfilePoint, RawOperatorTable, bias_probe,
                        locality_probe, tabulate)
from .opmodel import fit_table, load_fit, save_fit, stencil_decompose
from .solver import evolve_and_compare, evolve_field

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

_NUMERICAL = (NonPositiveDensityError, RankDeficientError, AbsorbedStateError,
              FloatingPointError)


class _ArgumentParser(argparse.ArgumentParser):
    """Raise instead of exiting so usage errors share the config exit code."""

    def error(self, message):
        raise ConfigError(message)


def _add_config_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS),
                     help="named built-in configuration")
    src.add_argument("--config", type=Path, metavar="FILE",
                     help="JSON configuration file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the master seed")
    p.add_argument("--workers", type=int, default=None,
                   help="override the estimator worker count")


def _resolve_config(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else load_config(args.config)
    return cfg.with_overrides(master_seed=args.seed, workers=args.workers)


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _point_from_args(args) -> ProfilePoint:
    return ProfilePoint(0, args.rho, args.grad)


def _probe_params(cfg: RunConfig, args):
    params = cfg.estimator
    if args.realizations is not None:
        from dataclasses import replace
        params = replace(params, realizations=args.realizations)
    return params


def _write_report(report: dict, out: Path | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")
        log.info("wrote %s", out)


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_tabulate(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args.out)
    save_config(cfg, out / "config.json")
    points = cfg.grid.build_points()
    log.info("tabulating %d probe points at L=%d, R=%d", len(points),
             cfg.estimator.lattice_size, cfg.estimator.realizations)
    table = tabulate(points, cfg.estimator, cfg.master_seed)
    table.save(out / "table.csv")
    n_bad = len(table.rows) - len(table.complete_rows())
    print(f"tabulated {len(table.rows)} points "
          f"({n_bad} failed) -> {out / 'table.csv'}")
    return EXIT_NUMERICAL if n_bad == len(table.rows) else EXIT_OK


def _cmd_fit(args) -> int:
    table = RawOperatorTable.load(args.table)
    fit = fit_table(table, constrained=not args.unconstrained,
                    weighted=args.weighted)
    save_fit(fit, args.out)
    rms = ", ".join(f"{c}={v:.4g}" for c, v in
                    zip(("sub", "diag", "super"), fit.residual_rms))
    print(f"fit {fit.n_points} rows (residual rms {rms}) -> {args.out}")
    return EXIT_OK


def _cmd_stencil(args) -> int:
    fit = load_fit(args.fit)
    report = stencil_decompose(fit, rho_ref=args.rho_ref)
    _write_report(report.as_dict(), args.out)
    return EXIT_OK


def _solver_section(cfg: RunConfig):
    if cfg.solver is None:
        raise ConfigError("this configuration has no solver section")
    return cfg.solver


def _cmd_evolve(args) -> int:
    cfg = _resolve_config(args)
    sol = _solver_section(cfg)
    fit = load_fit(args.fit)
    out = _out_dir(args.out)
    save_config(cfg, out / "config.json")
    result = evolve_field(sol.build_initial_field(), sol.horizon, fit=fit,
                          n_snapshots=sol.n_snapshots, safety=sol.safety)
    result.write_trajectory(out / "trajectory.csv")
    print(f"evolved to t={sol.horizon:g} in {result.n_steps} steps "
          f"({result.extrapolated_evaluations} extrapolated evaluations) "
          f"-> {out / 'trajectory.csv'}")
    return EXIT_OK


def _cmd_reference(args) -> int:
    cfg = _resolve_config(args)
    sol = _solver_section(cfg)
    out = _out_dir(args.out)
    save_config(cfg, out / "config.json")
    result = evolve_field(sol.build_initial_field(), sol.horizon, fit=None,
                          n_snapshots=sol.n_snapshots, safety=sol.safety)
    result.write_trajectory(out / "trajectory.csv")
    print(f"evolved reference dynamics to t={sol.horizon:g} "
          f"in {result.n_steps} steps -> {out / 'trajectory.csv'}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    sol = _solver_section(cfg)
    fit = load_fit(args.fit)
    out = _out_dir(args.out)
    save_config(cfg, out / "config.json")
    result = evolve_and_compare(sol.build_initial_field(), fit, sol.horizon,
                                n_snapshots=sol.n_snapshots, safety=sol.safety)
    result.write_trajectory(out / "trajectory.csv")
    result.write_errors(out / "errors.csv")
    print(f"compared over t<={sol.horizon:g}: max rel Linf "
          f"{result.max_rel_linf:.3e}, {result.n_steps} steps, "
          f"{result.extrapolated_evaluations} extrapolated evaluations")
    return EXIT_OK


def _cmd_probe_locality(args) -> int:
    cfg = _resolve_config(args)
    params = _probe_params(cfg, args)
    point = _point_from_args(args)
    rep = locality_probe(point, params, cfg.master_seed, args.separation)
    verdict = "consistent with zero" if rep.consistent_with_zero() else \
        "NOT consistent with zero"
    _write_report({
        "separation": rep.separation,
        "entry": rep.entry,
        "stderr": rep.stderr,
        "diag_entry": rep.diag_entry,
        "consistent_with_zero": rep.consistent_with_zero(),
    }, args.out)
    print(f"K[b+{rep.separation}, b] = {rep.entry:.4g} +- {rep.stderr:.4g} "
          f"(diagonal {rep.diag_entry:.4g}): {verdict}")
    return EXIT_OK


def _cmd_probe_bias(args) -> int:
    cfg = _resolve_config(args)
    params = _probe_params(cfg, args)
    point = _point_from_args(args)
    rep = bias_probe(point, params, cfg.master_seed)
    verdict = "consistent" if rep.consistent() else "INCONSISTENT"
    _write_report({
        "window": rep.window,
        "full_entries": list(rep.full.entries),
        "half_entries": list(rep.half.entries),
        "combined_stderr": list(rep.combined_stderr()),
        "in_small_window_regime": rep.in_small_window_regime,
        "consistent": rep.consistent(),
    }, args.out)
    print(f"window {rep.window:g} vs {rep.window / 2:g}: {verdict} "
          f"(small-window regime: {rep.in_small_window_regime})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    p = _ArgumentParser(prog="fluctop",
                        description="fluctuation-based operator discovery "
                                    "for a lattice particle system")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true",
                   help="log progress to stderr")
    # SUPPRESS keeps a pre-subcommand -v from being reset by the subparser
    common = _ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True,
                           parser_class=_ArgumentParser)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    t = add_parser("tabulate", help="measure operator columns on a grid")
    _add_config_source(t)
    t.add_argument("--out", type=Path, required=True, metavar="DIR")
    t.set_defaults(func=_cmd_tabulate)

    f = add_parser("fit", help="fit a quadratic surrogate to a table")
    f.add_argument("--table", type=Path, required=True, metavar="CSV")
    f.add_argument("--out", type=Path, required=True, metavar="JSON")
    f.add_argument("--unconstrained", action="store_true",
                   help="drop the zero-column-sum constraint")
    f.add_argument("--weighted", action="store_true",
                   help="weight rows by inverse variance")
    f.set_defaults(func=_cmd_fit)

    s = add_parser("stencil", help="decompose a fit into stencils")
    s.add_argument("--fit", type=Path, required=True, metavar="JSON")
    s.add_argument("--rho-ref", type=float, default=7.0)
    s.add_argument("--out", type=Path, default=None, metavar="JSON")
    s.set_defaults(func=_cmd_stencil)

    for name, fn, needs_fit in (("evolve", _cmd_evolve, True),
                                ("reference", _cmd_reference, False),
                                ("compare", _cmd_compare, True)):
        e = add_parser(name, help=f"{name} the configured initial profile")
        _add_config_source(e)
        if needs_fit:
            e.add_argument("--fit", type=Path, required=True, metavar="JSON")
        e.add_argument("--out", type=Path, required=True, metavar="DIR")
        e.set_defaults(func=fn)

    pl = add_parser("probe-locality", help="measure a far off-diagonal entry")
    _add_config_source(pl)
    pl.add_argument("--rho", type=float, default=7.0)
    pl.add_argument("--grad", type=float, default=0.0)
    pl.add_argument("--separation", type=int, default=2)
    pl.add_argument("--realizations", type=int, default=None)
    pl.add_argument("--out", type=Path, default=None, metavar="JSON")
    pl.set_defaults(func=_cmd_probe_locality)

    pb = add_parser("probe-bias", help="halve the window and re-measure")
    _add_config_source(pb)
    pb.add_argument("--rho", type=float, default=7.0)
    pb.add_argument("--grad", type=float, default=0.0)
    pb.add_argument("--realizations", type=int, default=None)
    pb.add_argument("--out", type=Path, default=None, metavar="JSON")
    pb.set_defaults(func=_cmd_probe_bias)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
