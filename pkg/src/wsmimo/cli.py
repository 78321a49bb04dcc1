"""Command-line front end.

Subcommands mirror the pipeline stages: ``simulate`` writes the partially
observed per-pair matrices, ``complete`` recovers them and reports errors,
``localize`` runs the estimators, ``af`` and ``crlb`` produce the analysis
surfaces/bounds, ``sweep`` runs the Monte Carlo grid, and ``run`` executes
the whole recover-locate-speed chain for one cell.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 completed with unconverged pairs (results still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import ambiguity, crlb, effective_bandwidth
from .config import ConfigError, ExperimentConfig, default_config, parse_config
from .estimation import SearchGrid
from .pipeline import (build_context, derive_seed, emit_report, emit_sweep,
                       report_to_dict, run_pipeline, sweep)
from .scene import add_noise, save_matrix_csv, subsample

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_NONCONVERGED = 3


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    out = args.out or os.environ.get("WSMIMO_OUT") or cfg.out_dir
    fmt = args.format or cfg.out_format
    threads = args.threads or int(os.environ.get("WSMIMO_THREADS", 0)) or cfg.threads
    return replace(cfg, out_dir=out, out_format=fmt, threads=threads)


def _cell_args(cfg: ExperimentConfig, args) -> tuple[float, float, int]:
    snr = cfg.snr_db[0] if args.snr is None else args.snr
    rate = cfg.sampling_rate[0] if args.rate is None else args.rate
    return snr, rate, args.trial


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    ctx = build_context(cfg)
    snr, rate, trial = _cell_args(cfg, args)
    out = Path(cfg.out_dir) / "matrices"
    out.mkdir(parents=True, exist_ok=True)
    for pair, clean in ctx.clean.items():
        noisy = add_noise(clean, snr, derive_seed(cfg.master_seed, "noise", *pair, trial))
        partial = subsample(noisy, rate, derive_seed(cfg.master_seed, "mask", *pair, trial))
        save_matrix_csv(partial, out / f"pair_t{pair[0]}_r{pair[1]}.csv")
        save_matrix_csv(clean, out / f"clean_t{pair[0]}_r{pair[1]}.csv")
    print(f"wrote {2 * len(ctx.clean)} matrices to {out}")
    return EXIT_OK


def _cmd_complete(args) -> int:
    cfg = _load_config(args)
    cfg = replace(cfg, estimate_geometric=False, estimate_velocity=False,
                  estimate_subsampled=False)
    snr, rate, trial = _cell_args(cfg, args)
    report = run_pipeline(cfg, snr, rate, trial)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "recovery_errors.csv"
    with open(path, "w") as fh:
        fh.write("tx,rx,relative_error,converged\n")
        n_tx, n_rx = report.pair_errors.shape
        for m in range(n_tx):
            for n in range(n_rx):
                fh.write(f"{m},{n},{report.pair_errors[m, n]!r},"
                         f"{int(report.converged[m, n])}\n")
    print(f"pair-averaged relative error: {report.mean_error:.4%} -> {path}")
    return EXIT_OK if report.converged.all() else EXIT_NONCONVERGED


def _cmd_localize(args) -> int:
    cfg = _load_config(args)
    snr, rate, trial = _cell_args(cfg, args)
    report = run_pipeline(cfg, snr, rate, trial, keep_surfaces=True)
    emit_report(report, cfg.out_dir, cfg.out_format)
    rec = report.recovered
    print(f"ml position: {rec.position_ml}, geometric: {rec.position_geometric}, "
          f"velocity: {rec.velocity_ml}")
    return EXIT_OK if report.converged.all() else EXIT_NONCONVERGED


def _cmd_af(args) -> int:
    cfg = _load_config(args)
    ctx = build_context(cfg)
    region = ctx.scene.geometry.region
    step = args.grid_step or 2.0 * cfg.grids.position_step
    if args.axes == "position":
        grid = SearchGrid.regular(region.x_min, region.x_max,
                                  region.y_min, region.y_max, step)
    else:
        grid = SearchGrid.regular(cfg.grids.velocity_min, cfg.grids.velocity_max,
                                  cfg.grids.velocity_min, cfg.grids.velocity_max,
                                  cfg.grids.velocity_step)
    target = ctx.scene.targets[0]
    surf = ambiguity(target.position, target.velocity, grid, ctx.scene.geometry,
                     ctx.codes, ctx.window, cfg.radar.n_pulses, cfg.radar.t_pri,
                     cfg.radar.f_c, axes=args.axes,
                     sampling_rate=args.rate if args.rate is not None else 1.0,
                     seed=derive_seed(cfg.master_seed, "af-mask"))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rate_tag = f"{surf.sampling_rate:g}"
    path = out / f"af_{args.axes}_rate{rate_tag}.csv"
    surf.grid.to_csv(path)
    print(f"ambiguity surface ({args.axes}, rate {rate_tag}) -> {path}")
    return EXIT_OK


def _cmd_crlb(args) -> int:
    cfg = _load_config(args)
    geo = cfg.geometry.build()
    codes = cfg.build_codes()
    beta = effective_bandwidth(codes.codes[0], codes.sample_rate)
    snr_db = cfg.snr_db[0] if args.snr is None else args.snr
    target = cfg.targets[0][:2]
    rep = crlb(geo, target, snr=10.0 ** (snr_db / 10.0), f_c=cfg.radar.f_c,
               beta_eff=beta, reflectivity=cfg.reflectivity)
    payload = {
        "snr_db": snr_db,
        "target": list(target),
        "beta_eff_hz": rep.beta_eff,
        "e_x": rep.e_x,
        "e_y": rep.e_y,
        "sigma2_x_m2": rep.sigma2_x,
        "sigma2_y_m2": rep.sigma2_y,
    }
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.out_format == "json":
        path = out / "crlb.json"
        path.write_text(json.dumps(payload, indent=2))
    else:
        path = out / "crlb.csv"
        with open(path, "w") as fh:
            fh.write(",".join(payload.keys()) + "\n")
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in payload.values()) + "\n")
    print(f"sigma_x = {np.sqrt(rep.sigma2_x):.3e} m, "
          f"sigma_y = {np.sqrt(rep.sigma2_y):.3e} m -> {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = sweep(cfg, threads=cfg.threads)
    written = emit_sweep(result, cfg.out_dir, cfg.out_format)
    n_failed = sum(1 for c in result.cells if c.failed)
    print(f"{len(result.cells)} trials ({n_failed} failed) -> {written[0].parent}")
    if n_failed == len(result.cells):
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    snr, rate, trial = _cell_args(cfg, args)
    report = run_pipeline(cfg, snr, rate, trial, keep_surfaces=args.surfaces)
    emit_report(report, cfg.out_dir, cfg.out_format)
    print(json.dumps(report_to_dict(report), indent=2, default=str))
    return EXIT_OK if report.converged.all() else EXIT_NONCONVERGED


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="experiment config file (INI)")
    sub.add_argument("--seed", type=int, help="override the master seed")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--threads", type=int, help="worker thread cap")
    sub.add_argument("--format", choices=("csv", "json"), help="output format")


def _add_cell(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--snr", type=float, help="SNR in dB (default: first sweep value)")
    sub.add_argument("--rate", type=float, help="sampling rate in (0, 1]")
    sub.add_argument("--trial", type=int, default=0, help="trial index for seeding")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsmimo",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    for name, fn, cell in (("simulate", _cmd_simulate, True),
                           ("complete", _cmd_complete, True),
                           ("localize", _cmd_localize, True),
                           ("sweep", _cmd_sweep, False),
                           ("run", _cmd_run, True)):
        sub = subs.add_parser(name)
        _add_common(sub)
        if cell:
            _add_cell(sub)
        sub.set_defaults(func=fn)
    run_sub = [s for s in subs.choices.values()][-1]
    run_sub.add_argument("--surfaces", action="store_true",
                         help="persist the ML search surfaces")

    af = subs.add_parser("af")
    _add_common(af)
    af.add_argument("--axes", choices=("position", "velocity"), default="position")
    af.add_argument("--rate", type=float, help="template sampling rate (default 1.0)")
    af.add_argument("--grid-step", type=float, help="surface grid step")
    af.set_defaults(func=_cmd_af)

    cr = subs.add_parser("crlb")
    _add_common(cr)
    cr.add_argument("--snr", type=float, help="SNR in dB")
    cr.set_defaults(func=_cmd_crlb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
