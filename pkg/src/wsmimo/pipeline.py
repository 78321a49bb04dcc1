"""End-to-end experiment orchestration: seeding, the recover-then-estimate
pipeline, Monte Carlo sweeps over (SNR, sampling rate), and CSV/JSON emission.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .completion import SvtParams, estimate_noise_var, noise_delta, relative_error, svt_complete
from .config import ExperimentConfig
from .estimation import SearchGrid, geometric_localize, ml_localize, ml_velocity, td_estimate
from .geometry import RangeWindow, common_range_window
from .scene import PulseDataMatrix, add_noise, subsample, synthesize_clean

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(master: int, *parts: int | str) -> int:
    """Stable 64-bit substream key from a master seed and context fields.

    The master seed is diffused through splitmix64, then each part (integers
    as-is, strings through FNV-1a) is XOR-folded in and rediffused.  The
    mixing is platform-independent, so a (purpose, pair, trial) tuple always
    maps to the same generator stream regardless of execution order.
    """
    x = _splitmix64(master & _MASK64)
    for part in parts:
        val = _fnv1a64(part) if isinstance(part, str) else (int(part) & _MASK64)
        x = _splitmix64(x ^ val)
    return x


def mse_points(estimates, truths) -> float:
    """Mean squared position error, sum_i |p_hat_i - p_i|^2 / K.

    Estimates are matched to truths by the permutation with the smallest
    total squared error (identity for a single target).
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truths, dtype=float))
    if est.shape != tru.shape:
        raise ValueError("estimates and truths must have matching shapes")
    k = tru.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(k)):
        total = float(np.sum((est[list(perm)] - tru) ** 2))
        best = min(best, total)
    return best / k


@dataclass
class EstimateSet:
    """Estimates produced from one version of the data (recovered or raw)."""

    position_ml: np.ndarray | None = None
    velocity_ml: np.ndarray | None = None
    position_geometric: np.ndarray | None = None
    mse_position_ml: float | None = None
    mse_position_geometric: float | None = None
    mse_velocity_ml: float | None = None


@dataclass
class EstimationReport:
    """Everything one pipeline run produces (Algorithm: recover, locate, speed)."""

    snr_db: float
    sampling_rate: float
    trial: int
    pair_errors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    mean_error: float = math.nan
    converged: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), bool))
    noise_var: float = math.nan
    recovered: EstimateSet = field(default_factory=EstimateSet)
    subsampled: EstimateSet | None = None
    runtimes: dict[str, float] = field(default_factory=dict)
    surfaces: dict[str, SearchGrid] = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineContext:
    """Reusable per-configuration state (geometry, codes, window, grids)."""

    cfg: ExperimentConfig
    scene: object
    codes: object
    window: RangeWindow
    position_grid: SearchGrid
    velocity_grid: SearchGrid
    clean: dict[tuple[int, int], PulseDataMatrix]


def build_context(cfg: ExperimentConfig) -> PipelineContext:
    scene = cfg.build_scene()
    codes = cfg.build_codes()
    window = common_range_window(scene.geometry, cfg.radar.sample_interval)
    region = scene.geometry.region
    pos_grid = SearchGrid.regular(region.x_min, region.x_max, region.y_min,
                                  region.y_max, cfg.grids.position_step)
    vel_grid = SearchGrid.regular(cfg.grids.velocity_min, cfg.grids.velocity_max,
                                  cfg.grids.velocity_min, cfg.grids.velocity_max,
                                  cfg.grids.velocity_step)
    clean = {pair: synthesize_clean(scene, pair, codes, window)
             for pair in scene.geometry.pairs()}
    return PipelineContext(cfg=cfg, scene=scene, codes=codes, window=window,
                           position_grid=pos_grid, velocity_grid=vel_grid, clean=clean)


def _complete_pair(ctx: PipelineContext, pair, snr_db, rate, trial):
    """Synthesize -> noise -> subsample -> SVT for one pair; returns
    (partial, recovered matrix or None, eps, converged, sigma2)."""
    cfg = ctx.cfg
    seed_noise = derive_seed(cfg.master_seed, "noise", pair[0], pair[1], trial)
    seed_mask = derive_seed(cfg.master_seed, "mask", pair[0], pair[1], trial)
    clean = ctx.clean[pair]
    noisy = add_noise(clean, snr_db, seed_noise)
    partial = subsample(noisy, rate, seed_mask)

    if ctx.cfg.svt.noise == "none" or partial.noise_var == 0.0:
        delta = None
    elif ctx.cfg.svt.noise == "estimate":
        delta = noise_delta(partial.h, estimate_noise_var(partial))
    else:
        delta = noise_delta(partial.h, partial.noise_var)
    params = SvtParams(threshold=cfg.svt.threshold, step=cfg.svt.step,
                       tol=cfg.svt.tol, max_iters=cfg.svt.max_iters,
                       noise_delta=delta)
    result = svt_complete(partial, params)
    eps = relative_error(clean.values, result.matrix)
    return partial, result.matrix, eps, result.converged, noisy.noise_var


def _estimate(ctx: PipelineContext, matrices, noise_vars, *, velocity: bool,
              geometric: bool, surfaces: dict | None, tag: str) -> EstimateSet:
    cfg = ctx.cfg
    scene = ctx.scene
    out = EstimateSet()
    truth_pos = np.array([t.position for t in scene.targets])
    truth_vel = np.array([t.velocity for t in scene.targets])

    loc = ml_localize(matrices, scene.geometry, ctx.codes, ctx.window,
                      ctx.position_grid, noise_vars)
    out.position_ml = loc.position
    out.mse_position_ml = mse_points(loc.position[None, :], truth_pos[:1])
    if surfaces is not None:
        surfaces[f"{tag}_ml_position"] = loc.surface

    if velocity:
        vel = ml_velocity(matrices, loc.position, scene.geometry, ctx.codes,
                          ctx.window, ctx.velocity_grid, cfg.radar.t_pri,
                          cfg.radar.f_c)
        out.velocity_ml = vel.velocity
        out.mse_velocity_ml = mse_points(vel.velocity[None, :], truth_vel[:1])
        if surfaces is not None:
            surfaces[f"{tag}_ml_velocity"] = vel.surface

    if geometric:
        ranges = td_estimate(matrices, ctx.codes, ctx.window,
                             scene.geometry.n_tx, scene.geometry.n_rx)
        sample_var = ctx.window.range_step ** 2 / 12.0  # integer-sample quantization
        geo = geometric_localize(ranges, scene.geometry, range_var=sample_var)
        out.position_geometric = geo.position
        out.mse_position_geometric = mse_points(geo.position[None, :], truth_pos[:1])
    return out


def run_pipeline(cfg: ExperimentConfig, snr_db: float | None = None,
                 rate: float | None = None, trial: int = 0,
                 context: PipelineContext | None = None,
                 keep_surfaces: bool = False,
                 threads: int | None = None) -> EstimationReport:
    """One full pass: per-pair recovery, then ML position/velocity (and the
    geometric method) on the recovered and, optionally, the raw subsampled data.
    """
    ctx = context if context is not None else build_context(cfg)
    snr = cfg.snr_db[0] if snr_db is None else snr_db
    rt = cfg.sampling_rate[0] if rate is None else rate
    threads = cfg.threads if threads is None else threads
    pairs = list(ctx.scene.geometry.pairs())

    # BLAS is pinned to one thread so results are bit-identical for every
    # worker count (summation order never changes) and small-matrix LAPACK
    # calls avoid thread-pool contention; parallelism happens pair-level.
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = list(pool.map(lambda p: _complete_pair(ctx, p, snr, rt, trial),
                                     pairs))
        else:
            done = [_complete_pair(ctx, p, snr, rt, trial) for p in pairs]
    t_complete = time.perf_counter() - t0

    n_tx, n_rx = ctx.scene.geometry.n_tx, ctx.scene.geometry.n_rx
    report = EstimationReport(snr_db=snr, sampling_rate=rt, trial=trial,
                              pair_errors=np.zeros((n_tx, n_rx)),
                              converged=np.zeros((n_tx, n_rx), bool))
    partials, recovered, noise_vars = {}, {}, {}
    for pair, (partial, zhat, eps, conv, sig2) in zip(pairs, done):
        partials[pair] = partial
        recovered[pair] = zhat
        noise_vars[pair] = sig2 if sig2 and sig2 > 0 else 1.0
        report.pair_errors[pair] = eps
        report.converged[pair] = conv
    report.mean_error = float(report.pair_errors.mean())
    report.noise_var = float(np.mean(list(noise_vars.values())))
    report.runtimes["complete"] = t_complete

    surfaces = report.surfaces if keep_surfaces else None
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        report.recovered = _estimate(ctx, recovered, noise_vars,
                                     velocity=cfg.estimate_velocity,
                                     geometric=cfg.estimate_geometric,
                                     surfaces=surfaces, tag="recovered")
        if cfg.estimate_subsampled:
            report.subsampled = _estimate(ctx, partials, noise_vars,
                                          velocity=cfg.estimate_velocity,
                                          geometric=cfg.estimate_geometric,
                                          surfaces=surfaces, tag="subsampled")
    report.runtimes["estimate"] = time.perf_counter() - t0
    return report


@dataclass
class SweepCell:
    snr_db: float
    sampling_rate: float
    trial: int
    mean_error: float = math.nan
    mse_ml_recovered: float = math.nan
    mse_ml_subsampled: float = math.nan
    mse_geo_recovered: float = math.nan
    mse_geo_subsampled: float = math.nan
    mse_vel_recovered: float = math.nan
    mse_vel_subsampled: float = math.nan
    converged_pairs: int = 0
    failed: bool = False
    error: str = ""
    runtime: float = math.nan


_CELL_COLUMNS = ("snr_db", "sampling_rate", "trial", "mean_error",
                 "mse_ml_recovered", "mse_ml_subsampled", "mse_geo_recovered",
                 "mse_geo_subsampled", "mse_vel_recovered", "mse_vel_subsampled",
                 "converged_pairs", "failed", "error", "runtime")


@dataclass
class SweepResult:
    config: ExperimentConfig
    cells: list[SweepCell] = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        """Mean and standard error per (snr, rate) over the non-failed trials."""
        rows = []
        for snr in self.config.snr_db:
            for rate in self.config.sampling_rate:
                sel = [c for c in self.cells
                       if c.snr_db == snr and c.sampling_rate == rate and not c.failed]
                n_fail = sum(1 for c in self.cells
                             if c.snr_db == snr and c.sampling_rate == rate and c.failed)
                row = {"snr_db": snr, "sampling_rate": rate,
                       "trials": len(sel), "failed": n_fail}
                for name in _CELL_COLUMNS[3:10]:
                    vals = np.array([getattr(c, name) for c in sel], dtype=float)
                    vals = vals[np.isfinite(vals)]
                    row[f"{name}_mean"] = float(vals.mean()) if vals.size else math.nan
                    row[f"{name}_stderr"] = (float(vals.std(ddof=1) / math.sqrt(vals.size))
                                             if vals.size > 1 else math.nan)
                rows.append(row)
        return rows


def _cell_from_report(report: EstimationReport, runtime: float) -> SweepCell:
    cell = SweepCell(snr_db=report.snr_db, sampling_rate=report.sampling_rate,
                     trial=report.trial, mean_error=report.mean_error,
                     converged_pairs=int(report.converged.sum()), runtime=runtime)
    rec, sub = report.recovered, report.subsampled
    if rec.mse_position_ml is not None:
        cell.mse_ml_recovered = rec.mse_position_ml
    if rec.mse_position_geometric is not None:
        cell.mse_geo_recovered = rec.mse_position_geometric
    if rec.mse_velocity_ml is not None:
        cell.mse_vel_recovered = rec.mse_velocity_ml
    if sub is not None:
        if sub.mse_position_ml is not None:
            cell.mse_ml_subsampled = sub.mse_position_ml
        if sub.mse_position_geometric is not None:
            cell.mse_geo_subsampled = sub.mse_position_geometric
        if sub.mse_velocity_ml is not None:
            cell.mse_vel_subsampled = sub.mse_velocity_ml
    return cell


def sweep(cfg: ExperimentConfig, threads: int | None = None,
          context: PipelineContext | None = None) -> SweepResult:
    """Full factorial Monte Carlo over (snr_db x sampling_rate) x trials.

    Failures inside a trial are recorded on the cell (failed flag plus the
    error text) and the sweep continues.
    """
    ctx = context if context is not None else build_context(cfg)
    result = SweepResult(config=cfg)
    for snr in cfg.snr_db:
        for rate in cfg.sampling_rate:
            for trial in range(cfg.trials):
                t0 = time.perf_counter()
                try:
                    report = run_pipeline(cfg, snr, rate, trial, context=ctx,
                                          threads=threads)
                    result.cells.append(
                        _cell_from_report(report, time.perf_counter() - t0))
                except Exception as exc:  # noqa: BLE001 - cell-level isolation
                    result.cells.append(SweepCell(
                        snr_db=snr, sampling_rate=rate, trial=trial,
                        failed=True, error=f"{type(exc).__name__}: {exc}",
                        runtime=time.perf_counter() - t0))
    return result


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _axis_name(snr: float, rate: float) -> str:
    return f"snr{snr:g}_rate{rate:g}"


def emit_sweep(result: SweepResult, out_dir, fmt: str = "csv") -> list[Path]:
    """Write one summary file plus one per-cell trial file, CSV or JSON.

    Naming is deterministic: ``sweep/summary.csv`` and
    ``sweep/<axis-values>.csv``; JSON mirrors the same structure 1:1.
    Timestamps are deliberately excluded so identical runs emit identical bytes.
    """
    base = Path(out_dir) / "sweep"
    base.mkdir(parents=True, exist_ok=True)
    written = []
    summary = result.aggregate()
    cell_rows = {}
    for snr in result.config.snr_db:
        for rate in result.config.sampling_rate:
            rows = [vars(c) for c in result.cells
                    if c.snr_db == snr and c.sampling_rate == rate]
            cell_rows[(snr, rate)] = rows
    if fmt == "csv":
        if summary:
            _write_csv(base / "summary.csv", list(summary[0].keys()), summary)
            written.append(base / "summary.csv")
        for (snr, rate), rows in cell_rows.items():
            path = base / f"{_axis_name(snr, rate)}.csv"
            _write_csv(path, list(_CELL_COLUMNS), rows)
            written.append(path)
    else:
        path = base / "summary.json"
        path.write_text(json.dumps(summary, indent=2, default=_json_default))
        written.append(path)
        for (snr, rate), rows in cell_rows.items():
            path = base / f"{_axis_name(snr, rate)}.json"
            path.write_text(json.dumps(rows, indent=2, default=_json_default))
            written.append(path)
    return written


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"cannot serialize {type(obj)}")


def report_to_dict(report: EstimationReport) -> dict:
    def est(e: EstimateSet | None):
        if e is None:
            return None
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in vars(e).items()}

    return {
        "snr_db": report.snr_db,
        "sampling_rate": report.sampling_rate,
        "trial": report.trial,
        "pair_errors": report.pair_errors.tolist(),
        "mean_error": report.mean_error,
        "converged": report.converged.astype(int).tolist(),
        "noise_var": report.noise_var,
        "recovered": est(report.recovered),
        "subsampled": est(report.subsampled),
        "runtimes": report.runtimes,
    }


def emit_report(report: EstimationReport, out_dir, fmt: str = "csv") -> list[Path]:
    """Persist a single-run report; surfaces (if kept) go out as x,y,value CSV."""
    base = Path(out_dir)
    base.mkdir(parents=True, exist_ok=True)
    written = []
    payload = report_to_dict(report)
    if fmt == "json":
        path = base / "report.json"
        path.write_text(json.dumps(payload, indent=2, default=_json_default))
        written.append(path)
    else:
        path = base / "report.csv"
        flat = _flatten(payload)
        _write_csv(path, list(flat.keys()), [flat])
        written.append(path)
    for name, surf in report.surfaces.items():
        spath = base / f"surface_{name}.csv"
        surf.to_csv(spath)
        written.append(spath)
    return written


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, f"{name}."))
        elif isinstance(val, list):
            out[name] = "[" + ";".join(str(x) for x in np.ravel(val)) + "]"
        elif val is None:
            out[name] = ""
        else:
            out[name] = val
    return out
