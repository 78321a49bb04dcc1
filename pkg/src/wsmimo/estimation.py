"""Target parameter estimation from (completed) data matrices.

Position comes from a grid search on the joint negative log-likelihood.  For
a single-target hypothesis the column space of the signal model is one shifted
code, so the projector residual ||P_perp y||^2 = ||y||^2 - |a^H y|^2 / ||a||^2
reduces the search to matched-filter energies, which are precomputed for all
offsets at once.  The geometric alternative linearizes the bistatic-range
equations and solves a two-stage weighted least squares.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import AntennaGeometry, RangeWindow, Target, bistatic_range
from .waveform import PhaseCodeSet


class EstimationError(ValueError):
    """Estimation cannot proceed (bad inputs or degenerate configuration)."""


class DegenerateGeometryError(EstimationError):
    """The linear localization system is rank deficient."""


@dataclass
class SearchGrid:
    """Rectangular search lattice with an optional value surface.

    ``values[ix, iy]`` corresponds to (x[ix], y[iy]); flattening is C-order so
    the first maximum wins ties at the lowest x index, then the lowest y.
    """

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.x.size == 0 or self.y.size == 0:
            raise EstimationError("grid axes must be nonempty")
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.y) <= 0):
            raise EstimationError("grid axes must be strictly increasing")
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.shape != self.shape:
                raise EstimationError(f"values must have shape {self.shape}")
            self.values = v

    @classmethod
    def regular(cls, x_min, x_max, y_min, y_max, step, step_y=None) -> "SearchGrid":
        sy = step if step_y is None else step_y
        if step <= 0 or sy <= 0:
            raise EstimationError("grid steps must be positive")
        x = np.arange(x_min, x_max + step * 0.5, step)
        y = np.arange(y_min, y_max + sy * 0.5, sy)
        return cls(x, y)

    @classmethod
    def over_region(cls, region, step) -> "SearchGrid":
        return cls.regular(region.x_min, region.x_max, region.y_min, region.y_max, step)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.size, self.y.size)

    def points(self) -> np.ndarray:
        """All (x, y) lattice points, C-order flattened to (nx*ny, 2)."""
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def argmax_index(self) -> tuple[int, int]:
        if self.values is None:
            raise EstimationError("grid has no values")
        flat = int(np.nanargmax(self.values))
        return flat // self.y.size, flat % self.y.size

    def argmax_point(self) -> np.ndarray:
        ix, iy = self.argmax_index()
        return np.array([self.x[ix], self.y[iy]])

    def with_values(self, values: np.ndarray) -> "SearchGrid":
        return SearchGrid(self.x, self.y, np.asarray(values, dtype=float))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,y,value\n")
            vals = self.values if self.values is not None else np.full(self.shape, np.nan)
            for ix, xv in enumerate(self.x):
                for iy, yv in enumerate(self.y):
                    fh.write(f"{float(xv)!r},{float(yv)!r},{float(vals[ix, iy])!r}\n")


@dataclass
class LocalizationResult:
    position: np.ndarray | None = None
    velocity: np.ndarray | None = None
    method: str = "ml"
    surface: SearchGrid | None = None
    bistatic_ranges: np.ndarray | None = None


def _matrix_values(entry) -> np.ndarray:
    values = getattr(entry, "values", entry)
    return np.asarray(values, dtype=complex)


def _window_for(windows, pair) -> RangeWindow:
    if isinstance(windows, RangeWindow):
        return windows
    return windows[pair]


def row_correlations(values: np.ndarray, code: np.ndarray) -> np.ndarray:
    """Matched-filter every pulse row against the code at every offset.

    Returns C with C[q, l] = sum_i conj(code[i]) values[q, l + i] for
    l = 0 .. n2 - N; shape (Q, n2 - N + 1).
    """
    v = np.asarray(values, dtype=complex)
    c = np.asarray(code, dtype=complex).reshape(-1)
    if v.shape[1] < c.size:
        raise EstimationError("matrix has fewer columns than the code length")
    win = sliding_window_view(v, c.size, axis=1)
    return win @ np.conj(c)


def _noise_var_lookup(noise_vars, pair: tuple[int, int]) -> float:
    if noise_vars is None:
        return 1.0
    if isinstance(noise_vars, Mapping):
        if pair in noise_vars:
            return float(noise_vars[pair])
        return float(noise_vars[pair[1]])  # keyed by receiver
    if np.isscalar(noise_vars):
        return float(noise_vars)
    return float(np.asarray(noise_vars).reshape(-1)[pair[1]])


def ml_localize(matrices: Mapping[tuple[int, int], object],
                geometry: AntennaGeometry, codes: PhaseCodeSet,
                window: RangeWindow | Mapping[tuple[int, int], RangeWindow],
                grid: SearchGrid,
                noise_vars=None) -> LocalizationResult:
    """Maximum-likelihood position search over the grid.

    The per-cell statistic is sum_{m,n,q} |a_mn^H y_mn^(q)|^2 / (sigma_n^2 N)
    with a_mn the code shifted to the cell's range offset; maximizing it is
    the single-column equivalent of minimizing the projector residuals.
    Cells whose offset falls outside the sampling window for any pair are
    skipped (NaN) with a warning; a grid with no valid cell is an error.
    """
    pts = grid.points()
    surf = np.zeros(pts.shape[0])
    valid = np.ones(pts.shape[0], dtype=bool)
    n = codes.length
    for pair, entry in matrices.items():
        m, rx_idx = pair
        vals = _matrix_values(entry)
        win = _window_for(window, pair)
        corr = row_correlations(vals, codes.codes[m])
        energy = np.sum(np.abs(corr) ** 2, axis=0)  # (n_lags,)
        offs = win.offsets_of(bistatic_range(geometry.tx_positions[m],
                                             geometry.rx_positions[rx_idx], pts))
        ok = (offs >= 0) & (offs < energy.size)
        valid &= ok
        weight = 1.0 / (_noise_var_lookup(noise_vars, pair) * n)
        surf[ok] += weight * energy[offs[ok]]
    if not valid.all():
        n_bad = int((~valid).sum())
        if not valid.any():
            raise EstimationError("every grid cell maps outside the sampling window")
        warnings.warn(f"{n_bad} grid cells map outside the sampling window; skipped",
                      stacklevel=2)
        surf[~valid] = np.nan
    out = grid.with_values(surf.reshape(grid.shape))
    return LocalizationResult(position=out.argmax_point(), method="ml", surface=out)


def extract_peaks(grid: SearchGrid, count: int, notch_cells: int = 3) -> list[np.ndarray]:
    """Sequential peak extraction with a square notch around each maximum."""
    if grid.values is None:
        raise EstimationError("grid has no values")
    vals = grid.values.copy()
    peaks = []
    for _ in range(count):
        if np.all(np.isnan(vals)):
            break
        flat = int(np.nanargmax(vals))
        ix, iy = flat // grid.y.size, flat % grid.y.size
        peaks.append(np.array([grid.x[ix], grid.y[iy]]))
        x0, x1 = max(ix - notch_cells, 0), min(ix + notch_cells + 1, grid.x.size)
        y0, y1 = max(iy - notch_cells, 0), min(iy + notch_cells + 1, grid.y.size)
        vals[x0:x1, y0:y1] = np.nan
    return peaks


def td_estimate(matrices: Mapping[tuple[int, int], object], codes: PhaseCodeSet,
                window: RangeWindow | Mapping[tuple[int, int], RangeWindow],
                n_tx: int | None = None, n_rx: int | None = None) -> np.ndarray:
    """Per-pair bistatic range from noncoherent matched filtering.

    Each pulse row is correlated against the code across all offsets, the
    |.|^2 responses are summed over pulses, and the peak offset maps back to
    range through the window origin.
    """
    pairs = sorted(matrices.keys())
    n_tx = n_tx if n_tx is not None else 1 + max(p[0] for p in pairs)
    n_rx = n_rx if n_rx is not None else 1 + max(p[1] for p in pairs)
    ranges = np.full((n_tx, n_rx), np.nan)
    for pair in pairs:
        m, n = pair
        vals = _matrix_values(matrices[pair])
        win = _window_for(window, pair)
        corr = row_correlations(vals, codes.codes[m])
        energy = np.sum(np.abs(corr) ** 2, axis=0)
        if not np.any(energy > 0):
            raise EstimationError(f"flat correlation response for pair {pair}")
        l_hat = int(np.argmax(energy))
        ranges[m, n] = win.r_min + l_hat * win.range_step
    return ranges


def _build_linear_system(ranges: np.ndarray, geometry: AntennaGeometry):
    """Stack the squared-range equations into A x = b.

    Unknowns are [x, y, R_t1, ..., R_tMt] (target position plus its distance
    to each transmitter); row (i, j) couples transmitter i and receiver j.
    """
    n_tx, n_rx = geometry.n_tx, geometry.n_rx
    a = np.zeros((n_tx * n_rx, 2 + n_tx))
    b = np.zeros(n_tx * n_rx)
    for i in range(n_tx):
        txi = geometry.tx_positions[i]
        rt2 = float(txi @ txi)
        for j in range(n_rx):
            rxj = geometry.rx_positions[j]
            row = i * n_rx + j
            a[row, 0:2] = rxj - txi
            a[row, 2 + i] = -ranges[i, j]
            b[row] = 0.5 * (float(rxj @ rxj) - ranges[i, j] ** 2 - rt2)
    return a, b


def geometric_localize(ranges: np.ndarray, geometry: AntennaGeometry,
                       range_var: float = 1.0) -> LocalizationResult:
    """Closed-form two-stage weighted least squares on bistatic ranges.

    Stage 1 solves the linearized system unweighted; stage 2 reweights each
    equation by the inverse variance of its linearization error, which scales
    with the (stage-1 estimated) target-to-receiver distance.  A uniform
    ``range_var`` rescales all weights equally and so does not move the
    estimate; it is kept for covariance bookkeeping.
    """
    ranges = np.asarray(ranges, dtype=float)
    n_tx, n_rx = geometry.n_tx, geometry.n_rx
    if ranges.shape != (n_tx, n_rx):
        raise EstimationError(f"ranges must have shape ({n_tx}, {n_rx})")
    if n_tx * n_rx < n_tx + 3:
        raise EstimationError("need n_tx * n_rx >= n_tx + 3 equations")
    a, b = _build_linear_system(ranges, geometry)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < a.shape[1]:
        raise DegenerateGeometryError("localization system is rank deficient")
    pos = sol[:2]

    # stage 2: residual std of row (i, j) ~ sqrt(range_var) * (target-to-rx distance)
    tx_dist = np.linalg.norm(pos - geometry.tx_positions, axis=1)  # (n_tx,)
    rx_leg = ranges - tx_dist[:, None]
    scale = np.abs(rx_leg.ravel())
    scale = np.maximum(scale, 1e-9 * max(1.0, float(scale.max())))
    sqrt_w = 1.0 / (math.sqrt(range_var) * scale)
    sol2, _, rank2, _ = np.linalg.lstsq(a * sqrt_w[:, None], b * sqrt_w, rcond=None)
    if rank2 < a.shape[1]:
        raise DegenerateGeometryError("weighted localization system is rank deficient")
    return LocalizationResult(position=sol2[:2], method="geometric",
                              bistatic_ranges=ranges)


def doppler_map(geometry: AntennaGeometry, position: np.ndarray, f_c: float) -> np.ndarray:
    """Unit-direction sums w_mn such that f_mn(v) = (f_c / c) <v, w_mn>."""
    from .geometry import SPEED_OF_LIGHT
    p = np.asarray(position, dtype=float)
    w = np.empty((geometry.n_tx, geometry.n_rx, 2))
    for m in range(geometry.n_tx):
        dt = p - geometry.tx_positions[m]
        ut = dt / np.linalg.norm(dt)
        for n in range(geometry.n_rx):
            dr = p - geometry.rx_positions[n]
            w[m, n] = ut + dr / np.linalg.norm(dr)
    return w * (f_c / SPEED_OF_LIGHT)


def ml_velocity(matrices: Mapping[tuple[int, int], object], position,
                geometry: AntennaGeometry, codes: PhaseCodeSet,
                window: RangeWindow | Mapping[tuple[int, int], RangeWindow],
                grid: SearchGrid, t_pri: float, f_c: float) -> LocalizationResult:
    """Maximum-likelihood velocity search at a fixed position estimate.

    For each velocity hypothesis the per-pulse matched-filter outputs at the
    position's range offset are counter-rotated by the hypothesized Doppler
    and summed coherently over pulses and pairs; the statistic is |sum|^2
    normalized by the aggregate template energy rho = Mt Mr Q N.
    """
    pos = np.asarray(position, dtype=float)
    pts = grid.points()  # velocity hypotheses
    doppler_gain = doppler_map(geometry, pos, f_c)
    total = np.zeros(pts.shape[0], dtype=complex)
    n = codes.length
    n_pulses = None
    used = 0
    for pair, entry in sorted(matrices.items()):
        m, rx_idx = pair
        vals = _matrix_values(entry)
        win = _window_for(window, pair)
        off = win.offset_of(bistatic_range(geometry.tx_positions[m],
                                           geometry.rx_positions[rx_idx], pos))
        if not 0 <= off <= vals.shape[1] - n:
            warnings.warn(f"pair {pair}: position offset {off} outside window; skipped",
                          stacklevel=2)
            continue
        used += 1
        n_pulses = vals.shape[0]
        pulse_corr = vals[:, off:off + n] @ np.conj(codes.codes[m])  # (Q,)
        freqs = pts @ doppler_gain[m, rx_idx]  # (ncand,)
        phases = np.exp(-2j * np.pi * t_pri * np.outer(freqs, np.arange(n_pulses)))
        total += phases @ pulse_corr
    if used == 0:
        raise EstimationError("no pair produced a valid range offset at this position")
    rho = used * n_pulses * n
    surf = (np.abs(total) ** 2 / rho).reshape(grid.shape)
    out = grid.with_values(surf)
    return LocalizationResult(position=pos, velocity=out.argmax_point(),
                              method="ml", surface=out)
