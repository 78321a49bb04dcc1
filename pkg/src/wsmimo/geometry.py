"""Antenna placement, bistatic propagation geometry, and range-window arithmetic.

All positions are 2-D Cartesian coordinates in meters.  The propagation
constant is fixed at c = 3e8 m/s exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s

_LAYOUTS = ("circular", "l_shaped", "random")


class GeometryError(ValueError):
    """Invalid antenna/region configuration."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, used for the surveillance region S."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite rectangle bounds {vals}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise GeometryError(f"inverted rectangle bounds {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.x_min + self.x_max),
                         0.5 * (self.y_min + self.y_max)])

    def corners(self) -> np.ndarray:
        return np.array([
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
        ])

    def boundary_points(self, per_edge: int = 512) -> np.ndarray:
        """Dense sampling of the boundary (corners always included)."""
        xs = np.linspace(self.x_min, self.x_max, per_edge + 1)
        ys = np.linspace(self.y_min, self.y_max, per_edge + 1)
        return np.vstack([
            np.column_stack([xs, np.full_like(xs, self.y_min)]),
            np.column_stack([xs, np.full_like(xs, self.y_max)]),
            np.column_stack([np.full_like(ys, self.x_min), ys]),
            np.column_stack([np.full_like(ys, self.x_max), ys]),
        ])

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = ((p[:, 0] >= self.x_min) & (p[:, 0] <= self.x_max)
                  & (p[:, 1] >= self.y_min) & (p[:, 1] <= self.y_max))
        return inside if inside.size > 1 else bool(inside[0])

    def translated(self, offset) -> "Rect":
        dx, dy = float(offset[0]), float(offset[1])
        return Rect(self.x_min + dx, self.x_max + dx,
                    self.y_min + dy, self.y_max + dy)


def _as_points(a, name: str) -> np.ndarray:
    p = np.asarray(a, dtype=float)
    p = np.atleast_2d(p)
    if p.ndim != 2 or p.shape[1] != 2:
        raise GeometryError(f"{name} must be an (n, 2) array of 2-D points")
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"{name} contains non-finite coordinates")
    return p


@dataclass(frozen=True)
class AntennaGeometry:
    """Transmit/receive antenna positions plus the surveillance region S.

    Invariants enforced at construction: at least one antenna on each side,
    finite coordinates, region of strictly positive area, and no antenna
    inside S (bistatic distances to any target in S must stay nonzero).
    """

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    region: Rect

    def __post_init__(self):
        tx = _as_points(self.tx_positions, "tx_positions")
        rx = _as_points(self.rx_positions, "rx_positions")
        if self.region.area <= 0:
            raise GeometryError("surveillance region must have positive area")
        for name, arr in (("transmitter", tx), ("receiver", rx)):
            inside = np.atleast_1d(self.region.contains(arr))
            if np.any(inside):
                raise GeometryError(f"{name} lies inside the surveillance region")
        tx.flags.writeable = False
        rx.flags.writeable = False
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)

    @property
    def n_tx(self) -> int:
        return self.tx_positions.shape[0]

    @property
    def n_rx(self) -> int:
        return self.rx_positions.shape[0]

    def pairs(self) -> Iterable[tuple[int, int]]:
        for m in range(self.n_tx):
            for n in range(self.n_rx):
                yield (m, n)

    def translated(self, offset) -> "AntennaGeometry":
        off = np.asarray(offset, dtype=float)
        return AntennaGeometry(self.tx_positions + off,
                               self.rx_positions + off,
                               self.region.translated(off))


@dataclass(frozen=True)
class Target:
    """Point target: position in meters, velocity in m/s."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        vel = np.asarray(self.velocity, dtype=float).reshape(2)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise GeometryError("target position/velocity must be finite")
        pos.flags.writeable = False
        vel.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)


def make_geometry(layout: str, *, n_tx: int = 3, n_rx: int = 10,
                  tx_radius: float = 5000.0, rx_radius: float = 3000.0,
                  arm_length: float = 3000.0,
                  rx_box: Rect | None = None,
                  region: Rect | None = None,
                  seed: int = 0) -> AntennaGeometry:
    """Build one of the three canonical antenna layouts.

    ``circular``
        n_tx transmitters on a circle of radius ``tx_radius`` and n_rx
        receivers on a circle of radius ``rx_radius``, both at equal angular
        spacing starting from angle 0 and proceeding counterclockwise.
    ``l_shaped``
        transmitters as in ``circular``; receivers split between the positive
        x and y half-axes, equally spaced out to ``arm_length`` (x arm gets
        the extra element for odd counts).
    ``random``
        transmitters as in ``circular``; receivers i.i.d. uniform over
        ``rx_box`` (resampled if a draw lands inside the region), seeded.
    """
    if layout not in _LAYOUTS:
        raise GeometryError(f"unknown layout {layout!r}; expected one of {_LAYOUTS}")
    if n_tx < 1 or n_rx < 1:
        raise GeometryError("antenna counts must be at least 1")
    if region is None:
        region = Rect(1000.0, 1200.0, 1000.0, 1200.0)

    def ring(count, radius):
        if not (math.isfinite(radius) and radius > 0):
            raise GeometryError(f"circle radius must be finite and positive, got {radius}")
        ang = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])

    tx = ring(n_tx, tx_radius)

    if layout == "circular":
        rx = ring(n_rx, rx_radius)
    elif layout == "l_shaped":
        if not (math.isfinite(arm_length) and arm_length > 0):
            raise GeometryError("arm_length must be finite and positive")
        n_x = (n_rx + 1) // 2
        n_y = n_rx - n_x
        sx = arm_length * np.arange(1, n_x + 1) / n_x
        rx = [np.column_stack([sx, np.zeros(n_x)])]
        if n_y:
            sy = arm_length * np.arange(1, n_y + 1) / n_y
            rx.append(np.column_stack([np.zeros(n_y), sy]))
        rx = np.vstack(rx)
    else:  # random
        if rx_box is None:
            rx_box = Rect(-3000.0, 3000.0, -3000.0, 3000.0)
        rng = np.random.default_rng(seed)
        pts = []
        while len(pts) < n_rx:
            p = np.array([rng.uniform(rx_box.x_min, rx_box.x_max),
                          rng.uniform(rx_box.y_min, rx_box.y_max)])
            if not region.contains(p):
                pts.append(p)
        rx = np.vstack(pts)

    return AntennaGeometry(tx, rx, region)


def _dist(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _check_separated(tx, rx, target):
    if _dist(tx, target) == 0.0 or _dist(rx, target) == 0.0:
        raise GeometryError("target coincides with an antenna")


def bistatic_range(tx, rx, points) -> np.ndarray | float:
    """Tx-to-point plus point-to-rx path length; broadcasts over points."""
    p = np.asarray(points, dtype=float)
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    r = (np.linalg.norm(p - tx, axis=-1)
         + np.linalg.norm(p - rx, axis=-1))
    return r if r.ndim else float(r)


def delay(tx, rx, target) -> float:
    """Bistatic propagation delay in seconds: (|p - p_t| + |p - p_r|) / c."""
    _check_separated(tx, rx, target)
    return bistatic_range(tx, rx, target) / SPEED_OF_LIGHT


def doppler_shift(tx, rx, target: Target, f_c: float) -> float:
    """Bistatic Doppler in Hz from the radial velocity toward both antennas.

    f = (f_c/c) * (<v, p-p_t>/|p-p_t| + <v, p-p_r>/|p-p_r|)
    """
    p = np.asarray(target.position, dtype=float)
    v = np.asarray(target.velocity, dtype=float)
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    _check_separated(tx, rx, p)
    dt = p - tx
    dr = p - rx
    radial = v @ dt / np.linalg.norm(dt) + v @ dr / np.linalg.norm(dr)
    return f_c / SPEED_OF_LIGHT * float(radial)


def _segment_hits_rect(a, b, rect: Rect) -> bool:
    """Liang-Barsky clip test: does segment a-b intersect the rectangle?"""
    d = (b[0] - a[0], b[1] - a[1])
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-d[0], a[0] - rect.x_min),
        (d[0], rect.x_max - a[0]),
        (-d[1], a[1] - rect.y_min),
        (d[1], rect.y_max - a[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    return True


def range_extremes(tx, rx, region: Rect, per_edge: int = 512) -> tuple[float, float]:
    """Min/max bistatic range over a rectangle.

    The bistatic range is convex in the target position, so the maximum is
    attained at a corner; the minimum lies on the boundary unless the tx-rx
    segment crosses the rectangle, in which case it equals the baseline
    distance.  The boundary is scanned on a dense grid plus corners.
    """
    pts = region.boundary_points(per_edge)
    r = bistatic_range(tx, rx, pts)
    r_min = float(np.min(r))
    r_max = float(np.max(r))
    if _segment_hits_rect(np.asarray(tx, float), np.asarray(rx, float), region):
        r_min = _dist(tx, rx)
    return r_min, r_max


@dataclass(frozen=True)
class RangeWindow:
    """Sampling window for one (or all) tx-rx pairs over the region.

    ``l_max`` is the window extension in range samples,
    floor((r_max - r_min) / (c T_s)); a bistatic range R maps to the sample
    offset floor((R - r_min) / (c T_s)).
    """

    r_min: float
    r_max: float
    range_step: float  # c * T_s, meters per sample
    l_max: int
    target_offsets: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.range_step <= 0 or not math.isfinite(self.range_step):
            raise GeometryError("range_step must be positive (is T_s > 0?)")
        if self.r_max < self.r_min:
            raise GeometryError("r_max < r_min")

    def offset_of(self, bistatic_range_m: float) -> int:
        return int(math.floor((bistatic_range_m - self.r_min) / self.range_step))

    def offsets_of(self, ranges) -> np.ndarray:
        r = np.asarray(ranges, dtype=float)
        return np.floor((r - self.r_min) / self.range_step).astype(int)

    def n_columns(self, n_chips: int) -> int:
        return n_chips + self.l_max


def _window_from_extremes(r_min: float, r_max: float, t_s: float,
                          offsets: tuple[int, ...]) -> RangeWindow:
    if t_s <= 0:
        raise GeometryError("sampling interval T_s must be positive")
    step = SPEED_OF_LIGHT * t_s
    l_max = int(math.floor((r_max - r_min) / step))
    return RangeWindow(r_min, r_max, step, l_max, offsets)


def range_window(geometry: AntennaGeometry, pair: tuple[int, int],
                 targets: Sequence[Target] = (), t_s: float = 1e-7,
                 region: Rect | None = None, per_edge: int = 512) -> RangeWindow:
    """Per-pair range window covering every possible target location in S."""
    m, n = pair
    tx = geometry.tx_positions[m]
    rx = geometry.rx_positions[n]
    region = geometry.region if region is None else region
    r_min, r_max = range_extremes(tx, rx, region, per_edge)
    win = _window_from_extremes(r_min, r_max, t_s, ())
    offs = tuple(win.offset_of(bistatic_range(tx, rx, t.position)) for t in targets)
    for k, L in enumerate(offs):
        if not (0 <= L <= win.l_max):
            raise GeometryError(
                f"target {k} maps to offset {L} outside window [0, {win.l_max}]")
    return RangeWindow(win.r_min, win.r_max, win.range_step, win.l_max, offs)


def common_range_window(geometry: AntennaGeometry, t_s: float = 1e-7,
                        region: Rect | None = None,
                        per_edge: int = 512) -> RangeWindow:
    """Window shared by all pairs: global range extremes over pairs and S.

    Pooling the extremes gives every pair the same number of range cells, so
    all data matrices share one shape and one offset origin.
    """
    region = geometry.region if region is None else region
    r_min, r_max = math.inf, -math.inf
    for m in range(geometry.n_tx):
        for n in range(geometry.n_rx):
            lo, hi = range_extremes(geometry.tx_positions[m],
                                    geometry.rx_positions[n], region, per_edge)
            r_min = min(r_min, lo)
            r_max = max(r_max, hi)
    return _window_from_extremes(r_min, r_max, t_s, ())


def sample_offset(window: RangeWindow, tx, rx, position) -> int:
    """Range-sample offset of a scatterer at ``position`` for one tx-rx pair."""
    return window.offset_of(bistatic_range(tx, rx, position))
