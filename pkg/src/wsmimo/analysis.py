"""Performance characterization: ambiguity surfaces and lower error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .estimation import DegenerateGeometryError, EstimationError, SearchGrid, row_correlations
from .geometry import SPEED_OF_LIGHT, AntennaGeometry, RangeWindow, bistatic_range
from .scene import doppler_steering
from .waveform import PhaseCodeSet


@dataclass
class AmbiguitySurface:
    """Normalized similarity between the received template at the reference
    parameters and at every grid hypothesis (1 at the reference)."""

    reference_position: np.ndarray
    reference_velocity: np.ndarray
    axes: str                 # "position" (x, y) or "velocity" (vx, vy)
    sampling_rate: float
    grid: SearchGrid

    def argmax_point(self) -> np.ndarray:
        return self.grid.argmax_point()


def _doppler_at(tx, rx, positions, velocity, f_c: float) -> np.ndarray:
    """Bistatic Doppler of a fixed velocity at many candidate positions."""
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    v = np.asarray(velocity, dtype=float)
    dt = p - np.asarray(tx, dtype=float)
    dr = p - np.asarray(rx, dtype=float)
    rad = (dt @ v) / np.linalg.norm(dt, axis=1) + (dr @ v) / np.linalg.norm(dr, axis=1)
    return f_c / SPEED_OF_LIGHT * rad


def ambiguity(reference_position, reference_velocity, grid: SearchGrid,
              geometry: AntennaGeometry, codes: PhaseCodeSet, window: RangeWindow,
              n_pulses: int, t_pri: float, f_c: float, axes: str = "position",
              sampling_rate: float = 1.0, seed: int = 0,
              template: str | None = None) -> AmbiguitySurface:
    """Multistatic ambiguity surface over position or velocity hypotheses.

    Per receiver the reference and hypothesis template banks (one column per
    transmitter) are cross-correlated and the squared moduli of all column
    pairs accumulate into the trace statistic, normalized by its value at the
    reference.  A ``sampling_rate`` below one applies one shared seeded
    observation mask to the reference templates, which models the degraded
    sub-sampled surface.

    ``template`` selects the discretization span.  "window" templates are one
    sampling window of N + l_max fast-time samples with the Doppler phase ramp
    across them (negligible for slow targets, so the surface is delay/geometry
    driven); "cpi" templates stack all pulses with per-pulse Doppler phases
    and resolve velocity.  The default follows the hypothesis axis: "window"
    for position, "cpi" for velocity.
    """
    if axes not in ("position", "velocity"):
        raise EstimationError(f"axes must be 'position' or 'velocity', got {axes!r}")
    if template is None:
        template = "window" if axes == "position" else "cpi"
    if template not in ("window", "cpi"):
        raise EstimationError(f"template must be 'window' or 'cpi', got {template!r}")
    if not 0.0 < sampling_rate <= 1.0:
        raise EstimationError("sampling_rate must be in (0, 1]")
    ref_p = np.asarray(reference_position, dtype=float).reshape(2)
    ref_v = np.asarray(reference_velocity, dtype=float).reshape(2)
    pts = grid.points()
    if pts.size == 0:
        raise EstimationError("empty ambiguity grid")
    # reference appended as the normalization candidate
    ref_cand = ref_p if axes == "position" else ref_v
    cand = np.vstack([pts, ref_cand])

    n = codes.length
    n2 = window.n_columns(n)
    rows = n_pulses if template == "cpi" else 1
    if sampling_rate < 1.0:
        rng = np.random.default_rng(seed)
        keep = int(round(sampling_rate * rows * n2))
        flat = np.zeros(rows * n2, dtype=bool)
        flat[rng.permutation(rows * n2)[:keep]] = True
        mask = flat.reshape(rows, n2)
    else:
        mask = None

    def cand_offsets_freqs(tx, rx):
        if axes == "position":
            offs = window.offsets_of(bistatic_range(tx, rx, cand))
            freqs = _doppler_at(tx, rx, cand, ref_v, f_c)
        else:
            off = window.offset_of(bistatic_range(tx, rx, ref_p))
            offs = np.full(cand.shape[0], off, dtype=int)
            freqs = cand @ ((f_c / SPEED_OF_LIGHT)
                            * ((ref_p - tx) / np.linalg.norm(ref_p - tx)
                               + (ref_p - rx) / np.linalg.norm(ref_p - rx)))
        if np.any((offs < 0) | (offs > window.l_max)):
            raise EstimationError("grid hypothesis outside the sampling window")
        return offs, freqs

    t_s = codes.t_b
    acc = np.zeros(cand.shape[0])
    for rx_i in range(geometry.n_rx):
        rx = geometry.rx_positions[rx_i]
        refs = []
        for m_ref in range(geometry.n_tx):
            tx = geometry.tx_positions[m_ref]
            off0 = window.offset_of(bistatic_range(tx, rx, ref_p))
            if not 0 <= off0 <= window.l_max:
                raise EstimationError("reference position outside the sampling window")
            f0 = float(_doppler_at(tx, rx, ref_p[None, :], ref_v, f_c)[0])
            g0 = np.zeros((rows, n2), dtype=complex)
            if template == "cpi":
                g0[:, off0:off0 + n] = np.outer(doppler_steering(f0, n_pulses, t_pri),
                                                codes.codes[m_ref])
            else:
                ramp = np.exp(2j * np.pi * f0 * t_s * np.arange(off0, off0 + n))
                g0[0, off0:off0 + n] = codes.codes[m_ref] * ramp
            if mask is not None:
                g0 = g0 * mask
            refs.append(g0)
        for m in range(geometry.n_tx):
            tx = geometry.tx_positions[m]
            offs, freqs = cand_offsets_freqs(tx, rx)
            if template == "cpi":
                phases = np.exp(2j * np.pi * t_pri * np.outer(freqs, np.arange(n_pulses)))
                for g0 in refs:
                    corr = np.conj(row_correlations(g0, codes.codes[m]))
                    inner = np.einsum("cq,cq->c", phases, corr[:, offs].T)
                    acc += np.abs(inner) ** 2
            else:
                # |inner| is invariant to the window-origin phase, so only the
                # in-window ramp of the hypothesis template matters
                ramp = (np.exp(2j * np.pi * t_s * np.outer(freqs, np.arange(n)))
                        * codes.codes[m])
                for g0 in refs:
                    wins = sliding_window_view(g0[0], n)[offs]  # (ncand, N)
                    inner = np.einsum("ci,ci->c", np.conj(wins), ramp)
                    acc += np.abs(inner) ** 2
    ref_val = acc[-1]
    if ref_val <= 0:
        raise EstimationError("reference template has zero energy")
    values = (acc[:-1] / ref_val).reshape(grid.shape)
    return AmbiguitySurface(reference_position=ref_p, reference_velocity=ref_v,
                            axes=axes, sampling_rate=sampling_rate,
                            grid=grid.with_values(values))


def area_above(surface: AmbiguitySurface, level: float = 0.5) -> float:
    """Grid area (cell count times cell area) where the surface exceeds ``level``."""
    g = surface.grid
    dx = float(np.median(np.diff(g.x))) if g.x.size > 1 else 1.0
    dy = float(np.median(np.diff(g.y))) if g.y.size > 1 else 1.0
    return float(np.sum(g.values >= level)) * dx * dy


def max_sidelobe(surface: AmbiguitySurface, exclude_radius: float) -> float:
    """Largest surface value outside a disk around the reference point."""
    g = surface.grid
    ref = (surface.reference_position if surface.axes == "position"
           else surface.reference_velocity)
    xx, yy = np.meshgrid(g.x, g.y, indexing="ij")
    far = (xx - ref[0]) ** 2 + (yy - ref[1]) ** 2 > exclude_radius ** 2
    if not np.any(far):
        raise EstimationError("exclusion radius covers the whole grid")
    return float(np.max(g.values[far]))


@dataclass(frozen=True)
class CrlbReport:
    """Position-error floor and its geometry coefficients.

    ``crlb_block`` is the 2x2 position block of the bound (diagonal in the
    e_x/e_y closed form); both variances scale exactly as 1/SNR.
    """

    sigma2_x: float
    sigma2_y: float
    e_x: float
    e_y: float
    beta_eff: float
    snr: float
    reflectivity: complex
    crlb_block: np.ndarray


def crlb(geometry: AntennaGeometry, target, snr: float, f_c: float,
         beta_eff: float, reflectivity: complex = 1.0 + 0.0j) -> CrlbReport:
    """Localization MMSE floor from the position Fisher information.

    The geometry enters through the angle sums A_lk = cos(phi_tk) + cos(phi_rl)
    and B_lk = sin(phi_tk) + sin(phi_rl); after eliminating the unknown
    reflectivity the x (y) information coefficient is the energy of B (A)
    minus the squared mean term:

        e_x = sum B_lk^2 - (sum B_lk)^2 / ((1 + beta^2/f_c^2) Mr Mt)

    and sigma_x^2 = c^2 / (8 pi^2 SNR (f_c^2 + beta^2) e_x) with the unit
    normalizer fixed at one.
    """
    if snr <= 0:
        raise EstimationError("snr must be positive (linear scale)")
    p = np.asarray(target, dtype=float).reshape(2)
    d_t = p - geometry.tx_positions
    d_r = p - geometry.rx_positions
    if np.any(np.linalg.norm(d_t, axis=1) == 0) or np.any(np.linalg.norm(d_r, axis=1) == 0):
        raise EstimationError("target coincides with an antenna")
    phi_t = np.arctan2(d_t[:, 1], d_t[:, 0])
    phi_r = np.arctan2(d_r[:, 1], d_r[:, 0])
    a = np.add.outer(np.cos(phi_r), np.cos(phi_t))  # (Mr, Mt)
    b = np.add.outer(np.sin(phi_r), np.sin(phi_t))
    pairs = a.size
    norm = (1.0 + (beta_eff / f_c) ** 2) * pairs
    e_x = float(np.sum(b ** 2) - np.sum(b) ** 2 / norm)
    e_y = float(np.sum(a ** 2) - np.sum(a) ** 2 / norm)
    if e_x <= 0 or e_y <= 0:
        raise DegenerateGeometryError(
            f"geometry coefficients not positive (e_x={e_x:.3e}, e_y={e_y:.3e})")
    scale = SPEED_OF_LIGHT ** 2 / (8.0 * math.pi ** 2 * snr * (f_c ** 2 + beta_eff ** 2))
    s2x = scale / e_x
    s2y = scale / e_y
    return CrlbReport(sigma2_x=s2x, sigma2_y=s2y, e_x=e_x, e_y=e_y,
                      beta_eff=beta_eff, snr=snr, reflectivity=complex(reflectivity),
                      crlb_block=np.diag([s2x, s2y]))


def effective_bandwidth(code, f_s: float) -> float:
    """RMS bandwidth of the code spectrum around DC (DFT frequencies).

    beta^2 = sum f^2 |S(f)|^2 / sum |S(f)|^2 over the signed DFT frequencies.
    """
    c = np.asarray(code, dtype=complex).reshape(-1)
    if c.size == 0 or not np.any(c):
        raise EstimationError("need a nonzero code")
    if f_s <= 0:
        raise EstimationError("sample rate must be positive")
    spec = np.abs(np.fft.fft(c)) ** 2
    freqs = np.fft.fftfreq(c.size, d=1.0 / f_s)
    return float(math.sqrt(np.sum(freqs ** 2 * spec) / np.sum(spec)))
