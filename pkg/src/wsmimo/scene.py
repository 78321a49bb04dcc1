"""Per-pair data-matrix synthesis, noise injection, and random subsampling.

The clean matrix for pair (m, n) is the factorization Z = D Lambda Gamma:
Doppler steering columns times a diagonal of scaled reflectivities times
shifted transmit codes.  Carrier-phase factors are absorbed into the
reflectivities, and the Doppler phase advances once per pulse.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import (SPEED_OF_LIGHT, AntennaGeometry, GeometryError,
                       RangeWindow, Target, bistatic_range, doppler_shift)
from .waveform import PhaseCodeSet


class SceneError(ValueError):
    """Invalid scene or matrix-state usage."""


class OperatingConditionWarning(UserWarning):
    """A slow-target / narrowband operating assumption is strained."""


@dataclass(frozen=True)
class RadarConfig:
    """Carrier, waveform-timing, and energy parameters shared by the pipeline."""

    f_c: float = 5e9            # carrier, Hz
    bandwidth: float = 10e6     # Hz
    n_chips: int = 64           # subpulses per pulse (N)
    n_pulses: int = 128         # pulses per CPI (Q)
    t_pri: float = 25e-3        # pulse repetition interval, s
    t_b: float = 1e-7           # subpulse duration, s
    energy: float = 1.0         # per-pulse transmit energy scale (E)
    delta_f: float | None = 50e6  # FDM carrier spacing; recorded, unused (CDM model)

    def __post_init__(self):
        if self.n_pulses < 1 or self.n_chips < 1:
            raise SceneError("n_pulses and n_chips must be >= 1")
        if min(self.f_c, self.bandwidth, self.t_pri, self.t_b, self.energy) <= 0:
            raise SceneError("f_c, bandwidth, t_pri, t_b, energy must be positive")
        if self.t_pri <= self.pulse_duration:
            raise SceneError("t_pri must exceed the pulse duration N * t_b")

    @property
    def pulse_duration(self) -> float:
        return self.n_chips * self.t_b

    @property
    def sample_interval(self) -> float:
        return self.t_b  # one sample per subpulse

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.t_b

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    ok: bool
    ratio: float  # lhs/rhs of the "<<" comparison; ok iff ratio <= 1/margin
    detail: str


@dataclass(frozen=True)
class SceneModel:
    """Geometry, targets, per-pair reflectivities, and radar parameters.

    ``reflectivities`` has shape (n_tx, n_rx, n_targets); each entry is the
    complex beta seen by that pair (Swerling-I: constant over the CPI).
    """

    geometry: AntennaGeometry
    targets: tuple[Target, ...]
    config: RadarConfig
    reflectivities: np.ndarray | None = None
    check_margin: float = 10.0

    def __post_init__(self):
        targets = tuple(self.targets)
        if not targets:
            raise SceneError("scene needs at least one target")
        for k, t in enumerate(targets):
            if not self.geometry.region.contains(t.position):
                raise SceneError(f"target {k} lies outside the surveillance region")
        shape = (self.geometry.n_tx, self.geometry.n_rx, len(targets))
        if self.reflectivities is None:
            beta = np.ones(shape, dtype=complex)
        else:
            beta = np.asarray(self.reflectivities, dtype=complex)
            if beta.shape != shape:
                raise SceneError(f"reflectivities must have shape {shape}")
        beta.flags.writeable = False
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "reflectivities", beta)
        for chk in self.check_conditions():
            if not chk.ok:
                warnings.warn(f"{chk.name}: {chk.detail}", OperatingConditionWarning,
                              stacklevel=2)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def doppler(self, m: int, n: int, k: int) -> float:
        return doppler_shift(self.geometry.tx_positions[m],
                             self.geometry.rx_positions[n],
                             self.targets[k], self.config.f_c)

    def check_conditions(self) -> list[ConditionCheck]:
        """Numerical audit of the narrowband and slow-target assumptions.

        Each "x << y" condition is scored as ratio = x/y and flagged unless
        ratio <= 1/check_margin.  Violations are warnings, not errors: the
        model is still evaluated exactly as specified.
        """
        cfg = self.config
        margin = self.check_margin
        cpi = cfg.n_pulses * cfg.t_pri
        checks = []

        def add(name, ratio, detail):
            checks.append(ConditionCheck(name, ratio <= 1.0 / margin, ratio, detail))

        add("narrowband", (cfg.wavelength / SPEED_OF_LIGHT) * cfg.bandwidth,
            f"lambda/c = {cfg.wavelength / SPEED_OF_LIGHT:.3e} s vs 1/B = {1.0 / cfg.bandwidth:.3e} s")

        v_amb = SPEED_OF_LIGHT / (cfg.f_c * cfg.t_pri)
        r_amb = SPEED_OF_LIGHT * cfg.t_pri / 2.0
        vmax = max(max(abs(t.velocity[0]), abs(t.velocity[1])) for t in self.targets)
        dmax = 0.0
        fmax = 0.0
        rmin = math.inf
        for m in range(self.geometry.n_tx):
            for n in range(self.geometry.n_rx):
                for k, t in enumerate(self.targets):
                    r = bistatic_range(self.geometry.tx_positions[m],
                                       self.geometry.rx_positions[n], t.position)
                    dmax = max(dmax, r / SPEED_OF_LIGHT)
                    fmax = max(fmax, abs(self.doppler(m, n, k)))
                    rmin = min(rmin,
                               float(np.linalg.norm(t.position - self.geometry.rx_positions[n])))
        add("C1-range", dmax / cfg.t_pri,
            f"max delay {dmax:.3e} s vs unambiguous {r_amb / SPEED_OF_LIGHT:.3e} s")
        add("C1-velocity", vmax / v_amb,
            f"per-axis speed {vmax:.1f} m/s vs unambiguous {v_amb:.2f} m/s")
        add("C2-delay-drift", (2.0 * vmax * cpi / SPEED_OF_LIGHT) * cfg.bandwidth,
            f"range walk over the CPI vs one range cell (B = {cfg.bandwidth:.2e} Hz)")
        add("C2-doppler-pulse", fmax * cfg.pulse_duration,
            f"max Doppler {fmax:.1f} Hz over one pulse of {cfg.pulse_duration:.2e} s")
        speed = max(float(np.linalg.norm(t.velocity)) for t in self.targets)
        add("C5-reflectivity", speed * cpi / rmin,
            f"CPI displacement {speed * cpi:.1f} m vs nearest rx range {rmin:.0f} m")
        return checks


@dataclass(frozen=True)
class PulseDataMatrix:
    """One pair's pulse-by-range-cell matrix in clean, noisy, or partial state.

    For the partial state, entries outside the observation mask are exactly
    zero; ``noise_var`` carries the complex noise variance used to generate
    the noisy values (None for clean).
    """

    pair: tuple[int, int]
    values: np.ndarray
    state: str = "clean"
    mask: np.ndarray | None = None
    noise_var: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise SceneError("values must be a 2-D matrix")
        v = v.astype(complex, copy=False)
        if self.state not in ("clean", "noisy", "partial"):
            raise SceneError(f"unknown state {self.state!r}")
        if (self.state == "partial") != (self.mask is not None):
            raise SceneError("partial state requires a mask and vice versa")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != v.shape:
                raise SceneError("mask shape must match values")
            if np.any(v[~m] != 0):
                raise SceneError("unobserved entries must be exactly zero")
            m.flags.writeable = False
            object.__setattr__(self, "mask", m)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "pair", (int(self.pair[0]), int(self.pair[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def h(self) -> int:
        """Number of observed entries |Omega| (all of them unless partial)."""
        return int(self.mask.sum()) if self.mask is not None else self.values.size


def doppler_steering(freq: float, n_pulses: int, t_pri: float) -> np.ndarray:
    """Length-Q vector of per-pulse phase progressions e^{j 2 pi f q T_pri}."""
    q = np.arange(n_pulses)
    return np.exp(2j * np.pi * freq * t_pri * q)


def synthesize_clean(scene: SceneModel, pair: tuple[int, int],
                     codes: PhaseCodeSet, window: RangeWindow) -> PulseDataMatrix:
    """Exact noise-free data matrix Z = D Lambda Gamma for one tx-rx pair.

    Row q is the length-(N + l_max) sampling window of pulse q: each target
    contributes its code shifted to the integer range offset given by the
    window, scaled by sqrt(E) beta and the per-pulse Doppler phase.
    """
    m, n = pair
    cfg = scene.config
    if codes.length != cfg.n_chips:
        raise SceneError("code length must equal RadarConfig.n_chips")
    tx = scene.geometry.tx_positions[m]
    rx = scene.geometry.rx_positions[n]
    n2 = window.n_columns(cfg.n_chips)
    k_count = scene.n_targets

    gamma = np.zeros((k_count, n2), dtype=complex)
    dop = np.empty((cfg.n_pulses, k_count), dtype=complex)
    for k, tgt in enumerate(scene.targets):
        off = window.offset_of(bistatic_range(tx, rx, tgt.position))
        if not 0 <= off <= window.l_max:
            raise SceneError(
                f"target {k} falls at offset {off}, outside window [0, {window.l_max}]")
        gamma[k, off:off + cfg.n_chips] = codes.codes[m]
        dop[:, k] = doppler_steering(doppler_shift(tx, rx, tgt, cfg.f_c),
                                     cfg.n_pulses, cfg.t_pri)

    lam = math.sqrt(cfg.energy) * scene.reflectivities[m, n]
    z = (dop * lam) @ gamma
    return PulseDataMatrix(pair=(m, n), values=z, state="clean")


def noise_variance_for(matrix: PulseDataMatrix, snr_db: float) -> float:
    """Complex noise variance matching an SNR against the matrix's mean power.

    SNR here is the average clean-signal power per entry of the full sampling
    window divided by the noise variance; this is the convention that lines
    up with the reference recovery-error operating points (the code occupies
    N of the N + l_max columns, so per-entry power is E K N / n2 for unit
    reflectivities).
    """
    if math.isinf(snr_db):
        return 0.0
    mean_power = float(np.mean(np.abs(matrix.values) ** 2))
    if mean_power == 0.0:
        raise SceneError("cannot set an SNR against an all-zero matrix")
    return mean_power / (10.0 ** (snr_db / 10.0))


def add_noise(matrix: PulseDataMatrix, snr_db: float, seed: int) -> PulseDataMatrix:
    """Add circularly symmetric white Gaussian noise at the given SNR.

    Deterministic per seed; pass snr_db = math.inf for a noise-free copy
    (state still advances to "noisy").
    """
    if matrix.state != "clean":
        raise SceneError("add_noise expects a clean matrix")
    sigma2 = noise_variance_for(matrix, snr_db)
    if sigma2 == 0.0:
        w = 0.0
    else:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((2,) + matrix.shape)
        w = math.sqrt(sigma2 / 2.0) * (g[0] + 1j * g[1])
    return PulseDataMatrix(pair=matrix.pair, values=matrix.values + w,
                           state="noisy", noise_var=sigma2)


def subsample(matrix: PulseDataMatrix, rate: float, seed: int) -> PulseDataMatrix:
    """Keep h = round(rate * n1 * n2) entries chosen uniformly without replacement."""
    if not 0.0 < rate <= 1.0:
        raise SceneError(f"sampling rate must be in (0, 1], got {rate}")
    if matrix.state == "partial":
        raise SceneError("matrix is already partially observed")
    n1, n2 = matrix.shape
    total = n1 * n2
    h = int(round(rate * total))
    rng = np.random.default_rng(seed)
    flat = np.zeros(total, dtype=bool)
    flat[rng.permutation(total)[:h]] = True
    mask = flat.reshape(n1, n2)
    return PulseDataMatrix(pair=matrix.pair, values=matrix.values * mask,
                           state="partial", mask=mask, noise_var=matrix.noise_var)


def apply_mask(matrix: PulseDataMatrix, mask: np.ndarray) -> PulseDataMatrix:
    """Project onto a given observation mask (idempotent on its own mask)."""
    m = np.asarray(mask, dtype=bool)
    if m.shape != matrix.shape:
        raise SceneError("mask shape must match matrix")
    return PulseDataMatrix(pair=matrix.pair, values=matrix.values * m,
                           state="partial", mask=m, noise_var=matrix.noise_var)


def save_matrix_csv(matrix: PulseDataMatrix, path) -> None:
    """Interchange format: header comments, then one row of interleaved re,im
    values per pulse; observed-entry indices appended for partial matrices."""
    with open(path, "w", newline="") as fh:
        n1, n2 = matrix.shape
        fh.write("# wsmimo pulse-data-matrix v1\n")
        fh.write(f"# pair: {matrix.pair[0]},{matrix.pair[1]}\n")
        fh.write(f"# state: {matrix.state}\n")
        nv = "" if matrix.noise_var is None else repr(matrix.noise_var)
        fh.write(f"# noise_var: {nv}\n")
        fh.write(f"# shape: {n1},{n2}\n")
        w = csv.writer(fh)
        for row in matrix.values:
            w.writerow([repr(float(v)) for v in
                        np.column_stack([row.real, row.imag]).ravel()])
        if matrix.mask is not None:
            idx = np.flatnonzero(matrix.mask.ravel())
            fh.write("# mask\n")
            fh.write(",".join(str(i) for i in idx) + "\n")


def load_matrix_csv(path) -> PulseDataMatrix:
    header: dict[str, str] = {}
    rows: list[np.ndarray] = []
    mask_idx: np.ndarray | None = None
    with open(path, newline="") as fh:
        pending_mask = False
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body == "mask":
                    pending_mask = True
                elif ":" in body:
                    key, val = body.split(":", 1)
                    header[key.strip()] = val.strip()
                continue
            if pending_mask:
                mask_idx = np.array([int(x) for x in line.split(",") if x], dtype=int)
                pending_mask = False
            else:
                vals = np.array([float(x) for x in line.split(",")])
                rows.append(vals[0::2] + 1j * vals[1::2])
    n1, n2 = (int(x) for x in header["shape"].split(","))
    values = np.vstack(rows)
    if values.shape != (n1, n2):
        raise SceneError(f"matrix body {values.shape} disagrees with header ({n1}, {n2})")
    pair = tuple(int(x) for x in header["pair"].split(","))
    noise_var = float(header["noise_var"]) if header.get("noise_var") else None
    mask = None
    if header["state"] == "partial":
        mask = np.zeros(n1 * n2, dtype=bool)
        if mask_idx is not None:
            mask[mask_idx] = True
        mask = mask.reshape(n1, n2)
    return PulseDataMatrix(pair=pair, values=values, state=header["state"],
                           mask=mask, noise_var=noise_var)
