"""Unimodular phase-coded transmit sequences and their correlation diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class WaveformError(ValueError):
    """Invalid code construction or correlation query."""


@dataclass(frozen=True)
class PhaseCodeSet:
    """A set of unit-modulus codes, one per transmitter.

    ``codes`` has shape (n_tx, length); every entry must have modulus 1
    (constant-envelope hardware constraint).  Discretized at one sample per
    subpulse, the baseband waveform of transmitter m is exactly ``codes[m]``.
    """

    codes: np.ndarray
    t_b: float  # subpulse duration, seconds

    def __post_init__(self):
        c = np.asarray(self.codes, dtype=complex)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise WaveformError("codes must be a nonempty (n_tx, length) array")
        if not np.allclose(np.abs(c), 1.0, atol=1e-12):
            raise WaveformError("codes must be unimodular (|x| = 1)")
        if self.t_b <= 0:
            raise WaveformError("subpulse duration must be positive")
        c.flags.writeable = False
        object.__setattr__(self, "codes", c)

    @property
    def n_tx(self) -> int:
        return self.codes.shape[0]

    @property
    def length(self) -> int:
        return self.codes.shape[1]

    @property
    def pulse_duration(self) -> float:
        return self.length * self.t_b

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.t_b

    def to_csv(self, path) -> None:
        """One row per transmitter, entries interleaved as re,im pairs."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.codes:
                flat = np.column_stack([row.real, row.imag]).ravel()
                w.writerow([repr(float(v)) for v in flat])


def sylvester_hadamard(order: int) -> np.ndarray:
    """Sylvester construction of the order-n Hadamard matrix (n power of two)."""
    if order < 1 or order & (order - 1):
        raise WaveformError(f"Hadamard order must be a power of two, got {order}")
    h = np.array([[1.0]])
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def hadamard_codes(n_tx: int, length: int, t_b: float = 1e-7) -> PhaseCodeSet:
    """Mutually orthogonal +-1 codes from rows of the Sylvester-Hadamard matrix.

    The all-ones first row is skipped when the order permits (rows 1..n_tx,
    zero-based), so every returned code is balanced.
    """
    if n_tx < 1:
        raise WaveformError("need at least one transmitter")
    if n_tx > length:
        raise WaveformError(f"cannot draw {n_tx} distinct rows from order {length}")
    h = sylvester_hadamard(length)
    start = 1 if n_tx < length else 0
    rows = h[start:start + n_tx]
    return PhaseCodeSet(rows.astype(complex), t_b)


def _code_1d(code) -> np.ndarray:
    c = np.asarray(code, dtype=complex).reshape(-1)
    if c.size == 0:
        raise WaveformError("empty code")
    return c


def autocorrelation(code, lag: int) -> complex:
    """Aperiodic autocorrelation gamma(l) = sum_k s(k) s*(k-l), 0 <= l < N."""
    s = _code_1d(code)
    n = s.size
    if not 0 <= lag < n:
        raise WaveformError(f"lag must be in [0, {n}), got {lag}")
    if lag == 0:
        return complex(np.sum(s * np.conj(s)))
    return complex(np.sum(s[lag:] * np.conj(s[:-lag])))


def autocorrelation_at(code, lag: int) -> complex:
    """gamma extended to any integer lag: conjugate-symmetric, zero beyond N-1."""
    s = _code_1d(code)
    if abs(lag) >= s.size:
        return 0.0 + 0.0j
    if lag < 0:
        return complex(np.conj(autocorrelation(s, -lag)))
    return autocorrelation(s, lag)


def sidelobe_energy(code, max_lag: int) -> float:
    """Sum of |gamma(l)|^2 over l = 1..max_lag (worst-case pairwise term)."""
    s = _code_1d(code)
    if not 0 <= max_lag < s.size:
        raise WaveformError(f"max_lag must be in [0, {s.size}), got {max_lag}")
    return float(sum(abs(autocorrelation(s, l)) ** 2 for l in range(1, max_lag + 1)))


def low_sidelobe_code(length: int, max_lag: int, seed: int = 0,
                      tol: float = 1e-11, max_restarts: int = 20) -> np.ndarray:
    """Unimodular code with gamma(l) ~ 0 for l = 1..max_lag.

    Gauss-Newton on the phases: the residual stacks Re/Im of gamma(l) for the
    constrained lags; with length >> 2*max_lag the zero set is a manifold and
    a random start converges in a handful of steps.  Used for synthetic
    ideal-autocorrelation studies, not as a transmit family.
    """
    if not 1 <= max_lag < length:
        raise WaveformError("need 1 <= max_lag < length")
    if 2 * max_lag >= length:
        raise WaveformError("too many constraints for this length")
    rng = np.random.default_rng(seed)
    idx = np.arange(length)

    def residual(phi):
        s = np.exp(1j * phi)
        g = np.array([np.sum(s[l:] * np.conj(s[:-l])) for l in range(1, max_lag + 1)])
        return np.concatenate([g.real, g.imag]), s

    def jacobian(s):
        # d gamma(l) / d phi_j = i s_j s*_{j-l} [j >= l] - i s_{j+l} s*_j [j+l < N]
        rows = []
        for l in range(1, max_lag + 1):
            d = np.zeros(length, dtype=complex)
            d[l:] += 1j * s[l:] * np.conj(s[:-l])
            d[:-l] -= 1j * s[l:] * np.conj(s[:-l])
            rows.append(d)
        dg = np.array(rows)
        return np.vstack([dg.real, dg.imag])

    for _ in range(max_restarts):
        phi = rng.uniform(0.0, 2.0 * np.pi, length)
        for _ in range(60):
            r, s = residual(phi)
            if np.max(np.abs(r)) < tol:
                return s
            step, *_ = np.linalg.lstsq(jacobian(s), r, rcond=None)
            phi = phi - step
        r, s = residual(phi)
        if np.max(np.abs(r)) < tol:
            return s
    raise WaveformError(
        f"phase fit did not reach |gamma| < {tol} after {max_restarts} restarts")
