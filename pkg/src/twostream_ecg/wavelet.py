"""Orthonormal db8 discrete wavelet transform with periodic boundaries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LevelError, StructureError

# Daubechies-8 scaling (low-pass analysis) filter, 16 taps.
DB8_LO = np.array([
    -0.00011747678412476953373,
    0.00067544940645056936637,
    -0.0003917403733769470463,
    -0.0048703529934515743104,
    0.0087460940474057767164,
    0.013981027917398281649,
    -0.044088253930794751507,
    -0.01736930100180754617,
    0.12874742662047845886,
    0.00047248457391328277036,
    -0.28401554296154692652,
    -0.015829105256349305667,
    0.58535468365420671277,
    0.67563073629728980681,
    0.31287159091429997066,
    0.054415842243104009955,
])

# quadrature mirror: g[n] = (-1)^n h[L-1-n]
DB8_HI = DB8_LO[::-1] * np.where(np.arange(DB8_LO.size) % 2, -1.0, 1.0)


@dataclass
class WaveletCoeffs:
    approximation: np.ndarray
    details: list[np.ndarray]  # level 1 (finest) first
    original_length: int

    @property
    def levels(self) -> int:
        return len(self.details)

    def copy(self) -> "WaveletCoeffs":
        return WaveletCoeffs(
            self.approximation.copy(), [d.copy() for d in self.details], self.original_length
        )


def level_lengths(n: int, levels: int) -> list[int]:
    """Lengths after each analysis step: ceil-halving from n."""
    out = []
    for _ in range(levels):
        n = (n + 1) // 2
        out.append(n)
    return out


def _analysis_step(x: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    if x.size % 2:
        x = np.append(x, x[-1])
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(lo.size)[None, :]) % n
    win = x[idx]
    return win @ lo, win @ hi


def _synthesis_step(a: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray, out_len: int):
    n = 2 * a.size
    idx = (2 * np.arange(a.size)[:, None] + np.arange(lo.size)[None, :]) % n
    x = np.zeros(n)
    np.add.at(x, idx, a[:, None] * lo[None, :] + d[:, None] * hi[None, :])
    return x[:out_len]


def dwt(signal, levels: int, lo: np.ndarray = DB8_LO, hi: np.ndarray = DB8_HI) -> WaveletCoeffs:
    """Multi-level DWT.  Odd-length intermediates are extended by repeating
    the last sample, so each level has ceil(n/2) coefficients."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if levels < 1:
        raise LevelError(f"levels must be >= 1, got {levels}")
    if x.size < 2**levels:
        raise LevelError(f"signal of length {x.size} too short for {levels} levels")
    details = []
    a = x
    for _ in range(levels):
        a, d = _analysis_step(a, lo, hi)
        details.append(d)
    return WaveletCoeffs(a, details, x.size)


def idwt(coeffs: WaveletCoeffs, lo: np.ndarray = DB8_LO, hi: np.ndarray = DB8_HI) -> np.ndarray:
    expected = level_lengths(coeffs.original_length, coeffs.levels)
    got = [d.size for d in coeffs.details]
    if got != expected or coeffs.approximation.size != (expected[-1] if expected else -1):
        raise StructureError(
            f"coefficient lengths {got} + approx {coeffs.approximation.size} do not match "
            f"{expected} for original length {coeffs.original_length}"
        )
    sizes = [coeffs.original_length] + expected
    a = np.asarray(coeffs.approximation, dtype=float)
    for lvl in range(coeffs.levels, 0, -1):
        a = _synthesis_step(a, np.asarray(coeffs.details[lvl - 1], dtype=float), lo, hi, sizes[lvl - 1])
    return a
