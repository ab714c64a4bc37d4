"""Wavelet denoising, rate conversion and Z-score normalisation."""
from __future__ import annotations

import numpy as np

from .errors import ConstantFrameError, EmptyInputError, LevelError, ParameterError
from .wavelet import dwt, idwt

MAX_LEVELS = 9
MAD_SCALE = 0.6745
# lowest frequency (Hz) the deepest approximation band may reach down to;
# keeps 0.3 Hz baseline wander inside the band and 1 Hz heart rhythm out of it
WANDER_EDGE_HZ = 0.45


def denoise_levels(n: int, fs: float = 500.0) -> int:
    """Decomposition depth for denoising a length-``n`` signal sampled at ``fs``.

    The deepest level L is the largest one whose approximation band
    [0, fs / 2**(L+1)] still extends to WANDER_EDGE_HZ, capped by the signal
    length (floor(log2 n) - 2) and MAX_LEVELS.
    """
    if n <= 0:
        return 0
    by_fs = int(np.floor(np.log2(fs / WANDER_EDGE_HZ))) - 1
    return max(0, min(MAX_LEVELS, int(np.floor(np.log2(n))) - 2, by_fs))


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def hard_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.where(np.abs(x) > t, x, 0.0)


def denoise(signal, fs: float = 500.0) -> np.ndarray:
    """db8 wavelet denoising with an adaptive (data-driven) threshold.

    Noise level is estimated from the finest detail band,
    ``sigma = median(|d_1|) / 0.6745``, and every detail coefficient below the
    universal threshold ``sigma * sqrt(2 ln N)`` is set to zero.  The deepest
    approximation is discarded to strip baseline wander, after which the
    isoelectric line is restored by subtracting the output median.
    """
    x = np.asarray(signal, dtype=float)
    n = x.size
    levels = denoise_levels(n, fs)
    if levels < 1:
        raise LevelError(f"signal of length {n} is too short to denoise")
    coeffs = dwt(x, levels)
    sigma = np.median(np.abs(coeffs.details[0])) / MAD_SCALE
    t = sigma * np.sqrt(2 * np.log(n))
    coeffs.details = [hard_threshold(d, t) for d in coeffs.details]
    coeffs.approximation = np.zeros_like(coeffs.approximation)
    out = idwt(coeffs)
    return out - np.median(out)


def resample(signal, from_fs: float, to_fs: float) -> np.ndarray:
    """Linear-interpolation rate conversion.

    Output sample k sits at time k/to_fs; positions past the last input
    sample take the last value.
    """
    if from_fs <= 0 or to_fs <= 0:
        raise ParameterError(f"sampling rates must be positive, got {from_fs} -> {to_fs}")
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        return np.zeros(0)
    if from_fs == to_fs:
        return x.copy()
    m = int(np.floor(x.size * to_fs / from_fs + 0.5))
    pos = np.arange(m) * (from_fs / to_fs)
    return np.interp(pos, np.arange(x.size), x)


def zscore(frame, eps: float = 1e-12) -> np.ndarray:
    x = np.asarray(frame, dtype=float)
    if x.size == 0:
        raise EmptyInputError("cannot normalise an empty frame")
    mu = x.mean()
    sd = x.std()
    if sd < eps:
        raise ConstantFrameError(f"frame is constant (std={sd:.3g})")
    return (x - mu) / sd
