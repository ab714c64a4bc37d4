"""Pan-Tompkins R-peak detection with local-maximum refinement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks, firwin

from .errors import ParameterError

BAND_HZ = (5.0, 15.0)
# firwin places its cutoffs at -6 dB; these put the -3 dB points on BAND_HZ
_FIRWIN_CUTOFFS = (4.2, 15.8)
FILTER_S = 0.5
MWI_S = 0.150
REFRACTORY_S = 0.200
T_WAVE_S = 0.360
REFINE_S = 0.050
SEARCHBACK_RR = 1.66
LEARN_S = 2.0
FLAT_EPS = 1e-12


@dataclass
class DetectorState:
    spki: float
    npki: float
    rr_average: float | None
    refractory_samples: int

    @property
    def threshold1(self) -> float:
        return self.npki + 0.25 * (self.spki - self.npki)

    @property
    def threshold2(self) -> float:
        return 0.5 * self.threshold1

    def signal_peak(self, peak: float, searchback: bool = False) -> None:
        if searchback:
            self.spki = 0.25 * peak + 0.75 * self.spki
        else:
            self.spki = 0.125 * peak + 0.875 * self.spki

    def noise_peak(self, peak: float) -> None:
        self.npki = 0.125 * peak + 0.875 * self.npki


def bandpass_taps(fs: float) -> np.ndarray:
    """Linear-phase FIR band-pass with -3 dB points at 5 and 15 Hz."""
    n = int(round(FILTER_S * fs)) | 1
    return firwin(n, list(_FIRWIN_CUTOFFS), pass_zero=False, fs=fs)


def bandpass(x: np.ndarray, fs: float) -> np.ndarray:
    # odd symmetric taps + centred output = zero group delay; edge padding
    # keeps a DC offset from turning into steps at the record ends
    taps = bandpass_taps(fs)
    half = taps.size // 2
    return np.convolve(np.pad(x, half, mode="edge"), taps, mode="valid")


def derivative(x: np.ndarray, fs: float) -> np.ndarray:
    """Five-point derivative (2x[n+1] + x[n+2] - x[n-2] - 2x[n-1]) * fs / 8."""
    p = np.pad(x, 2, mode="edge")
    return (2 * p[3:-1] + p[4:] - p[:-4] - 2 * p[1:-3]) * fs / 8.0


def moving_window_integral(x: np.ndarray, fs: float) -> np.ndarray:
    w = max(1, int(round(MWI_S * fs)))
    return np.convolve(x, np.ones(w) / w, mode="same")


@dataclass
class PanTompkinsTrace:
    """Intermediate signals, kept for plotting and tests."""

    bandpassed: np.ndarray
    derivative: np.ndarray
    integrated: np.ndarray
    qrs_indices: list[int]
    state: DetectorState


def _refine(bp: np.ndarray, idx: int, half: int) -> int:
    a, b = max(idx - half, 0), min(idx + half + 1, bp.size)
    return int(a + np.argmax(bp[a:b]))


def pan_tompkins(signal, fs: float) -> PanTompkinsTrace:
    x = np.asarray(signal, dtype=float)
    if fs < 100:
        raise ParameterError(f"fs must be at least 100 Hz, got {fs}")
    if x.size < 2 * fs:
        raise ParameterError(f"need at least 2 s of signal, got {x.size} samples at {fs} Hz")
    bp = bandpass(x, fs)
    d = derivative(bp, fs)
    mwi = moving_window_integral(d * d, fs)

    refractory = int(round(REFRACTORY_S * fs))
    learn = mwi[: int(LEARN_S * fs)]
    state = DetectorState(spki=learn.max() / 3, npki=learn.mean() / 2, rr_average=None,
                          refractory_samples=refractory)
    if state.spki <= 0 or np.ptp(x) <= FLAT_EPS * max(1.0, float(np.max(np.abs(x)))):
        return PanTompkinsTrace(bp, d, mwi, [], state)

    cand, _ = find_peaks(mwi, distance=refractory)
    slope_half = int(round(0.075 * fs))

    def max_slope(i):
        return np.max(np.abs(d[max(i - slope_half, 0) : i + slope_half + 1]))

    qrs: list[int] = []
    noise: list[int] = []
    rr: list[int] = []

    def accept(i, searchback=False):
        if qrs:
            rr.append(i - qrs[-1])
            del rr[:-8]
            state.rr_average = float(np.mean(rr))
        qrs.append(i)
        state.signal_peak(mwi[i], searchback)

    for p in map(int, cand):
        if qrs and state.rr_average and p - qrs[-1] > SEARCHBACK_RR * state.rr_average:
            pool = [i for i in noise if i > qrs[-1] + refractory and mwi[i] > state.threshold2]
            if pool:
                best = max(pool, key=lambda i: mwi[i])
                noise = [i for i in noise if i > best]
                accept(best, searchback=True)
        h = mwi[p]
        is_qrs = h > state.threshold1 and (not qrs or p - qrs[-1] >= refractory)
        if is_qrs and qrs and p - qrs[-1] < T_WAVE_S * fs:
            # likely a T wave if its slope is under half the previous QRS slope
            if max_slope(p) < 0.5 * max_slope(qrs[-1]):
                is_qrs = False
        if is_qrs:
            accept(p)
            noise.clear()
        else:
            state.noise_peak(h)
            noise.append(p)
    return PanTompkinsTrace(bp, d, mwi, qrs, state)


def detect_r_peaks(signal, fs: float) -> list[int]:
    """R-peak sample indices, strictly increasing and at least 200 ms apart.

    Each Pan-Tompkins detection is moved to the maximum of the band-passed
    signal within +-50 ms.
    """
    trace = pan_tompkins(signal, fs)
    half = int(round(REFINE_S * fs))
    bp = trace.bandpassed
    out: list[int] = []
    for q in trace.qrs_indices:
        r = _refine(bp, q, half)
        if out and r - out[-1] < trace.state.refractory_samples:
            if bp[r] > bp[out[-1]]:
                out[-1] = r
            continue
        out.append(r)
    return out


def match_peaks(true_peaks, detected, tolerance: int) -> tuple[int, int, int]:
    """Greedy one-to-one matching within ``tolerance`` samples.

    Returns (true positives, false negatives, false positives).
    """
    true_peaks = np.asarray(true_peaks, dtype=np.int64)
    used = np.zeros(true_peaks.size, dtype=bool)
    tp = 0
    for d in detected:
        if true_peaks.size == 0:
            break
        dist = np.abs(true_peaks - d).astype(float)
        dist[used] = np.inf
        j = int(np.argmin(dist))
        if dist[j] <= tolerance:
            used[j] = True
            tp += 1
    return tp, int(true_peaks.size - tp), int(len(detected) - tp)
