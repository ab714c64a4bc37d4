import numpy as np
import pytest
from scipy.signal import freqz

from twostream_ecg.errors import ParameterError
from twostream_ecg.preprocess import denoise
from twostream_ecg.qrs import (DetectorState, bandpass_taps, derivative, detect_r_peaks, match_peaks,
                               moving_window_integral, pan_tompkins)
from twostream_ecg.synth import SynthesisParams, synthesize


@pytest.mark.parametrize("fs", [250, 360, 500])
def test_bandpass_minus3db_points(fs):
    taps = bandpass_taps(fs)
    assert np.allclose(taps, taps[::-1])  # linear phase
    w, h = freqz(taps, worN=2**16, fs=fs)
    mag = 20 * np.log10(np.abs(h) / np.abs(h).max())
    above = w[mag >= -3.0]
    assert abs(above.min() - 5.0) <= 1.0 and abs(above.max() - 15.0) <= 1.0


def test_state_update_rules():
    s = DetectorState(spki=8.0, npki=2.0, rr_average=None, refractory_samples=100)
    assert s.threshold1 == 2.0 + 0.25 * 6.0 and s.threshold2 == s.threshold1 / 2
    s.signal_peak(16.0)
    assert s.spki == 0.125 * 16 + 0.875 * 8
    s.noise_peak(10.0)
    assert s.npki == 0.125 * 10 + 0.875 * 2


def test_derivative_and_window():
    fs = 200
    t = np.arange(400) / fs
    d = derivative(3.0 * t, fs)
    assert np.allclose(d[2:-2], 3.0)
    m = moving_window_integral(np.ones(400), fs)
    assert np.allclose(m[40:-40], 1.0)


def test_jitterless_60bpm_exact():
    syn = synthesize(SynthesisParams(fs=500, duration_s=10, mean_rr_s=1.0, seed=0))
    peaks = detect_r_peaks(syn.clean, 500)
    assert len(peaks) == 10
    assert np.max(np.abs(np.array(peaks) - syn.r_peaks)) <= 10


def test_flat_and_zero():
    assert detect_r_peaks(np.zeros(2000), 500) == []
    assert detect_r_peaks(np.full(2000, 3.0), 500) == []


def test_preconditions():
    with pytest.raises(ParameterError):
        detect_r_peaks(np.zeros(2000), 50)
    with pytest.raises(ParameterError):
        detect_r_peaks(np.zeros(999), 500)


@pytest.mark.parametrize("seed", range(8))
def test_noisy_records_monotone_and_refractory(seed):
    rng = np.random.default_rng(seed)
    p = SynthesisParams(seed=seed, noise_snr_db=10.0, mean_rr_s=float(rng.uniform(0.5, 1.2)), rr_jitter_s=0.03)
    syn = synthesize(p)
    peaks = detect_r_peaks(denoise(syn.noisy, 500), 500)
    assert all(b - a >= 100 for a, b in zip(peaks, peaks[1:]))
    tp, fn, fp = match_peaks(syn.r_peaks, peaks, 25)
    assert fn <= 1 and fp <= 1


def test_searchback_recovers_small_beat():
    # one beat at a fifth of the amplitude, after the learning period
    syn = synthesize(SynthesisParams(fs=500, duration_s=10, mean_rr_s=0.8, seed=1))
    x = syn.clean.copy()
    r = syn.r_peaks[6]
    x[r - 60 : r + 60] *= 0.35
    peaks = detect_r_peaks(x, 500)
    tp, fn, fp = match_peaks(syn.r_peaks, peaks, 25)
    assert fn == 0 and fp == 0


def test_trace_intermediates():
    syn = synthesize(SynthesisParams(seed=2))
    tr = pan_tompkins(syn.clean, 500)
    assert tr.bandpassed.size == tr.integrated.size == syn.clean.size
    assert tr.state.spki >= tr.state.npki >= 0


def test_match_peaks():
    assert match_peaks([100, 200, 300], [102, 290, 500], 10) == (2, 1, 1)
    assert match_peaks([], [5], 10) == (0, 0, 1)
