import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twostream_ecg.errors import ConstantFrameError, EmptyInputError, LevelError, ParameterError
from twostream_ecg.preprocess import denoise, denoise_levels, resample, zscore
from twostream_ecg.synth import SynthesisParams, snr_db, synthesize


def drift_power(x, fs, f=0.3):
    """Power of the least-squares projection onto a sinusoid at f."""
    t = np.arange(x.size) / fs
    basis = np.stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.mean((basis @ coef) ** 2))


class TestDenoise:
    def test_levels(self):
        assert denoise_levels(5000, 500) == 9
        assert denoise_levels(3600, 360) == 8
        assert denoise_levels(64, 500) == 4

    def test_zero_signal(self):
        assert np.all(denoise(np.zeros(2000)) == 0)

    def test_length_preserved(self, rng):
        assert denoise(rng.normal(size=3001)).size == 3001

    def test_too_short(self):
        with pytest.raises(LevelError):
            denoise(np.ones(3))

    @pytest.mark.parametrize("seed", range(4))
    def test_improves_snr(self, seed):
        syn = synthesize(SynthesisParams(seed=seed, noise_snr_db=10.0, rr_jitter_s=0.03))
        out = denoise(syn.noisy, 500)
        ref = syn.clean - np.median(syn.clean)
        assert snr_db(ref, out) > 13.0

    def test_baseline_drift_removed(self):
        syn = synthesize(SynthesisParams(seed=3))
        fs = 500
        t = np.arange(syn.clean.size) / fs
        drift = syn.clean.max() * np.sin(2 * np.pi * 0.3 * t)
        out = denoise(syn.clean + drift, fs)
        assert drift_power(out, fs) * 10 <= drift_power(drift, fs)

    def test_second_pass_no_worse(self):
        syn = synthesize(SynthesisParams(seed=5, noise_snr_db=10.0))
        ref = syn.clean - np.median(syn.clean)
        once = denoise(syn.noisy)
        twice = denoise(once)
        assert np.sum((twice - ref) ** 2) <= 1.01 * np.sum((once - ref) ** 2)


class TestResample:
    def test_upsample_clamped(self):
        assert resample([0, 1, 2, 3], 100, 200).tolist() == [0, 0.5, 1, 1.5, 2, 2.5, 3, 3]

    def test_identity_and_empty(self, rng):
        x = rng.normal(size=17)
        assert np.array_equal(resample(x, 360, 360), x)
        assert resample([], 360, 500).size == 0

    def test_bad_rate(self):
        with pytest.raises(ParameterError):
            resample([1, 2], 0, 500)

    def test_sine_360_to_500(self):
        t_in = np.arange(3600) / 360
        out = resample(np.sin(2 * np.pi * 5 * t_in), 360, 500)
        assert out.size == 5000
        t_out = np.arange(out.size) / 500
        inside = t_out <= t_in[-1]
        assert np.max(np.abs(out[inside] - np.sin(2 * np.pi * 5 * t_out[inside]))) < 1e-3

    def test_constant_preserved(self):
        assert np.all(resample(np.full(100, 2.5), 360, 500) == 2.5)

    def test_endpoints(self, rng):
        x = rng.normal(size=360)
        y = resample(x, 360, 720)
        assert y[0] == x[0] and y[-1] == x[-1]


class TestZscore:
    def test_example(self):
        assert np.allclose(zscore([1, 2, 3]), [-1.22474487, 0, 1.22474487])

    def test_constant(self):
        with pytest.raises(ConstantFrameError):
            zscore([5, 5, 5])

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            zscore([])

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.integers(2, 400), elements=st.floats(-1e3, 1e3)))
    def test_stats_and_idempotence(self, x):
        if x.std() < 1e-6:
            return
        z = zscore(x)
        assert abs(z.mean()) < 1e-9 and abs(z.std() - 1) < 1e-9
        assert np.max(np.abs(zscore(z) - z)) < 1e-9
