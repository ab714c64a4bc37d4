import numpy as np
import pytest

from twostream_ecg.errors import EmptyInputError, TooShortError
from twostream_ecg.framing import (FRAME_LEN, BeatFrame, build_sequence, chronological_frames,
                                   chronological_starts, frames_to_csv, segment_beats)
from twostream_ecg.preprocess import resample, zscore
from twostream_ecg.synth import SynthesisParams, synthesize


def test_window_at_500(rng):
    x = rng.normal(size=3000)
    frames, skipped = segment_beats(x, 500, [1000])
    assert skipped == 0 and frames[0].samples.size == 300
    assert np.allclose(frames[0].samples, zscore(x[875:1075 + 100]))  # [875, 1175)
    assert frames[0].r_index == 1000


def test_window_underflow_and_overflow(rng):
    x = rng.normal(size=2000)
    frames, skipped = segment_beats(x, 500, [50, 1000, 1900])
    assert skipped == 2 and [f.r_index for f in frames] == [1000]


def test_window_at_360(rng):
    x = rng.normal(size=3000)
    frames, _ = segment_beats(x, 360, [1000])
    raw = x[910:1126]
    assert raw.size == 216
    expected = zscore(resample(raw, 360, 500)[:300])
    assert np.allclose(frames[0].samples, expected)


def test_constant_window_dropped():
    x = np.zeros(3000)
    x[2000:] = np.arange(1000)
    frames, skipped = segment_beats(x, 500, [1000, 2500])
    assert skipped == 1 and len(frames) == 1


def test_per_beat_labels(rng):
    x = rng.normal(size=3000)
    frames, _ = segment_beats(x, 500, [500, 1000], label="N", labels=["V", "S"])
    assert [f.label for f in frames] == ["V", "S"]


def test_chronological_starts():
    assert chronological_starts(5000, 10) == [0, 522, 1044, 1567, 2089, 2611, 3133, 3656, 4178, 4700]
    assert chronological_starts(300, 10) == [0] * 10
    with pytest.raises(TooShortError):
        chronological_starts(299, 10)


def test_chronological_frames_resample(rng):
    x = rng.normal(size=3600)  # 10 s at 360 Hz -> 5000 samples at 500 Hz
    frames = chronological_frames(x, 360)
    assert len(frames) == 10 and all(f.r_index is None for f in frames)
    y = resample(x, 360, 500)
    assert np.allclose(frames[3].samples, zscore(y[1567:1867]))


def test_r_centred_frames_translation_invariant():
    syn = synthesize(SynthesisParams(fs=500, duration_s=10, mean_rr_s=0.8, seed=3))
    frames, _ = segment_beats(syn.clean, 500, syn.r_peaks)
    for f in frames[1:]:
        assert np.max(np.abs(f.samples - frames[0].samples)) < 1e-6


def test_chronological_offsets_linear():
    # R offset inside frame i is (R - start_i) mod period: linear in i modulo the period
    syn = synthesize(SynthesisParams(fs=500, duration_s=10, mean_rr_s=0.8, seed=3))
    period = 400
    first = syn.r_peaks[0]
    starts = chronological_starts(syn.clean.size, 10)
    frames = chronological_frames(syn.clean, 500)
    offsets = [(first - s) % period for s in starts]
    checked = 0
    for off, f in zip(offsets, frames):
        if 20 <= off < FRAME_LEN - 20:  # R fully inside: the frame maximum sits on it
            assert int(np.argmax(f.samples)) == off
            checked += 1
    assert checked >= 5
    assert not all(np.allclose(frames[0].samples, f.samples) for f in frames[1:])


def test_build_sequence_pad_truncate():
    fr = [BeatFrame(zscore(np.arange(300.0) + i), "r", i, "N") for i in range(12)]
    s7 = build_sequence(fr[:7], "N", "r_centered")
    assert len(s7.frames) == 10 and s7.n_padding == 3
    assert all(f.is_padding for f in s7.frames[7:]) and not any(f.is_padding for f in s7.frames[:7])
    s12 = build_sequence(fr, "N", "r_centered")
    assert [f.r_index for f in s12.frames] == list(range(10))
    s10 = build_sequence(fr[:10], "N", "chronological")
    assert np.array_equal(s10.as_array(), np.stack([f.samples for f in fr[:10]]))
    with pytest.raises(EmptyInputError):
        build_sequence([], "N", "r_centered")


def test_frame_invariants():
    with pytest.raises(ValueError):
        BeatFrame(np.zeros(299), "r", None, None)
    with pytest.raises(ValueError):
        build_sequence([BeatFrame.zeros()], "N", "sideways")


def test_csv_export(rng):
    frames, _ = segment_beats(rng.normal(size=3000), 500, [1000, 2000], label="V")
    lines = frames_to_csv(frames).strip().split("\n")
    assert len(lines) == 3
    row = lines[1].split(",")
    assert len(row) == FRAME_LEN + 1 and row[-1] == "V"
    assert np.allclose([float(v) for v in row[:-1]], frames[0].samples)
