import numpy as np
import pytest

from twostream_ecg.datasets import (MORPHOLOGIES, TASKS, ClassSpec, load_prepared, prepare_record,
                                    save_prepared, synthetic_dataset, task_params, to_arrays)
from twostream_ecg.annotations import SYMBOL_TO_CLASS
from twostream_ecg.errors import DataError
from twostream_ecg.records import EcgRecord
from twostream_ecg.synth import SynthesisParams, synthesize


def test_presets_feasible():
    for name, classes in TASKS.items():
        for p in task_params(classes, 3, seed=1):
            p.validate()


def test_task_params_deterministic_and_varied():
    a = task_params(TASKS["morph4"], 4, seed=2)
    assert a == task_params(TASKS["morph4"], 4, seed=2)
    assert len({p.morphology for p in a}) == len(a)
    assert [p.class_label for p in a] == [c.label for c in TASKS["morph4"] for _ in range(4)]


def test_class_spec_from_dict():
    assert ClassSpec.from_dict({"label": "X", "morphology": "compact"}).morphology == "compact"
    with pytest.raises(ValueError):
        ClassSpec.from_dict({"label": "X", "colour": 1})
    with pytest.raises(ValueError):
        ClassSpec.from_dict({"morphology": "normal"})
    with pytest.raises(ValueError):
        ClassSpec.from_dict({"label": "X", "morphology": "zigzag"})


def test_compact_morphology_stays_inside_window_at_120bpm():
    # at RR 0.5 s the neighbouring beats contribute nothing inside [-0.25, 0.35) s
    for name in ("compact", "compact_deep_s"):
        for a, mu, w in MORPHOLOGIES[name]:
            assert mu - 0.5 + 4 * w < -0.25 or a == 0
            assert mu + 0.5 - 4 * w >= 0.35 or a == 0


def test_prepare_record_with_truth():
    syn = synthesize(SynthesisParams(seed=1, noise_snr_db=20))
    p = prepare_record(syn.record, "N", r_peaks=syn.r_peaks)
    assert list(p.r_peaks) == list(syn.r_peaks) and len(p.beats) >= 9
    assert p.r_centered.shape == (10, 300) and p.chronological.shape == (10, 300)
    assert np.array_equal(p.first_frame, p.beats[0].samples)


def test_prepare_record_annotations():
    syn = synthesize(SynthesisParams(seed=1))
    anns = tuple((r, s) for r, s in zip(syn.r_peaks, "NVNAN+NNNN") if s != "+")
    rec = EcgRecord(syn.record.name, 500, syn.record.gain, 0, syn.record.samples, anns)
    p = prepare_record(rec, use_annotations=True)
    lab = dict(anns)
    assert all(b.label == SYMBOL_TO_CLASS[lab[b.r_index]] for b in p.beats)
    assert p.beats[3].label == "S"
    assert "V" in [b.label for b in p.beats] and "+" not in [b.label for b in p.beats]


def test_arrays_and_cache_roundtrip(tmp_path):
    prep, names = synthetic_dataset(TASKS["rr"], 2, seed=4)
    arr = to_arrays(prep, names)
    assert arr.first_frames.shape == (4, 300) and arr.labels.tolist() == [0, 0, 1, 1]
    assert arr.sequences["chronological"].shape == (4, 10, 300)
    assert arr.beats.shape[0] == arr.beat_labels.size == arr.beat_records.size
    save_prepared(tmp_path / "p.npz", prep, {"k": 1})
    back, meta = load_prepared(tmp_path / "p.npz")
    assert meta == {"k": 1}
    arr2 = to_arrays(back, names)
    assert np.array_equal(arr.beats, arr2.beats) and np.array_equal(arr.sequences["r_centered"],
                                                                   arr2.sequences["r_centered"])


def test_to_arrays_requires_beats():
    with pytest.raises(DataError):
        to_arrays([], ["a"])
