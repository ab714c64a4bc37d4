"""Synthetic task builders and record -> model-input preparation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .annotations import MITBIH_CLASSES, beat_annotations, map_symbols_to_classes
from .errors import DataError
from .framing import (FRAME_LEN, SEQ_LEN, BeatFrame, build_sequence, chronological_frames,
                      segment_beats)
from .preprocess import denoise
from .qrs import detect_r_peaks
from .records import EcgRecord
from .rng import make_rng
from .synth import NORMAL, SynthesisParams, synthesize

MORPHOLOGIES: dict[str, tuple] = {
    "normal": NORMAL,
    # narrow P and T close to the QRS so a 0.6 s window sees no neighbour at 120 bpm
    "compact": (
        (0.15, -0.10, 0.012),
        (-0.10, -0.025, 0.007),
        (1.00, 0.0, 0.010),
        (-0.25, 0.025, 0.007),
        (0.30, 0.15, 0.020),
    ),
    "compact_inverted_t": (
        (0.15, -0.10, 0.012),
        (-0.10, -0.025, 0.007),
        (1.00, 0.0, 0.010),
        (-0.25, 0.025, 0.007),
        (-0.30, 0.15, 0.020),
    ),
    "compact_deep_s": (
        (0.15, -0.10, 0.012),
        (-0.10, -0.025, 0.007),
        (1.00, 0.0, 0.010),
        (-0.50, 0.025, 0.007),
        (0.30, 0.15, 0.020),
    ),
    "wide_qrs": (
        (0.15, -0.20, 0.025),
        (-0.15, -0.050, 0.015),
        (0.90, 0.0, 0.022),
        (-0.35, 0.055, 0.015),
        (0.30, 0.27, 0.045),
    ),
    "inverted_t": (
        (0.15, -0.20, 0.025),
        (-0.10, -0.030, 0.008),
        (1.00, 0.0, 0.010),
        (-0.25, 0.030, 0.008),
        (-0.30, 0.25, 0.040),
    ),
    "no_p_deep_s": (
        (0.0, -0.20, 0.025),
        (-0.05, -0.030, 0.008),
        (0.80, 0.0, 0.010),
        (-0.60, 0.035, 0.010),
        (0.30, 0.25, 0.040),
    ),
}


@dataclass(frozen=True)
class ClassSpec:
    """How to synthesise one class of records."""

    label: str
    morphology: str = "normal"
    mean_rr_s: float = 1.0
    rr_jitter_s: float = 0.03
    noise_snr_db: float | None = 20.0
    amplitude_jitter: float = 0.1  # per-record relative scale spread of each deflection
    rr_spread_s: float = 0.0  # per-record uniform spread of the mean RR

    @classmethod
    def from_dict(cls, d: dict) -> "ClassSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown class keys: {sorted(unknown)}")
        if "label" not in d:
            raise ValueError("class spec needs a 'label'")
        if d.get("morphology", "normal") not in MORPHOLOGIES:
            raise ValueError(f"unknown morphology {d['morphology']!r}; known: {sorted(MORPHOLOGIES)}")
        return cls(**d)


TASKS: dict[str, tuple[ClassSpec, ...]] = {
    # identical morphology, rhythm only
    "rr": (
        ClassSpec("HR60", "compact", mean_rr_s=1.0, rr_jitter_s=0.005, noise_snr_db=None),
        ClassSpec("HR120", "compact", mean_rr_s=0.5, rr_jitter_s=0.005, noise_snr_db=None),
    ),
    # identical rhythm distribution, morphology only
    "morph": (
        ClassSpec("SHALLOW_S", "compact", mean_rr_s=0.75, rr_spread_s=0.25, noise_snr_db=10.0),
        ClassSpec("DEEP_S", "compact_deep_s", mean_rr_s=0.75, rr_spread_s=0.25, noise_snr_db=10.0),
    ),
    "morph4": (
        ClassSpec("NORMAL", "normal"),
        ClassSpec("WIDE_QRS", "wide_qrs"),
        ClassSpec("INVERTED_T", "inverted_t"),
        ClassSpec("NO_P", "no_p_deep_s"),
    ),
    # half the class boundaries are morphological, half rhythmic
    "mixed": (
        ClassSpec("SHALLOW_S_60", "compact", mean_rr_s=1.0, rr_jitter_s=0.005, noise_snr_db=10.0),
        ClassSpec("SHALLOW_S_120", "compact", mean_rr_s=0.5, rr_jitter_s=0.005, noise_snr_db=10.0),
        ClassSpec("DEEP_S_60", "compact_deep_s", mean_rr_s=1.0, rr_jitter_s=0.005, noise_snr_db=10.0),
        ClassSpec("DEEP_S_120", "compact_deep_s", mean_rr_s=0.5, rr_jitter_s=0.005, noise_snr_db=10.0),
    ),
}


def record_params(spec: ClassSpec, seed: int, name: str, fs: int = 500,
                  duration_s: float = 10.0) -> SynthesisParams:
    """Per-record synthesis parameters with seeded patient-level variation."""
    rng = make_rng(seed, 30)
    base = MORPHOLOGIES[spec.morphology]
    scale = 1 + spec.amplitude_jitter * rng.uniform(-1, 1, size=len(base))
    morph = tuple((a * s, mu, w) for (a, mu, w), s in zip(base, scale))
    rr = spec.mean_rr_s + (rng.uniform(-1, 1) * spec.rr_spread_s if spec.rr_spread_s else 0.0)
    return SynthesisParams(
        fs=fs, duration_s=duration_s, mean_rr_s=rr, rr_jitter_s=spec.rr_jitter_s,
        class_label=spec.label, morphology=morph, noise_snr_db=spec.noise_snr_db,
        seed=seed, name=name,
    )


def task_params(classes: Sequence[ClassSpec], records_per_class: int, seed: int = 0,
                fs: int = 500, duration_s: float = 10.0) -> list[SynthesisParams]:
    out = []
    for ci, spec in enumerate(classes):
        for k in range(records_per_class):
            rec_seed = int(make_rng(seed, 31, ci, k).integers(0, 2**62))
            out.append(record_params(spec, rec_seed, f"{spec.label.lower()}_{k:04d}", fs, duration_s))
    return out


# -- record preparation -------------------------------------------------------------

@dataclass
class PreparedRecord:
    """Everything the models need from one record."""

    name: str
    label: str | None
    fs: int
    r_peaks: list[int]
    beats: list[BeatFrame]
    r_centered: np.ndarray  # (10, 300)
    chronological: np.ndarray  # (10, 300)
    skipped_beats: int = 0

    @property
    def first_frame(self) -> np.ndarray:
        return self.r_centered[0]

    def sequence(self, method: str) -> np.ndarray:
        return self.r_centered if method == "r_centered" else self.chronological


def prepare_record(record: EcgRecord, label=None, r_peaks: Iterable[int] | None = None,
                   use_annotations: bool = False, clean: bool = True) -> PreparedRecord:
    """Denoise, locate R peaks, and cut beat frames plus both 10-frame sequences.

    R peaks come from ``r_peaks`` if given, from the record's beat
    annotations when ``use_annotations`` is set (beats are then labelled with
    their AAMI class), and from the Pan-Tompkins detector otherwise.
    """
    x = record.physical()
    if clean:
        x = denoise(x, record.fs)
    beat_labels = None
    if r_peaks is not None:
        peaks = [int(p) for p in r_peaks]
    elif use_annotations:
        kept, _ = beat_annotations(record.annotations)
        peaks = [i for i, _ in kept]
        beat_labels = map_symbols_to_classes([s for _, s in kept])
    else:
        peaks = detect_r_peaks(x, record.fs)
    beats, skipped = segment_beats(x, record.fs, peaks, label=label, source_record=record.name,
                                   labels=beat_labels)
    r_seq = _sequence(beats, label, "r_centered", record.name)
    chrono = chronological_frames(x, record.fs, SEQ_LEN, label=label, source_record=record.name)
    c_seq = _sequence(chrono, label, "chronological", record.name)
    return PreparedRecord(record.name, label, record.fs, peaks, beats, r_seq, c_seq, skipped)


def _sequence(frames, label, method, name) -> np.ndarray:
    if not frames:
        return np.zeros((SEQ_LEN, FRAME_LEN))
    return build_sequence(frames, label, method).as_array()


def synthetic_dataset(classes: Sequence[ClassSpec], records_per_class: int, seed: int = 0,
                      fs: int = 500, duration_s: float = 10.0, detect: bool = True):
    """Synthesise and prepare a labelled record set.

    Returns (prepared records, class names).  With ``detect=False`` the
    generator's true R peaks are used instead of the detector.
    """
    names = [c.label for c in classes]
    prepared = []
    for p in task_params(classes, records_per_class, seed, fs, duration_s):
        syn = synthesize(p)
        prepared.append(prepare_record(syn.record, p.class_label,
                                       None if detect else syn.r_peaks))
    return prepared, names


@dataclass
class ArraySet:
    """Model-ready arrays for one split."""

    names: list[str]
    labels: np.ndarray  # record labels (class indices)
    first_frames: np.ndarray  # (N, 300)
    sequences: dict[str, np.ndarray] = field(default_factory=dict)  # method -> (N, 10, 300)
    beats: np.ndarray | None = None  # (M, 300)
    beat_labels: np.ndarray | None = None
    beat_records: np.ndarray | None = None  # record index of every beat

    def __len__(self):
        return len(self.names)


def to_arrays(prepared: Sequence[PreparedRecord], class_names: Sequence[str],
              beat_level: bool = False) -> ArraySet:
    """Stack prepared records.  Records without any usable beat are dropped
    from the record-level arrays (their first frame would be padding)."""
    index = {c: i for i, c in enumerate(class_names)}
    keep = [p for p in prepared if p.beats]
    if not keep:
        raise DataError("no record produced a usable beat")
    beats, blabels, brec = [], [], []
    for k, p in enumerate(keep):
        for b in p.beats:
            beats.append(b.samples)
            lab = b.label if beat_level else p.label
            blabels.append(index[lab])
            brec.append(k)
    return ArraySet(
        names=[p.name for p in keep],
        labels=np.array([index[p.label] for p in keep], dtype=np.int64) if not beat_level
        else np.full(len(keep), -1, dtype=np.int64),
        first_frames=np.stack([p.first_frame for p in keep]),
        sequences={
            "r_centered": np.stack([p.r_centered for p in keep]),
            "chronological": np.stack([p.chronological for p in keep]),
        },
        beats=np.stack(beats),
        beat_labels=np.array(blabels, dtype=np.int64),
        beat_records=np.array(brec, dtype=np.int64),
    )


def subset(prepared: Sequence[PreparedRecord], names: Iterable[str]) -> list[PreparedRecord]:
    wanted = set(names)
    return [p for p in prepared if p.name in wanted]


# -- on-disk cache -------------------------------------------------------------------

def save_prepared(path, prepared: Sequence[PreparedRecord], meta: dict | None = None) -> None:
    """Write prepared records to one ``.npz`` file (atomically)."""
    import io
    import json

    from .nn.checkpoint import atomic_write

    counts = np.array([len(p.beats) for p in prepared], dtype=np.int64)
    n_peaks = np.array([len(p.r_peaks) for p in prepared], dtype=np.int64)
    empty = np.zeros((0, FRAME_LEN))
    arrays = dict(
        names=np.array([p.name for p in prepared], dtype=str),
        labels=np.array(["" if p.label is None else str(p.label) for p in prepared], dtype=str),
        fs=np.array([p.fs for p in prepared], dtype=np.int64),
        skipped=np.array([p.skipped_beats for p in prepared], dtype=np.int64),
        n_peaks=n_peaks,
        r_peaks=np.array([i for p in prepared for i in p.r_peaks], dtype=np.int64),
        n_beats=counts,
        beats=np.concatenate([np.stack([b.samples for b in p.beats]) if p.beats else empty for p in prepared])
        if prepared else empty,
        beat_r=np.array([b.r_index for p in prepared for b in p.beats], dtype=np.int64),
        beat_labels=np.array(["" if b.label is None else str(b.label) for p in prepared for b in p.beats],
                             dtype=str),
        r_centered=np.stack([p.r_centered for p in prepared]) if prepared else np.zeros((0, SEQ_LEN, FRAME_LEN)),
        chronological=np.stack([p.chronological for p in prepared]) if prepared
        else np.zeros((0, SEQ_LEN, FRAME_LEN)),
        meta=np.array(json.dumps(meta or {}, sort_keys=True)),
    )
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write(path, buf.getvalue())


def load_prepared(path) -> tuple[list[PreparedRecord], dict]:
    import json

    with np.load(path, allow_pickle=False) as z:
        a = {k: z[k] for k in z.files}
    out = []
    pk = np.concatenate([[0], np.cumsum(a["n_peaks"])])
    bk = np.concatenate([[0], np.cumsum(a["n_beats"])])
    for i, name in enumerate(a["names"]):
        label = str(a["labels"][i]) or None
        beats = [
            BeatFrame(a["beats"][j], str(name), int(a["beat_r"][j]), str(a["beat_labels"][j]) or None)
            for j in range(bk[i], bk[i + 1])
        ]
        out.append(PreparedRecord(
            str(name), label, int(a["fs"][i]), [int(v) for v in a["r_peaks"][pk[i]:pk[i + 1]]],
            beats, a["r_centered"][i], a["chronological"][i], int(a["skipped"][i]),
        ))
    return out, json.loads(str(a["meta"]))


__all__ = [
    "MORPHOLOGIES", "TASKS", "ClassSpec", "PreparedRecord", "ArraySet", "MITBIH_CLASSES",
    "record_params", "task_params", "prepare_record", "synthetic_dataset", "to_arrays", "subset",
    "save_prepared", "load_prepared",
]
