"""Beat frames (R-centred windows) and fixed-length frame sequences."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConstantFrameError, EmptyInputError, TooShortError
from .preprocess import resample, zscore

FRAME_LEN = 300
FRAME_FS = 500
SEQ_LEN = 10
PRE_R_S = 0.25
POST_R_S = 0.35
METHODS = ("r_centered", "chronological")


@dataclass(frozen=True, eq=False)
class BeatFrame:
    samples: np.ndarray
    source_record: str = ""
    r_index: int | None = None
    label: str | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != (FRAME_LEN,):
            raise ValueError(f"frame must hold {FRAME_LEN} samples, got shape {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def is_padding(self) -> bool:
        return not self.samples.any()

    @classmethod
    def zeros(cls, source_record: str = "", label=None) -> "BeatFrame":
        return cls(np.zeros(FRAME_LEN), source_record, None, label)


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: tuple[BeatFrame, ...]
    label: str | None
    method: str

    def __post_init__(self):
        if len(self.frames) != SEQ_LEN:
            raise ValueError(f"sequence must hold {SEQ_LEN} frames, got {len(self.frames)}")
        if self.method not in METHODS:
            raise ValueError(f"unknown framing method {self.method!r}")

    def as_array(self) -> np.ndarray:
        """(10, 300) array, padding rows all-zero."""
        return np.stack([f.samples for f in self.frames])

    @property
    def n_padding(self) -> int:
        return sum(f.is_padding for f in self.frames)


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.size >= n:
        return x[:n]
    return np.concatenate([x, np.full(n - x.size, x[-1])])


def segment_beats(signal, fs: int, r_peaks: Sequence[int], label=None,
                  source_record: str = "", labels: Sequence | None = None):
    """Cut a window of 0.25 s before to 0.35 s after each R peak.

    Windows are resampled to 300 samples when ``fs`` is not 500 Hz, then
    Z-scored.  Windows that leave the signal, and constant windows, are
    skipped.  ``labels`` optionally gives a per-beat label overriding
    ``label``.  Returns ``(frames, n_skipped)``.
    """
    x = np.asarray(signal, dtype=float)
    pre, post = int(round(PRE_R_S * fs)), int(round(POST_R_S * fs))
    frames: list[BeatFrame] = []
    skipped = 0
    for k, r in enumerate(r_peaks):
        r = int(r)
        lo, hi = r - pre, r + post
        if lo < 0 or hi > x.size:
            skipped += 1
            continue
        win = x[lo:hi]
        if fs != FRAME_FS:
            win = _fit_length(resample(win, fs, FRAME_FS), FRAME_LEN)
        try:
            win = zscore(win)
        except ConstantFrameError:
            skipped += 1
            continue
        frames.append(BeatFrame(win, source_record, r, labels[k] if labels is not None else label))
    return frames, skipped


def chronological_starts(length: int, n: int = SEQ_LEN) -> list[int]:
    """Equally spaced frame starts: round(i * (L - 300) / (n - 1)), half up."""
    if length < FRAME_LEN:
        raise TooShortError(f"signal of {length} samples is shorter than one frame")
    if n == 1:
        return [0]
    span = length - FRAME_LEN
    return [int(np.floor(i * span / (n - 1) + 0.5)) for i in range(n)]


def chronological_frames(signal, fs: int, n: int = SEQ_LEN, label=None,
                         source_record: str = "") -> list[BeatFrame]:
    """Split a signal (after conversion to 500 Hz) into ``n`` equally spaced
    300-sample frames.  Constant frames are dropped."""
    x = np.asarray(signal, dtype=float)
    if fs != FRAME_FS:
        x = resample(x, fs, FRAME_FS)
    frames = []
    for s in chronological_starts(x.size, n):
        try:
            frames.append(BeatFrame(zscore(x[s : s + FRAME_LEN]), source_record, None, label))
        except ConstantFrameError:
            continue
    return frames


def build_sequence(frames: Sequence[BeatFrame], label, method: str) -> FrameSequence:
    """Keep the first 10 frames; zero-pad at the end when fewer are given."""
    if len(frames) == 0:
        raise EmptyInputError("cannot build a sequence from zero frames")
    kept = list(frames[:SEQ_LEN])
    src = kept[0].source_record
    kept += [BeatFrame.zeros(src, label) for _ in range(SEQ_LEN - len(kept))]
    return FrameSequence(tuple(kept), label, method)


def frames_to_csv(frames: Sequence[BeatFrame]) -> str:
    """One row per frame: 300 values then the label."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(FRAME_LEN)] + ["label"])
    for f in frames:
        w.writerow([repr(float(v)) for v in f.samples] + ["" if f.label is None else f.label])
    return buf.getvalue()
