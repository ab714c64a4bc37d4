"""Sum-of-Gaussians synthetic ECG with known R-peak positions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .records import EcgRecord
from .rng import make_rng

# (amplitude mV, centre offset from R in s, width s) for P, Q, R, S, T
Deflection = tuple[float, float, float]

NORMAL: tuple[Deflection, ...] = (
    (0.15, -0.20, 0.025),
    (-0.10, -0.030, 0.008),
    (1.00, 0.0, 0.010),
    (-0.25, 0.030, 0.008),
    (0.30, 0.25, 0.040),
)

WAVE_NAMES = ("P", "Q", "R", "S", "T")
WANDER_HZ = 0.3


@dataclass(frozen=True)
class SynthesisParams:
    fs: int = 500
    duration_s: float = 10.0
    mean_rr_s: float = 1.0
    rr_jitter_s: float = 0.0
    class_label: str = "HC"
    morphology: tuple[Deflection, ...] = NORMAL
    noise_snr_db: float | None = None
    seed: int = 0
    wander_fraction: float = 0.5
    gain: float = 200.0
    name: str = "synth"

    def __post_init__(self):
        morph = tuple(tuple(float(v) for v in d) for d in self.morphology)
        object.__setattr__(self, "morphology", morph)

    def validate(self) -> None:
        if self.fs <= 0 or int(self.fs) != self.fs:
            raise ParameterError(f"fs must be a positive integer, got {self.fs}")
        if self.duration_s <= 0:
            raise ParameterError("duration_s must be positive")
        if len(self.morphology) != 5 or any(len(d) != 3 for d in self.morphology):
            raise ParameterError("morphology needs five (amplitude, offset, width) triples")
        widths = [w for _, _, w in self.morphology]
        if min(widths) <= 0:
            raise ParameterError("deflection widths must be positive")
        if self.mean_rr_s <= 2 * max(widths):
            raise ParameterError("mean_rr_s must exceed twice the widest deflection")
        if self.mean_rr_s <= beat_support(self.morphology):
            raise ParameterError(
                f"mean_rr_s={self.mean_rr_s} is shorter than the beat support "
                f"{beat_support(self.morphology):.3f} s (P to T centre span)"
            )
        if self.rr_jitter_s < 0:
            raise ParameterError("rr_jitter_s must be non-negative")
        if not 0 <= self.wander_fraction <= 1:
            raise ParameterError("wander_fraction must lie in [0, 1]")


def beat_support(morphology) -> float:
    """Span in seconds between the earliest and latest deflection centres."""
    offsets = [mu for _, mu, _ in morphology]
    return max(offsets) - min(offsets)


@dataclass
class SyntheticEcg:
    record: EcgRecord
    r_peaks: np.ndarray
    clean: np.ndarray
    noise: np.ndarray
    params: SynthesisParams = field(repr=False)

    @property
    def noisy(self) -> np.ndarray:
        return self.clean + self.noise


def _r_centres(p: SynthesisParams, n: int, rng: np.random.Generator) -> np.ndarray:
    rr = int(round(p.mean_rr_s * p.fs))
    min_rr = int(np.ceil(beat_support(p.morphology) * p.fs)) + 1
    first = int(round(rng.uniform(0.25, 0.75) * rr))
    centres = []
    r = first
    while r < n:
        centres.append(r)
        step = rr
        if p.rr_jitter_s > 0:
            step = int(round((p.mean_rr_s + rng.normal(0.0, p.rr_jitter_s)) * p.fs))
        r += max(step, min_rr)
    return np.asarray(centres, dtype=np.int64)


def clean_beats(centres: np.ndarray, morphology, fs: int, n: int) -> np.ndarray:
    """Noise-free signal (mV) with one P-QRS-T complex per R centre."""
    sig = np.zeros(n)
    for amp, mu, width in morphology:
        half = int(np.ceil(6 * width * fs))
        off = int(round(mu * fs))
        frac = mu * fs - off
        k = np.arange(-half, half + 1)
        kernel = amp * np.exp(-((k - frac) ** 2) / (2 * (width * fs) ** 2))
        for c in centres:
            lo = c + off - half
            a, b = max(lo, 0), min(lo + kernel.size, n)
            if a < b:
                sig[a:b] += kernel[a - lo : b - lo]
    return sig


def _noise(p: SynthesisParams, clean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = clean.size
    if p.noise_snr_db is None:
        return np.zeros(n)
    target = np.mean(clean**2) / 10 ** (p.noise_snr_db / 10)
    t = np.arange(n) / p.fs
    white = rng.standard_normal(n)
    wander = np.sin(2 * np.pi * WANDER_HZ * t + rng.uniform(0, 2 * np.pi))
    parts = []
    if p.wander_fraction < 1:
        parts.append(white * np.sqrt((1 - p.wander_fraction) * target / np.mean(white**2)))
    if p.wander_fraction > 0:
        parts.append(wander * np.sqrt(p.wander_fraction * target / np.mean(wander**2)))
    noise = np.sum(parts, axis=0)
    return noise * np.sqrt(target / np.mean(noise**2))


def synthesize(params: SynthesisParams) -> SyntheticEcg:
    """Generate a record plus its ground truth (R peaks, clean signal, noise)."""
    params.validate()
    rng = make_rng(params.seed)
    n = int(round(params.duration_s * params.fs))
    centres = _r_centres(params, n, rng)
    clean = clean_beats(centres, params.morphology, params.fs, n)
    r_width = max(1, int(round(params.morphology[2][2] * params.fs)))
    peaks = []
    for c in centres:
        a, b = max(c - r_width, 0), min(c + r_width + 1, n)
        peaks.append(a + int(np.argmax(clean[a:b])))
    noise = _noise(params, clean, rng)
    record = EcgRecord.from_physical(params.name, clean + noise, params.fs, gain=params.gain)
    return SyntheticEcg(record, np.asarray(peaks, dtype=np.int64), clean, noise, params)


def generate_synthetic_record(params: SynthesisParams) -> tuple[EcgRecord, list[int]]:
    syn = synthesize(params)
    return syn.record, syn.r_peaks.tolist()


def snr_db(reference: np.ndarray, observed: np.ndarray) -> float:
    """10·log10 of reference power over residual power."""
    reference = np.asarray(reference, dtype=float)
    resid = np.asarray(observed, dtype=float) - reference
    return float(10 * np.log10(np.sum(reference**2) / np.sum(resid**2)))
