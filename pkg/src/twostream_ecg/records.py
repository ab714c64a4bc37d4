"""ECG records and the WFDB format-212 codec."""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LengthMismatchError, ParameterError, ParseError, RangeError, UnsupportedFormatError

log = logging.getLogger(__name__)

SAMPLE_MIN = -2048
SAMPLE_MAX = 2047


@dataclass(frozen=True, eq=False)
class EcgRecord:
    """A single-lead ECG in raw ADC units.

    ``annotations`` holds ``(sample_index, symbol)`` pairs in strictly
    increasing sample order.
    """

    name: str
    fs: int
    gain: float
    baseline: int
    samples: np.ndarray
    annotations: tuple[tuple[int, str], ...] = field(default=())

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.issubdtype(samples.dtype, np.integer):
            raise ValueError("samples must be integers (ADC units)")
        samples = samples.astype(np.int64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if int(self.fs) != self.fs or self.fs <= 0:
            raise ValueError(f"fs must be a positive integer, got {self.fs}")
        object.__setattr__(self, "fs", int(self.fs))
        if not self.gain > 0:
            raise ValueError(f"gain must be positive, got {self.gain}")
        anns = tuple((int(i), str(s)) for i, s in self.annotations)
        prev = -1
        for idx, _ in anns:
            if not 0 <= idx < len(samples):
                raise ValueError(f"annotation index {idx} outside [0, {len(samples)})")
            if idx <= prev:
                raise ValueError("annotation indices must be strictly increasing")
            prev = idx
        object.__setattr__(self, "annotations", anns)

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EcgRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.fs == other.fs
            and self.gain == other.gain
            and self.baseline == other.baseline
            and self.annotations == other.annotations
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.fs

    def physical(self) -> np.ndarray:
        """Samples converted to millivolts."""
        return (self.samples - self.baseline) / self.gain

    @classmethod
    def from_physical(cls, name, signal_mv, fs, gain=200.0, baseline=0, annotations=()):
        adc = np.rint(np.asarray(signal_mv, dtype=float) * gain + baseline).astype(np.int64)
        return cls(name, fs, gain, baseline, adc, tuple(annotations))


# -- format 212 ---------------------------------------------------------------

def decode_212(data: bytes | np.ndarray, count: int | None = None) -> np.ndarray:
    """Unpack format-212 bytes into sign-extended 12-bit samples.

    Every 3 bytes hold 2 samples.  ``count`` trims the trailing pad sample.
    """
    raw = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int32)
    if raw.size % 3:
        raise LengthMismatchError(f"212 data length {raw.size} is not a multiple of 3")
    b0, b1, b2 = raw[0::3], raw[1::3], raw[2::3]
    out = np.empty(2 * b0.size, dtype=np.int32)
    out[0::2] = ((b1 & 0x0F) << 8) | b0
    out[1::2] = ((b1 & 0xF0) << 4) | b2
    out[out > SAMPLE_MAX] -= 4096
    if count is not None:
        out = out[:count]
    return out.astype(np.int64)


def encode_212(samples) -> bytes:
    """Pack 12-bit samples into format-212 bytes, zero-padding an odd count."""
    s = np.asarray(samples, dtype=np.int64)
    bad = np.flatnonzero((s < SAMPLE_MIN) | (s > SAMPLE_MAX))
    if bad.size:
        i = int(bad[0])
        raise RangeError(f"sample {int(s[i])} at index {i} does not fit in 12 bits", index=i)
    if s.size % 2:
        s = np.append(s, 0)
    u = (s & 0xFFF).astype(np.uint16)
    lo, hi = u[0::2], u[1::2]
    out = np.empty((lo.size, 3), dtype=np.uint8)
    out[:, 0] = lo & 0xFF
    out[:, 1] = ((lo >> 8) & 0x0F) | ((hi >> 4) & 0xF0)
    out[:, 2] = hi & 0xFF
    return out.tobytes()


# -- header -------------------------------------------------------------------

_GAIN_RE = re.compile(r"^([-+0-9.eE]+)(?:\(([-+0-9]+)\))?(?:/.*)?$")


@dataclass
class SignalSpec:
    filename: str
    fmt: int
    gain: float
    baseline: int
    description: str = ""


@dataclass
class Header:
    name: str
    nsig: int
    fs: int
    nsamples: int
    signals: list[SignalSpec]


def parse_header(text: str) -> Header:
    """Parse the supported subset of a WFDB ``.hea`` header.

    Recognised: the record line ``name nsig fs nsamples`` and, per signal,
    ``filename format gain[(baseline)][/units] [adcres adczero ...]``.
    Anything else is ignored with a warning.
    """
    lines = [
        (n, ln.strip())
        for n, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise ParseError("empty header", line=1)
    n, rec = lines[0]
    tok = rec.split()
    if len(tok) < 4:
        raise ParseError("record line needs 'name nsig fs nsamples'", line=n)
    name = tok[0].split("/")[0]
    try:
        nsig = int(tok[1])
        fs_tok = tok[2].split("/")[0].split("(")[0]
        fs_val = float(fs_tok)
        nsamples = int(tok[3])
    except ValueError as exc:
        raise ParseError(f"bad record line: {exc}", line=n) from None
    if nsig < 1 or fs_val <= 0 or nsamples < 0 or fs_val != int(fs_val):
        raise ParseError("record line values out of range", line=n)
    ignored = []
    if len(tok) > 4:
        ignored.append(f"record fields {tok[4:]}")
    if len(lines) - 1 < nsig:
        raise ParseError(f"header declares {nsig} signals but has {len(lines) - 1}", line=lines[-1][0])
    signals = []
    for n, ln in lines[1 : 1 + nsig]:
        tok = ln.split()
        if len(tok) < 3:
            raise ParseError("signal line needs 'filename format gain'", line=n)
        fmt_m = re.match(r"^(\d+)", tok[1])
        if not fmt_m:
            raise ParseError(f"bad format field {tok[1]!r}", line=n)
        gm = _GAIN_RE.match(tok[2])
        if not gm:
            raise ParseError(f"bad gain field {tok[2]!r}", line=n)
        gain = float(gm.group(1))
        if gain == 0:
            gain = 200.0  # WFDB convention: 0 means uncalibrated, default 200
        if gm.group(2) is not None:
            baseline = int(gm.group(2))
        elif len(tok) > 4:
            try:
                baseline = int(tok[4])  # adc zero doubles as baseline
            except ValueError:
                raise ParseError(f"bad adc zero {tok[4]!r}", line=n) from None
        else:
            baseline = 0
        if len(tok) > 5:
            ignored.append(f"signal {len(signals)} fields {tok[5:]}")
        signals.append(
            SignalSpec(tok[0], int(fmt_m.group(1)), gain, baseline, " ".join(tok[8:]))
        )
    if len(lines) > 1 + nsig:
        ignored.append(f"{len(lines) - 1 - nsig} trailing line(s)")
    if ignored:
        log.warning("header %s: ignoring %s", name, "; ".join(ignored))
    return Header(name, nsig, int(fs_val), nsamples, signals)


def read_wfdb_record(header_text: str, dat_bytes: bytes, lead_index: int = 0) -> EcgRecord:
    """Decode one lead of a format-212 record from header text and .dat bytes."""
    hdr = parse_header(header_text)
    if not 0 <= lead_index < hdr.nsig:
        raise ParameterError(f"lead_index {lead_index} out of range for {hdr.nsig} signal(s)")
    for sig in hdr.signals:
        if sig.fmt != 212:
            raise UnsupportedFormatError(f"format {sig.fmt} is not supported (only 212)")
    files = {s.filename for s in hdr.signals}
    if len(files) != 1:
        raise UnsupportedFormatError("signals spread over several .dat files are not supported")
    total = hdr.nsamples * hdr.nsig
    expected = 3 * math.ceil(total / 2)
    if len(dat_bytes) != expected:
        raise LengthMismatchError(
            f"dat holds {len(dat_bytes)} bytes, header implies {expected}"
            f" ({hdr.nsamples} samples x {hdr.nsig} signals)"
        )
    flat = decode_212(dat_bytes, total)
    lead = flat.reshape(hdr.nsamples, hdr.nsig)[:, lead_index]
    spec = hdr.signals[lead_index]
    return EcgRecord(hdr.name, hdr.fs, spec.gain, spec.baseline, np.ascontiguousarray(lead))


def write_wfdb_record(record: EcgRecord) -> tuple[str, bytes]:
    """Encode a record as (header text, format-212 bytes)."""
    data = encode_212(record.samples)
    n = len(record.samples)
    gain = f"{record.gain:g}"
    lines = [
        f"{record.name} 1 {record.fs} {n}",
        f"{record.name}.dat 212 {gain}({record.baseline})/mV 12 {record.baseline}",
    ]
    if n % 2:
        lines.append("# padded with 1 zero sample to complete the last 212 byte triple")
    return "\n".join(lines) + "\n", data


def load_record(path: str | Path, lead_index: int = 0, annotations: bool = True) -> EcgRecord:
    """Read ``<path>.hea`` / ``.dat`` (and ``.ann`` text annotations if present)."""
    from .annotations import read_annotations

    path = Path(path)
    base = path.with_suffix("") if path.suffix in {".hea", ".dat", ".ann"} else path
    header = base.with_suffix(".hea").read_text()
    hdr = parse_header(header)
    dat = (base.parent / hdr.signals[0].filename).read_bytes()
    rec = read_wfdb_record(header, dat, lead_index)
    ann_path = base.with_suffix(".ann")
    if annotations and ann_path.exists():
        anns = read_annotations(ann_path.read_text(encoding="utf-8"))
        rec = EcgRecord(rec.name, rec.fs, rec.gain, rec.baseline, rec.samples, tuple(anns))
    return rec
