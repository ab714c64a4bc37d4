"""Two-stream (CNN + LSTM) ECG classification toolkit.

Signal IO (WFDB 212 records, text annotations, synthetic ECG), wavelet
denoising, Pan-Tompkins R-peak detection, beat framing, a small numpy
autodiff engine, the two streams with late fusion, and evaluation metrics.
"""
from .errors import EcgError
from .records import EcgRecord, load_record, read_wfdb_record, write_wfdb_record
from .synth import SynthesisParams, generate_synthetic_record, synthesize

__version__ = "0.1.0"

__all__ = [
    "EcgError", "EcgRecord", "load_record", "read_wfdb_record", "write_wfdb_record",
    "SynthesisParams", "generate_synthetic_record", "synthesize", "__version__",
]
