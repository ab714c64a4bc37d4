"""Plain-text beat annotations and the MIT-BIH to AAMI class grouping.

Annotation files hold one ``<sample_index> <symbol>`` pair per line, the
shape you get from exporting ``rdann`` output down to its first and last
columns.
"""
from __future__ import annotations

from typing import Iterable, Sequence

from .errors import DuplicateIndexError, OrderingError, ParseError, UnknownSymbolError

MITBIH_CLASSES = ("N", "S", "V", "F", "Q")

AAMI_GROUPS = {
    "N": ("N", "L", "R", "e", "j"),
    "S": ("A", "a", "J", "S"),
    "V": ("V", "E"),
    "F": ("F",),
    "Q": ("/", "f", "Q"),
}

SYMBOL_TO_CLASS = {sym: cls for cls, syms in AAMI_GROUPS.items() for sym in syms}


def read_annotations(text: str) -> list[tuple[int, str]]:
    out: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            if len(parts) == 1:
                raise ParseError("empty symbol", line=lineno)
            raise ParseError(f"expected '<index> <symbol>', got {line!r}", line=lineno)
        idx_txt, sym = parts
        try:
            idx = int(idx_txt)
        except ValueError:
            raise ParseError(f"non-numeric sample index {idx_txt!r}", line=lineno) from None
        if idx < 0:
            raise ParseError(f"negative sample index {idx}", line=lineno)
        if out:
            prev = out[-1][0]
            if idx == prev:
                raise DuplicateIndexError(f"line {lineno}: duplicate annotation at sample {idx}")
            if idx < prev:
                raise OrderingError(f"line {lineno}: sample {idx} follows {prev}")
        out.append((idx, sym))
    return out


def format_annotations(annotations: Iterable[tuple[int, str]]) -> str:
    return "".join(f"{int(i)} {s}\n" for i, s in annotations)


def map_symbols_to_classes(symbols: Sequence[str]) -> list[str]:
    """Group MIT-BIH beat symbols into the five AAMI classes N, S, V, F, Q."""
    unknown = [s for s in symbols if s not in SYMBOL_TO_CLASS]
    if unknown:
        raise UnknownSymbolError(unknown)
    return [SYMBOL_TO_CLASS[s] for s in symbols]


def beat_annotations(annotations: Iterable[tuple[int, str]]) -> tuple[list[tuple[int, str]], int]:
    """Keep only annotations whose symbol has an AAMI class.

    Real MIT-BIH files interleave rhythm and signal-quality markers ('+', '~',
    '|', ...) with beats.  Returns the kept pairs and how many were dropped.
    """
    annotations = list(annotations)
    kept = [(i, s) for i, s in annotations if s in SYMBOL_TO_CLASS]
    return kept, len(annotations) - len(kept)
