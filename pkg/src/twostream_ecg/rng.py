"""Seeded random streams.

Every random draw in the package goes through :func:`make_rng`, which wraps
numpy's Philox-4x64 counter-based bit generator.  Philox output depends only
on (key, counter), so a given seed produces the same stream on every platform
numpy supports.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and optional sub-stream ids."""
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))
