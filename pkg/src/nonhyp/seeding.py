"""Deterministic random streams keyed by (seed, stable labels, indices)."""
from __future__ import annotations

import zlib

import numpy as np


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Independent generator for one stage/stratum/trial.

    The stream depends only on its own key, so adding a stage or changing
    the worker count never alters another stream.
    """
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, label_key(label), *(int(i) for i in indices)])
