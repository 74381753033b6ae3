"""Counter-based random streams.

Every stream is a Philox generator keyed by ``SeedSequence(seed,
spawn_key=path)``. A trial's stream depends only on the root seed and its
path (for example ``(experiment_id, trial_index)``), never on the order in
which trials run.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    if part < 0:
        raise ValueError("stream path entries must be nonnegative")
    return int(part)


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Independent generator for ``path`` under ``seed``."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(_label(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def trial_streams(seed: int, name: str, count: int) -> list[np.random.Generator]:
    return [stream(seed, name, i) for i in range(count)]
