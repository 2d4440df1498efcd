"""Small helpers shared across modules: sign convention, seeded streams, worker count."""

from __future__ import annotations

import os

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream identifiers for Philox keys; one independent stream per purpose.
STREAM_COVARIATES = 1
STREAM_TREATMENTS = 2
STREAM_NOISE = 3
STREAM_FOLDS = 4


def sign(x):
    """Elementwise sign mapping to {-1, +1}, with sign(0) = +1."""
    return np.where(np.asarray(x) < 0, -1, 1).astype(np.int8)


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``(stream_id, seed)``.

    Philox is counter-based, so each (seed, stream) pair names a distinct,
    platform-independent sequence.
    """
    key = ((stream_id & _MASK64) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1) with 53-bit resolution."""
    k = gen.integers(0, 1 << 53, size=size, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / float(1 << 53)


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a 64-bit child seed from a master seed and an integer path."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & _MASK64,
                                spawn_key=tuple(int(v) for v in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def worker_count() -> int:
    """Worker pool size from ``ITRBOOST_THREADS`` (default: logical cores)."""
    raw = os.environ.get("ITRBOOST_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"ITRBOOST_THREADS must be an integer, got {raw!r}")
        if n < 1:
            raise ValueError("ITRBOOST_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1
