"""Named random substreams derived from a single 64-bit run seed.

Every stochastic component (environment, gating, imputation, replay
sampling, weight init, ...) draws from its own generator so that toggling
one component never shifts the random sequences seen by the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(name: str) -> int:
    """Stable 64-bit key for a substream name (platform independent)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the named substream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK64, stream_key(name)]))
