"""Prioritized replay over the demonstration dataset.

Replay priorities blend novice success, uncertainty, and demonstration
age: recent confidently-wrong demonstrations replay most, recent
confidently-right ones least, and neutral tuples (relabeled or offline)
sit exactly in between.  Sampling follows the standard proportional
scheme with importance weights compensating the induced bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from askdagger.core import DemoDataset

# Zero-priority tuples (fresh confident successes) keep a tiny floor so no
# demonstration is permanently starved of replay.
PRIORITY_FLOOR = 1e-6


@dataclass(frozen=True)
class PierConfig:
    """Prioritization strength, bias compensation, blend, and curvature."""

    alpha: float = 1.5  # 0 = uniform sampling
    beta: float = 1.0  # 0 = no importance-weight compensation
    lam: float = 0.5  # uncertainty (1) vs demonstration age (0)
    base: float = 10.0  # curvature of the priority curve, > 1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.base <= 1.0:
            raise ValueError(f"base must exceed 1, got {self.base}")


@dataclass(frozen=True)
class PriorityTable:
    """Per-tuple priorities, sampling distribution, and importance weights."""

    priorities: np.ndarray
    probs: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.priorities)


def priority_exponent(u: float, k: int, current_k: int, lam: float) -> float:
    """Blend of uncertainty and age: lam*u + (1-lam)*(K-k)/K, in [0, 1]."""
    age = (current_k - k) / current_k if current_k > 0 else 0.0
    return lam * u + (1.0 - lam) * age


def priority(r: int, c: float, base: float) -> float:
    """Priority 1 - r*(b^(1-c) - 1)/(b - 1).

    Neutral tuples (r=0) get exactly 1; failures map to (1, 2] decreasing
    in c, successes to [0, 1) increasing in c.
    """
    return 1.0 - r * (base ** (1.0 - c) - 1.0) / (base - 1.0)


def build_table(dataset: DemoDataset, current_k: int, config: PierConfig) -> PriorityTable:
    """Priorities, sampling probabilities, and max-normalized weights."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot build a priority table for an empty dataset")
    u = np.array([rec.u for rec in dataset.records])
    r = np.array([int(rec.r) for rec in dataset.records], dtype=np.float64)
    k = np.array([rec.k for rec in dataset.records], dtype=np.float64)
    age = (current_k - k) / current_k if current_k > 0 else np.zeros(n)
    c = config.lam * u + (1.0 - config.lam) * age
    p = 1.0 - r * (config.base ** (1.0 - c) - 1.0) / (config.base - 1.0)
    p = np.maximum(p, PRIORITY_FLOOR)
    scaled = p**config.alpha
    probs = scaled / scaled.sum()
    raw = (n * probs) ** -config.beta
    weights = raw / raw.max()
    return PriorityTable(priorities=p, probs=probs, weights=weights)


def sample(table: PriorityTable, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``batch_size`` independent draws from the table (with replacement)."""
    if batch_size == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(len(table), size=batch_size, replace=True, p=table.probs)
