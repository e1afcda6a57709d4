"""Shared domain types: demonstrations, feedback history, and the dataset.

A demonstration tuple records what was aggregated (observation, action,
goal, reward tag); a feedback record captures the per-decision triple
(uncertainty, reward, update count) that gating and replay consume.  The
dataset is append-only: insertion order defines the identity used by the
replay prioritizer, and tuples are never mutated after aggregation.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Reward(enum.IntEnum):
    """Teacher reward for a decision: +1 validated, -1 rejected+annotated, 0 otherwise."""

    VALIDATED = 1
    NONE = 0
    REJECTED = -1


class Kind(str, enum.Enum):
    """How a demonstration entered the dataset."""

    VALIDATION = "validation"
    ANNOTATION = "annotation"
    RELABELED = "relabeled"
    SEED = "seed"


# Reward tag each kind must carry.
_KIND_REWARD = {
    Kind.VALIDATION: Reward.VALIDATED,
    Kind.ANNOTATION: Reward.REJECTED,
    Kind.RELABELED: Reward.NONE,
    Kind.SEED: Reward.NONE,
}


class AlignmentError(ValueError):
    """Tuple/record lists of mismatched length or out-of-order update counts."""


@dataclass(frozen=True)
class Observation:
    """Candidate-block observation: one feature row per selectable candidate."""

    features: np.ndarray  # (candidates, feature_dim), float64

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"observation features must be 2-D, got shape {feats.shape}")
        object.__setattr__(self, "features", feats)

    @property
    def n_candidates(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class DemoTuple:
    """One demonstration: (observation, action, goal, reward tag, kind)."""

    observation: Observation
    action: int
    goal: int
    reward: Reward
    kind: Kind

    def __post_init__(self):
        if not 0 <= self.action < self.observation.n_candidates:
            raise ValueError(
                f"action {self.action} outside candidate range "
                f"[0, {self.observation.n_candidates})"
            )
        expected = _KIND_REWARD[self.kind]
        if self.reward != expected:
            raise ValueError(f"kind={self.kind.value} requires reward={int(expected)}, got {int(self.reward)}")


@dataclass(frozen=True)
class FeedbackRecord:
    """Per-decision feedback: uncertainty, reward, and model version at decision time."""

    u: float
    r: Reward
    k: int
    queried: bool
    episode: int
    step: int

    def __post_init__(self):
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"uncertainty {self.u} outside [0, 1]")
        if self.k < 0:
            raise ValueError(f"update count {self.k} negative")
        if not self.queried and self.r != Reward.NONE:
            raise ValueError("unqueried decisions carry reward 0")


def seed_record() -> FeedbackRecord:
    """Synthetic record attached to offline seed tuples (u=0, r=0, k=0)."""
    return FeedbackRecord(u=0.0, r=Reward.NONE, k=0, queried=False, episode=-1, step=-1)


def as_seed_dataset(dataset: "DemoDataset") -> "DemoDataset":
    """Re-tag demonstrations as offline seed data.

    Reward tags and feedback records describe the run that collected the
    demonstrations; imported as pretraining data they become neutral seed
    tuples with synthetic records, so replay treats them uniformly.
    """
    seeded = DemoDataset()
    for tup in dataset.tuples:
        seeded.tuples.append(
            DemoTuple(tup.observation, tup.action, tup.goal, Reward.NONE, Kind.SEED)
        )
        seeded.records.append(seed_record())
    return seeded


@dataclass
class DemoDataset:
    """Append-only demonstration dataset with per-tuple feedback records.

    Tuples and records stay aligned one-to-one; insertion order is the
    replay identity.  A single writer appends; readers may snapshot the
    lists at any point (entries are immutable).
    """

    tuples: list[DemoTuple] = field(default_factory=list)
    records: list[FeedbackRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tuples)

    def append_trajectory(
        self, trajectory: list[DemoTuple], records: list[FeedbackRecord]
    ) -> None:
        """Aggregate one episode's tuples with their aligned records."""
        if len(trajectory) != len(records):
            raise AlignmentError(
                f"{len(trajectory)} tuples vs {len(records)} records"
            )
        if records:
            last_k = self.records[-1].k if self.records else 0
            for rec in records:
                if rec.k < last_k:
                    raise AlignmentError(
                        f"update count decreased: {rec.k} after {last_k}"
                    )
                last_k = rec.k
        self.tuples.extend(trajectory)
        self.records.extend(records)

    def composition_counts(self) -> dict[Kind, int]:
        """Number of tuples of each kind (sums to dataset size)."""
        counts = {kind: 0 for kind in Kind}
        for tup in self.tuples:
            counts[tup.kind] += 1
        return counts


def _tuple_to_json(tup: DemoTuple, rec: FeedbackRecord) -> dict:
    return {
        "obs": tup.observation.features.tolist(),
        "action": tup.action,
        "goal": tup.goal,
        "reward": int(tup.reward),
        "kind": tup.kind.value,
        "u": rec.u,
        "r": int(rec.r),
        "k": rec.k,
        "episode": rec.episode,
        "step": rec.step,
    }


def save_jsonl(dataset: DemoDataset, path: str | Path) -> None:
    """Persist the dataset, one tuple+record pair per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for tup, rec in zip(dataset.tuples, dataset.records):
            fh.write(json.dumps(_tuple_to_json(tup, rec)) + "\n")


def dumps_jsonl(dataset: DemoDataset) -> str:
    """Dataset serialized to JSONL text (same schema as :func:`save_jsonl`)."""
    return "".join(
        json.dumps(_tuple_to_json(tup, rec)) + "\n"
        for tup, rec in zip(dataset.tuples, dataset.records)
    )


def load_jsonl(path: str | Path) -> DemoDataset:
    """Bit-exact inverse of :func:`save_jsonl`."""
    dataset = DemoDataset()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            kind = Kind(row["kind"])
            tup = DemoTuple(
                observation=Observation(np.array(row["obs"], dtype=np.float64)),
                action=row["action"],
                goal=row["goal"],
                reward=Reward(row["reward"]),
                kind=kind,
            )
            # Tuples of any interactive kind entered via a query.
            rec = FeedbackRecord(
                u=row["u"],
                r=Reward(row["r"]),
                k=row["k"],
                queried=kind is not Kind.SEED,
                episode=row["episode"],
                step=row["step"],
            )
            dataset.tuples.append(tup)
            dataset.records.append(rec)
    return dataset
