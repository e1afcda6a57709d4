"""Goal-conditioned candidate scorer with stochastic-ensemble uncertainty.

The novice scores every candidate in the observation with a shared
two-layer network applied to (candidate features, goal one-hot); a softmax
over the candidate scores gives the action distribution.  Sharing the
scorer across candidates makes predictions equivariant to candidate
order.  Uncertainty comes from averaging several dropout-perturbed
forward passes (least-confidence by default, normalized entropy behind a
config switch).

Training is plain minibatch SGD on importance-weighted cross-entropy,
with batches drawn from a replay priority table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from askdagger import pier
from askdagger.core import DemoDataset, Observation
from askdagger.pier import PriorityTable

UNCERTAINTY_SCORES = ("least_confidence", "entropy")


@dataclass(frozen=True)
class NoviceConfig:
    feature_dim: int
    n_goals: int
    hidden: int = 64
    dropout: float = 0.4
    passes: int = 16  # stochastic forward passes per prediction
    leak: float = 0.01  # negative-side slope of the hidden activation
    uncertainty: str = "least_confidence"

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.passes < 1:
            raise ValueError("need at least one forward pass")
        if self.uncertainty not in UNCERTAINTY_SCORES:
            raise ValueError(f"uncertainty must be one of {UNCERTAINTY_SCORES}")


@dataclass
class Parameters:
    """Weights of the shared per-candidate scorer."""

    w1: np.ndarray  # (hidden, feature_dim + n_goals)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    def copy(self) -> "Parameters":
        return Parameters(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class NoviceModel:
    """Candidate scorer with dropout-ensemble uncertainty and an update counter."""

    def __init__(self, config: NoviceConfig, rng: np.random.Generator):
        self.config = config
        fan_in = config.feature_dim + config.n_goals
        self.params = Parameters(
            w1=rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(config.hidden, fan_in)),
            b1=np.zeros(config.hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(config.hidden), size=config.hidden),
            b2=0.0,
        )
        self.update_count = 0

    # ---------------------------------------------------------------- forward

    def _inputs(self, observation: Observation, goal: int) -> np.ndarray:
        feats = observation.features
        onehot = np.zeros((feats.shape[0], self.config.n_goals))
        onehot[:, goal] = 1.0
        return np.concatenate([feats, onehot], axis=1)

    def _hidden(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.params.w1.T + self.params.b1
        return np.where(z > 0, z, self.config.leak * z)

    def _ensemble_probs(
        self, observation: Observation, goal: int, rng: np.random.Generator | None
    ) -> np.ndarray:
        """Mean action distribution over the stochastic forward passes."""
        cfg = self.config
        h = self._hidden(self._inputs(observation, goal))  # (C, hidden)
        if cfg.dropout > 0.0:
            if rng is None:
                raise ValueError("dropout ensemble requires an rng")
            # One mask per pass, shared across candidates, inverted scaling.
            masks = (rng.random((cfg.passes, cfg.hidden)) >= cfg.dropout) / (1.0 - cfg.dropout)
        else:
            masks = np.ones((cfg.passes, cfg.hidden))
        logits = (h[None, :, :] * masks[:, None, :]) @ self.params.w2 + self.params.b2
        return _softmax(logits).mean(axis=0)

    def predict(
        self, observation: Observation, goal: int, rng: np.random.Generator | None = None
    ) -> tuple[int, float]:
        """Planned action and its uncertainty score.

        The action is the argmax of the ensemble-mean distribution (ties to
        the lowest index); least-confidence uncertainty is 1 - max
        probability, entropy uncertainty is normalized to [0, 1].
        """
        probs = self._ensemble_probs(observation, goal, rng)
        action = int(np.argmax(probs))
        if self.config.uncertainty == "least_confidence":
            u = 1.0 - float(probs[action])
        else:
            p = np.clip(probs, 1e-12, 1.0)
            u = float(-(p @ np.log(p)) / np.log(len(p)))
        return action, min(max(u, 0.0), 1.0)

    def act(self, observation: Observation, goal: int) -> int:
        """Deterministic action (single pass, no dropout); used for evaluation."""
        h = self._hidden(self._inputs(observation, goal))
        logits = h @ self.params.w2 + self.params.b2
        return int(np.argmax(logits))

    # --------------------------------------------------------------- training

    def loss_and_grads(
        self,
        observations: list[Observation],
        goals: np.ndarray,
        labels: np.ndarray,
        weights: np.ndarray,
        masks: np.ndarray,
    ) -> tuple[float, Parameters]:
        """Mean importance-weighted cross-entropy and its parameter gradients.

        ``masks`` holds one dropout mask per example (already inverted-scaled;
        pass ones to disable dropout).  Exposed separately from
        :meth:`update` so gradients can be checked against finite
        differences with the masks held fixed.
        """
        p = self.params
        n = len(observations)
        g_w1 = np.zeros_like(p.w1)
        g_b1 = np.zeros_like(p.b1)
        g_w2 = np.zeros_like(p.w2)
        g_b2 = 0.0
        total = 0.0
        for i in range(n):
            x = self._inputs(observations[i], int(goals[i]))  # (C, F)
            z = x @ p.w1.T + p.b1
            hidden = np.where(z > 0, z, self.config.leak * z)
            dropped = hidden * masks[i]
            logits = dropped @ p.w2 + p.b2
            probs = _softmax(logits)
            label = int(labels[i])
            total += -weights[i] * float(np.log(max(probs[label], 1e-300)))
            dlogits = weights[i] * probs
            dlogits[label] -= weights[i]
            g_b2 += float(dlogits.sum())
            g_w2 += dropped.T @ dlogits
            dhidden = np.outer(dlogits, p.w2) * masks[i]
            dz = dhidden * np.where(z > 0, 1.0, self.config.leak)
            g_w1 += dz.T @ x
            g_b1 += dz.sum(axis=0)
        grads = Parameters(g_w1 / n, g_b1 / n, g_w2 / n, g_b2 / n)
        return total / n, grads

    def update(
        self,
        dataset: DemoDataset,
        table: PriorityTable,
        steps: int,
        batch_size: int,
        learning_rate: float,
        rng: np.random.Generator,
    ) -> None:
        """Run SGD steps on replay-sampled batches; bumps the update counter."""
        if len(dataset) == 0:
            raise ValueError("cannot update from an empty dataset")
        cfg = self.config
        for _ in range(steps):
            idx = pier.sample(table, batch_size, rng)
            observations = [dataset.tuples[i].observation for i in idx]
            goals = np.array([dataset.tuples[i].goal for i in idx])
            labels = np.array([dataset.tuples[i].action for i in idx])
            weights = table.weights[idx]
            if cfg.dropout > 0.0:
                masks = (rng.random((len(idx), cfg.hidden)) >= cfg.dropout) / (
                    1.0 - cfg.dropout
                )
            else:
                masks = np.ones((len(idx), cfg.hidden))
            _, grads = self.loss_and_grads(observations, goals, labels, weights, masks)
            self.params.w1 -= learning_rate * grads.w1
            self.params.b1 -= learning_rate * grads.b1
            self.params.w2 -= learning_rate * grads.w2
            self.params.b2 -= learning_rate * grads.b2
        self.update_count += 1

    # ------------------------------------------------------------ persistence

    def to_json(self) -> str:
        payload = {
            "config": {
                "feature_dim": self.config.feature_dim,
                "n_goals": self.config.n_goals,
                "hidden": self.config.hidden,
                "dropout": self.config.dropout,
                "passes": self.config.passes,
                "leak": self.config.leak,
                "uncertainty": self.config.uncertainty,
            },
            "update_count": self.update_count,
            "w1": self.params.w1.tolist(),
            "b1": self.params.b1.tolist(),
            "w2": self.params.w2.tolist(),
            "b2": self.params.b2,
        }
        return json.dumps(payload)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "NoviceModel":
        payload = json.loads(text)
        config = NoviceConfig(**payload["config"])
        model = cls.__new__(cls)
        model.config = config
        model.params = Parameters(
            w1=np.array(payload["w1"], dtype=np.float64),
            b1=np.array(payload["b1"], dtype=np.float64),
            w2=np.array(payload["w2"], dtype=np.float64),
            b2=float(payload["b2"]),
        )
        model.update_count = payload["update_count"]
        return model

    @classmethod
    def load(cls, path: str | Path) -> "NoviceModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
