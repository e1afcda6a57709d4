"""Experiment configuration: flat key=value files, flag overrides, echo.

One text file drives a run.  Every knob is a flat ``key = value`` line
(comments start with ``#``), diffable and trivially parsed in any
language.  The effective configuration is echoed verbatim into each run's
output directory; parsing the echo reproduces the configuration exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

ABLATION_FLAGS = (
    "no_fier_relabel",
    "no_fier_validate",
    "no_pier",
    "no_sag_imputation",
    "no_sag_normalization",
)

PHASE_KINDS = ("seen", "unseen", "disjoint")


class ConfigError(ValueError):
    """Invalid configuration; message carries file and line when known."""


@dataclass
class ExperimentConfig:
    # gating
    mode: str = "sensitivity"
    sigma_des: float = 0.9
    p_rand: float = 0.1
    n_min: int = 15
    n_rep: int = 25
    # replay prioritization
    alpha: float = 1.5
    beta: float = 0.4
    lam: float = 0.5  # config key: lambda
    base: float = 10.0
    # novice
    hidden: int = 64
    dropout: float = 0.4
    passes: int = 16
    leak: float = 0.01
    uncertainty: str = "least_confidence"
    learning_rate: float = 0.3
    batch_size: int = 16
    grad_steps: int = 8
    update_every: int = 5
    # synthetic task
    candidates: int = 6
    feature_dim: int = 8
    n_attributes: int = 12
    n_seen: int = 8
    noise: float = 0.45
    unseen_rate: float = 0.35
    junk_rate: float = 0.0
    relabel_probability: float = 1.0
    # run shape
    episodes: int = 3000
    steps_per_episode: int = 1
    phases: str = ""  # "seen:1000,unseen:1000,disjoint:1000"; empty = one seen phase
    seed: int = 0
    run_id: str = ""
    out: str = "runs"
    ablate: str = ""  # comma-separated ablation flags
    seed_dataset: str = ""  # optional JSONL of offline demonstrations
    metric_window: int = 300
    eval_every_demos: int = 50
    eval_episodes: int = 200
    # session service
    port: int = 8089
    timeout: float = 30.0
    fallback: str = "block"  # block | oracle_after_timeout

    # ------------------------------------------------------------- derived

    def ablations(self) -> frozenset[str]:
        flags = frozenset(part.strip() for part in self.ablate.split(",") if part.strip())
        unknown = flags - set(ABLATION_FLAGS)
        if unknown:
            raise ConfigError(f"unknown ablation flags: {sorted(unknown)}")
        return flags

    def phase_list(self) -> list[tuple[str, int]]:
        """Phase schedule as (kind, episodes) pairs; defaults to one seen phase."""
        if not self.phases.strip():
            return [("seen", self.episodes)]
        out = []
        for part in self.phases.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                kind, count = part.split(":")
                count = int(count)
            except ValueError as exc:
                raise ConfigError(f"bad phase spec {part!r} (want kind:episodes)") from exc
            if kind not in PHASE_KINDS:
                raise ConfigError(f"unknown phase kind {kind!r}, want one of {PHASE_KINDS}")
            if count <= 0:
                raise ConfigError(f"phase {kind!r} needs a positive episode count")
            out.append((kind, count))
        if not out:
            raise ConfigError("empty phase schedule")
        return out

    def total_episodes(self) -> int:
        return sum(count for _, count in self.phase_list())

    def effective_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        return f"{self.mode}_sd{self.sigma_des:g}_s{self.seed}"

    def validate(self) -> list[str]:
        """Raise on hard errors; return warnings for contradictions."""
        warnings: list[str] = []
        if self.mode not in ("sensitivity", "specificity", "success"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.sigma_des < 1.0:
            raise ConfigError(f"sigma_des must be in (0, 1), got {self.sigma_des}")
        if not 0.0 <= self.p_rand < 1.0:
            raise ConfigError(f"p_rand must be in [0, 1), got {self.p_rand}")
        if self.n_min < 1 or self.n_rep < 1:
            raise ConfigError("n_min and n_rep must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if self.base <= 1.0:
            raise ConfigError(f"base must exceed 1, got {self.base}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.uncertainty not in ("least_confidence", "entropy"):
            raise ConfigError(f"unknown uncertainty score {self.uncertainty!r}")
        if not 2 <= self.n_seen < self.n_attributes:
            raise ConfigError("need at least two seen and one unseen attribute")
        if self.candidates < 2:
            raise ConfigError("need at least two candidates per scene")
        if not 0.0 <= self.relabel_probability <= 1.0:
            raise ConfigError("relabel_probability must be in [0, 1]")
        if self.fallback not in ("block", "oracle_after_timeout"):
            raise ConfigError(f"unknown fallback {self.fallback!r}")
        self.ablations()
        self.phase_list()
        if self.mode in ("sensitivity", "success") and self.sigma_des <= self.p_rand:
            warnings.append(
                f"sigma_des={self.sigma_des:g} <= p_rand={self.p_rand:g}: "
                f"the expected {self.mode} rate is floored at p_rand"
            )
        return warnings


_KEY_TO_FIELD = {
    ("lambda" if f.name == "lam" else f.name): f.name
    for f in dataclasses.fields(ExperimentConfig)
}


def _coerce(field_name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[field_name]
    raw = raw.strip()
    if ftype in ("int", int):
        return int(raw)
    if ftype in ("float", float):
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse flat key=value text into a configuration (line-anchored errors)."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        try:
            values[field_name] = _coerce(field_name, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def echo_config(config: ExperimentConfig) -> str:
    """Effective configuration as canonical key=value text."""
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        key = "lambda" if f.name == "lam" else f.name
        value = getattr(config, f.name)
        rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
