"""Synthetic goal-conditioned pick task, oracle teacher, and experiment runner.

Scenes hold a handful of candidate objects, each a noisy copy of an
attribute prototype vector; the command names an attribute and exactly one
candidate matches it.  Attributes split into a seen set (commanded during
training) and an unseen set that appears only as distractors, so
relabeling a wrong pick can produce demonstrations for goals never
commanded.  A domain-shift schedule swaps command pools or the entire
prototype table mid-run.

``run_experiment`` drives the full interactive loop (gating, teacher
queries, prioritized updates), logs one CSV row per decision, evaluates
frozen checkpoints on seen and unseen command sets, and supports the
ablation flags used by the comparison studies.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from askdagger import fier, pier, sag
from askdagger.config import ExperimentConfig, echo_config
from askdagger.core import DemoDataset, Kind, Observation, as_seed_dataset, load_jsonl, save_jsonl
from askdagger.fier import QueryPresentation, TeacherResponse
from askdagger.novice import NoviceConfig, NoviceModel
from askdagger.pier import PierConfig
from askdagger.rand import substream
from askdagger.sag import GatingConfig

CSV_COLUMNS = [
    "run_id", "seed", "phase", "episode", "step", "k", "u", "gamma",
    "queried", "reason", "reward", "kind", "novice_correct",
    "system_success", "goal", "action",
]

ATTRIBUTE_NAMES = [
    "crimson", "teal", "amber", "violet", "olive", "navy", "coral", "slate",
    "pearl", "moss", "rust", "cobalt", "saffron", "indigo", "jade", "umber",
]


@dataclass(frozen=True)
class SynthTask:
    """Attribute vocabulary, scene shape, and noise of the synthetic task."""

    n_attributes: int
    n_seen: int
    candidates: int
    feature_dim: int
    noise: float
    unseen_rate: float
    junk_rate: float
    prototypes: np.ndarray  # (n_attributes, feature_dim)
    alt_prototypes: np.ndarray  # disjoint table for the "disjoint" phase kind

    @classmethod
    def build(cls, config: ExperimentConfig, rng: np.random.Generator) -> "SynthTask":
        # Farthest-point selection from a random pool keeps the prototypes
        # well separated, so per-seed task difficulty stays comparable
        # (independent unit vectors can land arbitrarily close).
        def unit_rows(n: int, pool_size: int = 512) -> np.ndarray:
            pool = rng.normal(size=(pool_size, config.feature_dim))
            pool /= np.linalg.norm(pool, axis=1, keepdims=True)
            chosen = [0]
            dist = np.linalg.norm(pool - pool[0], axis=1)
            while len(chosen) < n:
                nxt = int(np.argmax(dist))
                chosen.append(nxt)
                dist = np.minimum(dist, np.linalg.norm(pool - pool[nxt], axis=1))
            return pool[chosen]

        return cls(
            n_attributes=config.n_attributes,
            n_seen=config.n_seen,
            candidates=config.candidates,
            feature_dim=config.feature_dim,
            noise=config.noise,
            unseen_rate=config.unseen_rate,
            junk_rate=config.junk_rate,
            prototypes=unit_rows(config.n_attributes),
            alt_prototypes=unit_rows(config.n_attributes),
        )

    @property
    def seen_attrs(self) -> list[int]:
        return list(range(self.n_seen))

    @property
    def unseen_attrs(self) -> list[int]:
        return list(range(self.n_seen, self.n_attributes))

    @property
    def goal_set(self) -> frozenset[int]:
        return frozenset(range(self.n_attributes))

    def attribute_name(self, attr: int | None) -> str:
        return "unknown" if attr is None else ATTRIBUTE_NAMES[attr % len(ATTRIBUTE_NAMES)]


@dataclass(frozen=True)
class Scene:
    """One generated scene with its ground truth."""

    features: np.ndarray  # (candidates, feature_dim)
    goal: int
    attributes: tuple  # attribute id per candidate, None for junk
    goal_index: int

    @property
    def observation(self) -> Observation:
        return Observation(self.features)


def generate_scene(
    task: SynthTask, phase_kind: str, rng: np.random.Generator, command_pool=None
) -> Scene:
    """Scene with exactly one candidate matching a goal from the phase's pool.

    Distractor slots draw an unseen attribute with the configured rate
    (a seen one otherwise), junk slots carry no attribute at all, and the
    "disjoint" phase kind swaps in the alternative prototype table.
    """
    protos = task.alt_prototypes if phase_kind == "disjoint" else task.prototypes
    if command_pool is None:
        command_pool = task.unseen_attrs if phase_kind == "unseen" else task.seen_attrs
    goal = int(rng.choice(command_pool))
    goal_pos = int(rng.integers(task.candidates))
    attrs: list[int | None] = []
    features = np.empty((task.candidates, task.feature_dim))
    seen_pool = [a for a in task.seen_attrs if a != goal]
    unseen_pool = [a for a in task.unseen_attrs if a != goal]
    for pos in range(task.candidates):
        if pos == goal_pos:
            attr = goal
        elif task.junk_rate > 0.0 and rng.random() < task.junk_rate:
            attr = None
        else:
            pool = unseen_pool if rng.random() < task.unseen_rate else seen_pool
            if not pool:
                pool = seen_pool or unseen_pool
            attr = int(rng.choice(pool))
        attrs.append(attr)
        if attr is None:
            base = rng.normal(size=task.feature_dim)
            base /= np.linalg.norm(base)
        else:
            base = protos[attr]
        features[pos] = base + rng.normal(0.0, task.noise, size=task.feature_dim)
    return Scene(features=features, goal=goal, attributes=tuple(attrs), goal_index=goal_pos)


class SynthEnv:
    """Bandit-style environment over generated scenes.

    Each episode commands one goal; every step presents a fresh scene for
    that goal (one step per episode by default).  The per-episode scene
    trace is kept so the driver can score decisions against ground truth.
    """

    def __init__(self, task: SynthTask, steps_per_episode: int, rng: np.random.Generator):
        self.task = task
        self.steps_per_episode = steps_per_episode
        self.rng = rng
        self.scene: Scene | None = None
        self.trace: list[Scene] = []
        self._phase_kind = "seen"
        self._steps_left = 0

    @property
    def goal_set(self) -> frozenset[int]:
        return self.task.goal_set

    def reset(self, phase_kind: str) -> None:
        self._phase_kind = phase_kind
        self.scene = generate_scene(self.task, phase_kind, self.rng)
        self.trace = [self.scene]
        self._steps_left = self.steps_per_episode

    def observe(self) -> tuple[Observation, int]:
        return self.scene.observation, self.scene.goal

    def step(self, action: int) -> tuple[Observation, bool]:
        self._steps_left -= 1
        if self._steps_left <= 0:
            return self.scene.observation, True
        goal = self.scene.goal
        self.scene = generate_scene(
            self.task, self._phase_kind, self.rng, command_pool=[goal]
        )
        self.trace.append(self.scene)
        return self.scene.observation, False


class OracleTeacher:
    """Ground-truth teacher: validates correct picks, annotates the true one.

    When a rejected pick landed on an attributed candidate inside the goal
    set, the oracle relabels to that attribute with the configured
    probability (a degenerate probability never touches the rng, so runs
    with 0 or 1 stay reproducible across transports).
    """

    def __init__(self, env: SynthEnv, relabel_probability: float, rng: np.random.Generator):
        self.env = env
        self.relabel_probability = relabel_probability
        self.rng = rng

    def respond(self, presentation: QueryPresentation) -> TeacherResponse:
        return oracle_respond(
            self.env.scene, presentation, self.relabel_probability, self.rng,
            self.env.goal_set,
        )


def oracle_respond(
    scene: Scene,
    presentation: QueryPresentation,
    relabel_probability: float,
    rng: np.random.Generator,
    goal_set: frozenset[int],
) -> TeacherResponse:
    """Oracle verdict for a presented plan against the scene ground truth."""
    picked_attr = scene.attributes[presentation.planned_action]
    if picked_attr == presentation.goal:
        return TeacherResponse(verdict="validate")
    relabel = None
    if picked_attr is not None and picked_attr in goal_set:
        if relabel_probability >= 1.0:
            relabel = picked_attr
        elif relabel_probability > 0.0 and rng.random() < relabel_probability:
            relabel = picked_attr
    return TeacherResponse(
        verdict="reject", relabel_goal=relabel, annotation_action=scene.goal_index
    )


class RollingMetrics:
    """Moving-window tracking rates.

    Sensitivity is measured over the last ``window`` novice failures
    (fraction queried), specificity over the last ``window`` successes
    (fraction left unqueried), and the success/query rates over the last
    ``window`` decisions.
    """

    def __init__(self, window: int):
        self.window = window
        self._failure_queried: list[bool] = []
        self._success_unqueried: list[bool] = []
        self._novice: list[bool] = []
        self._system: list[bool] = []
        self._queried: list[bool] = []

    def update(self, queried: bool, novice_correct: bool) -> None:
        if novice_correct:
            self._success_unqueried.append(not queried)
        else:
            self._failure_queried.append(queried)
        self._novice.append(novice_correct)
        self._system.append(queried or novice_correct)
        self._queried.append(queried)

    @staticmethod
    def _tail_mean(values: list[bool], window: int) -> float:
        tail = values[-window:]
        return float(np.mean(tail)) if tail else float("nan")

    def sensitivity(self) -> float:
        return self._tail_mean(self._failure_queried, self.window)

    def specificity(self) -> float:
        return self._tail_mean(self._success_unqueried, self.window)

    def novice_success(self) -> float:
        return self._tail_mean(self._novice, self.window)

    def system_success(self) -> float:
        return self._tail_mean(self._system, self.window)

    def query_rate(self) -> float:
        return self._tail_mean(self._queried, self.window)


@dataclass
class RunHooks:
    """Callbacks for live observers (the session service)."""

    on_episode_end: callable = None  # (episode, stats_dict)


@dataclass
class RunResult:
    """Artifacts of one experiment run."""

    run_id: str
    out_dir: Path | None
    summary: dict
    csv_text: str
    dataset: DemoDataset
    model: NoviceModel


def _span_rate(flags: list[bool], lo: float, hi: float) -> float:
    """Mean of a boolean series over the [lo, hi) fraction of its length."""
    n = len(flags)
    part = flags[int(lo * n) : int(hi * n)]
    return float(np.mean(part)) if part else float("nan")


def _sensitivity_over(queried: list[bool], correct: list[bool], lo: float, hi: float) -> float:
    n = len(queried)
    sl = slice(int(lo * n), int(hi * n))
    q = np.asarray(queried[sl], dtype=bool)
    c = np.asarray(correct[sl], dtype=bool)
    failures = ~c
    if not failures.any():
        return float("nan")
    return float(q[failures].mean())


def _specificity_over(queried: list[bool], correct: list[bool], lo: float, hi: float) -> float:
    n = len(queried)
    sl = slice(int(lo * n), int(hi * n))
    q = np.asarray(queried[sl], dtype=bool)
    c = np.asarray(correct[sl], dtype=bool)
    if not c.any():
        return float("nan")
    return float((~q[c]).mean())


def evaluate_success(
    model: NoviceModel,
    task: SynthTask,
    phase_kind: str,
    command_pool: list[int],
    episodes: int,
    rng: np.random.Generator,
) -> float:
    """Deterministic-policy success rate on freshly generated scenes."""
    wins = 0
    for _ in range(episodes):
        scene = generate_scene(task, phase_kind, rng, command_pool=command_pool)
        if model.act(scene.observation, scene.goal) == scene.goal_index:
            wins += 1
    return wins / episodes


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    teacher_factory=None,
    hooks: RunHooks | None = None,
    dataset_sink=None,
) -> RunResult:
    """Run the full interactive loop for one seed and write its artifacts.

    The loop mirrors the main training procedure: per decision the novice
    plans, the gate decides, queried steps collect demonstrations, and the
    model performs prioritized-replay updates on a fixed step cadence.
    Frozen checkpoints are evaluated on seen and unseen command sets every
    fixed number of collected demonstrations.

    ``teacher_factory(env, rng)`` may substitute a different teacher (the
    session service routes queries to a human); the default is the oracle.
    """
    warnings = config.validate()
    run_id = config.effective_run_id()
    ablations = config.ablations()
    phases = config.phase_list()

    seed = config.seed
    task = SynthTask.build(config, substream(seed, "task"))
    env = SynthEnv(task, config.steps_per_episode, substream(seed, "env"))
    model = NoviceModel(
        NoviceConfig(
            feature_dim=config.feature_dim,
            n_goals=config.n_attributes,
            hidden=config.hidden,
            dropout=config.dropout,
            passes=config.passes,
            leak=config.leak,
            uncertainty=config.uncertainty,
        ),
        substream(seed, "init"),
    )
    gating = GatingConfig(
        mode=config.mode,
        sigma_des=config.sigma_des,
        p_rand=config.p_rand,
        n_min=config.n_min,
        n_rep=config.n_rep,
        impute="no_sag_imputation" not in ablations,
        normalize="no_sag_normalization" not in ablations,
    )
    if "no_pier" in ablations:
        pier_cfg = PierConfig(alpha=0.0, beta=0.0, lam=config.lam, base=config.base)
    else:
        pier_cfg = PierConfig(alpha=config.alpha, beta=config.beta, lam=config.lam, base=config.base)
    if teacher_factory is None:
        teacher = OracleTeacher(env, config.relabel_probability, substream(seed, "teacher"))
    else:
        teacher = teacher_factory(env, substream(seed, "teacher"))

    rng_gate = substream(seed, "gating")
    rng_impute = substream(seed, "imputation")
    rng_ensemble = substream(seed, "ensemble")
    rng_sampling = substream(seed, "sampling")
    rng_eval = substream(seed, "eval")

    dataset = DemoDataset()
    if config.seed_dataset:
        offline = as_seed_dataset(load_jsonl(config.seed_dataset))
        dataset.append_trajectory(offline.tuples, offline.records)
    if dataset_sink is not None:
        dataset_sink(dataset)
    history = sag.FeedbackHistory()
    metrics = RollingMetrics(config.metric_window)

    rows: list[list] = []
    queried_flags: list[bool] = []
    correct_flags: list[bool] = []
    system_flags: list[bool] = []
    episode_success: list[float] = []
    series: dict[str, list[float]] = {
        "sensitivity": [], "specificity": [], "novice_success": [],
        "system_success": [], "query_rate": [],
    }
    eval_points: list[dict] = []
    start_time = time.time()

    episode = 0
    steps_done = 0
    next_update_at = config.update_every
    next_eval_at = config.eval_every_demos

    def run_eval() -> None:
        eval_points.append(
            {
                "episode": episode,
                "demos": len(dataset),
                "annotations": dataset.composition_counts()[Kind.ANNOTATION],
                "seen": evaluate_success(
                    model, task, phase_kind, task.seen_attrs, config.eval_episodes, rng_eval
                ),
                "unseen": evaluate_success(
                    model, task, phase_kind, task.unseen_attrs, config.eval_episodes, rng_eval
                ),
            }
        )

    phase_kind = phases[0][0]
    for kind, count in phases:
        phase_kind = kind
        for _ in range(count):
            env.reset(kind)
            result = fier.run_episode(
                env, model, teacher, gating, history, episode,
                rng_gate, rng_impute, rng_ensemble,
                drop_relabels="no_fier_relabel" in ablations,
                annotations_only="no_fier_validate" in ablations,
            )
            dataset.append_trajectory(result.tuples, result.tuple_records)
            ep_correct: list[bool] = []
            for log, scene in zip(result.step_logs, env.trace):
                novice_correct = log.planned_action == scene.goal_index
                system_success = log.queried or novice_correct
                metrics.update(log.queried, novice_correct)
                queried_flags.append(log.queried)
                correct_flags.append(novice_correct)
                system_flags.append(system_success)
                ep_correct.append(novice_correct)
                series["sensitivity"].append(metrics.sensitivity())
                series["specificity"].append(metrics.specificity())
                series["novice_success"].append(metrics.novice_success())
                series["system_success"].append(metrics.system_success())
                series["query_rate"].append(metrics.query_rate())
                rows.append(
                    [
                        run_id, seed, kind, log.episode, log.step, log.k,
                        repr(log.u), repr(log.gamma), int(log.queried), log.reason,
                        log.reward, log.kind, int(novice_correct),
                        int(system_success), scene.goal, log.executed_action,
                    ]
                )
                steps_done += 1
            episode_success.append(float(np.mean(ep_correct)) if ep_correct else float("nan"))

            while steps_done >= next_update_at:
                if len(dataset) > 0:
                    table = pier.build_table(dataset, model.update_count, pier_cfg)
                    model.update(
                        dataset, table, config.grad_steps, config.batch_size,
                        config.learning_rate, rng_sampling,
                    )
                next_update_at += config.update_every
            while len(dataset) >= next_eval_at:
                run_eval()
                next_eval_at += config.eval_every_demos
            if hooks is not None and hooks.on_episode_end is not None:
                hooks.on_episode_end(
                    episode,
                    {
                        "sensitivity": metrics.sensitivity(),
                        "specificity": metrics.specificity(),
                        "novice_success": metrics.novice_success(),
                        "system_success": metrics.system_success(),
                        "query_rate": metrics.query_rate(),
                        "gamma": result.step_logs[-1].gamma if result.step_logs else None,
                        "episodes": episode + 1,
                        "demos": len(dataset),
                    },
                )
            episode += 1

    run_eval()  # final checkpoint

    composition = {k.value: v for k, v in dataset.composition_counts().items()}
    summary = {
        "run_id": run_id,
        "seed": seed,
        "warnings": warnings,
        "composition": composition,
        "episodes": episode,
        "steps": steps_done,
        "queries": int(np.sum(queried_flags)),
        "duration_sec": round(time.time() - start_time, 3),
        "aggregates": {
            "sensitivity_full": _sensitivity_over(queried_flags, correct_flags, 0.0, 1.0),
            "sensitivity_first_third": _sensitivity_over(queried_flags, correct_flags, 0.0, 1 / 3),
            "sensitivity_final_two_thirds": _sensitivity_over(queried_flags, correct_flags, 1 / 3, 1.0),
            "specificity_full": _specificity_over(queried_flags, correct_flags, 0.0, 1.0),
            "specificity_final_two_thirds": _specificity_over(queried_flags, correct_flags, 1 / 3, 1.0),
            "system_success_final_two_thirds": _span_rate(system_flags, 1 / 3, 1.0),
            "novice_success_final_third": _span_rate(correct_flags, 2 / 3, 1.0),
            "query_rate_first_third": _span_rate(queried_flags, 0.0, 1 / 3),
            "query_rate_final_third": _span_rate(queried_flags, 2 / 3, 1.0),
        },
        "episode_success": episode_success,
        "series": series,
        "eval": eval_points,
        "config": {
            line.split(" = ")[0]: line.split(" = ", 1)[1]
            for line in echo_config(config).strip().splitlines()
        },
    }

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    csv_text = buf.getvalue()

    out_path: Path | None = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "steps.csv").write_text(csv_text, encoding="utf-8")
        (out_path / "summary.json").write_text(
            json.dumps(summary, indent=2, allow_nan=True), encoding="utf-8"
        )
        (out_path / "config.txt").write_text(echo_config(config), encoding="utf-8")
        model.save(out_path / "model.json")
        save_jsonl(dataset, out_path / "dataset.jsonl")

    return RunResult(
        run_id=run_id, out_dir=out_path, summary=summary,
        csv_text=csv_text, dataset=dataset, model=model,
    )
