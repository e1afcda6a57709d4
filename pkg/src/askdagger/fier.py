"""Teacher feedback collection: validation, relabeling, annotation.

When the gate fires, the novice presents its planned action.  The teacher
either validates it (plan executes and is aggregated as a demonstration)
or rejects it and annotates the correct action (the annotation executes
and is aggregated).  A rejected plan may additionally be relabeled to the
goal it *would* have achieved, storing the novice's own action as a
demonstration for that alternative goal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from askdagger import sag
from askdagger.core import DemoTuple, FeedbackRecord, Kind, Observation, Reward
from askdagger.sag import GatingConfig


class ProtocolError(ValueError):
    """Malformed teacher response."""


@dataclass(frozen=True)
class QueryPresentation:
    """What the teacher sees: the scene, the command, and the novice plan."""

    observation: Observation
    goal: int
    planned_action: int
    u: float
    episode: int
    step: int

    def __post_init__(self):
        if not 0 <= self.planned_action < self.observation.n_candidates:
            raise ValueError(
                f"planned action {self.planned_action} outside candidate range"
            )


@dataclass(frozen=True)
class TeacherResponse:
    """Teacher verdict on a presented plan.

    A rejection must carry the corrective annotation and may carry the
    goal the plan would have achieved; a validation carries neither.
    """

    verdict: str  # validate | reject
    relabel_goal: int | None = None
    annotation_action: int | None = None

    def __post_init__(self):
        if self.verdict not in ("validate", "reject"):
            raise ProtocolError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "validate":
            if self.relabel_goal is not None or self.annotation_action is not None:
                raise ProtocolError("validation carries no relabel or annotation")
        elif self.annotation_action is None:
            raise ProtocolError("rejection requires an annotation action")


class TeacherInterface(Protocol):
    """Anything that can answer a query: an oracle or a remote human."""

    def respond(self, presentation: QueryPresentation) -> TeacherResponse: ...


@dataclass(frozen=True)
class QueryOutcome:
    """Result of one teacher round-trip."""

    executed_action: int
    tuples: list[DemoTuple]
    reward: Reward


def fier_query(
    presentation: QueryPresentation,
    teacher: TeacherInterface,
    goal_set: frozenset[int] | set[int],
) -> QueryOutcome:
    """One query round-trip, converting the response into demonstrations.

    Validation yields one validation tuple and executes the plan.
    Rejection yields one annotation tuple carrying the teacher's action
    (which executes) plus, when the teacher relabeled to a goal inside the
    goal set, one relabeled tuple carrying the novice's planned action.
    Relabels outside the goal set are dropped silently.
    """
    response = teacher.respond(presentation)
    obs, goal = presentation.observation, presentation.goal
    if response.verdict == "validate":
        tup = DemoTuple(obs, presentation.planned_action, goal, Reward.VALIDATED, Kind.VALIDATION)
        return QueryOutcome(presentation.planned_action, [tup], Reward.VALIDATED)
    if not 0 <= response.annotation_action < obs.n_candidates:
        raise ProtocolError(
            f"annotation action {response.annotation_action} outside candidate range"
        )
    tuples = [
        DemoTuple(obs, response.annotation_action, goal, Reward.REJECTED, Kind.ANNOTATION)
    ]
    if response.relabel_goal is not None and response.relabel_goal in goal_set:
        tuples.append(
            DemoTuple(obs, presentation.planned_action, response.relabel_goal, Reward.NONE, Kind.RELABELED)
        )
    return QueryOutcome(response.annotation_action, tuples, Reward.REJECTED)


class EpisodeAborted(RuntimeError):
    """Environment failed mid-episode; partial records are kept."""


@dataclass(frozen=True)
class StepLog:
    """Per-step trace of what the gate and teacher did."""

    episode: int
    step: int
    k: int
    u: float
    gamma: float
    queried: bool
    reason: str
    reward: int
    kind: str  # primary tuple kind created at this step, or "none"
    planned_action: int
    executed_action: int


@dataclass
class EpisodeResult:
    """Episode outputs: demonstrations, their aligned records, and the step trace.

    ``step_records`` holds exactly one feedback record per decision
    (queried or not) for the gating history; ``tuple_records`` aligns
    one-to-one with ``tuples`` for dataset aggregation.
    """

    tuples: list[DemoTuple] = field(default_factory=list)
    tuple_records: list[FeedbackRecord] = field(default_factory=list)
    step_records: list[FeedbackRecord] = field(default_factory=list)
    step_logs: list[StepLog] = field(default_factory=list)


def run_episode(
    env,
    model,
    teacher: TeacherInterface,
    gating: GatingConfig,
    history,
    episode: int,
    rng_gate: np.random.Generator,
    rng_impute: np.random.Generator,
    rng_ensemble: np.random.Generator,
    *,
    drop_relabels: bool = False,
    annotations_only: bool = False,
) -> EpisodeResult:
    """Run one episode of gated data collection.

    Every step the novice plans and scores its uncertainty, the gating
    threshold is recomputed from the feedback history, and queried steps
    go through the teacher while unqueried ones execute the plan.  New
    feedback records are appended to ``history`` as the episode runs
    (later steps gate on earlier ones).

    ``annotations_only`` reproduces the plain active data-aggregation
    baseline: every query stores a single annotation tuple with the
    correct action (a validated plan is its own correct action), while
    the gating history still records the true verdict.  ``drop_relabels``
    discards relabeled tuples.  Environment failures abort the episode,
    keeping partial records.
    """
    if not isinstance(history, sag.FeedbackHistory):
        raise TypeError("history must be a FeedbackHistory (single growing instance)")
    result = EpisodeResult()
    obs, goal = env.observe()
    done = False
    step = 0
    while not done:
        planned, u = model.predict(obs, goal, rng_ensemble)
        gamma = sag.sag_threshold(history, gating, model.update_count, rng_impute)
        decision = sag.decide(u, gamma, gating.p_rand, rng_gate)
        step_tuples: list[DemoTuple] = []
        if decision.queried:
            presentation = QueryPresentation(obs, goal, planned, u, episode, step)
            outcome = fier_query(presentation, teacher, env.goal_set)
            reward = outcome.reward
            if annotations_only:
                correct = (
                    planned
                    if reward == Reward.VALIDATED
                    else outcome.executed_action
                )
                step_tuples = [DemoTuple(obs, correct, goal, Reward.REJECTED, Kind.ANNOTATION)]
                executed = correct
            else:
                step_tuples = list(outcome.tuples)
                if drop_relabels:
                    step_tuples = [t for t in step_tuples if t.kind is not Kind.RELABELED]
                executed = outcome.executed_action
        else:
            reward = Reward.NONE
            executed = planned
        step_record = FeedbackRecord(
            u=u, r=reward, k=model.update_count, queried=decision.queried,
            episode=episode, step=step,
        )
        history.append(step_record)
        result.step_records.append(step_record)
        for tup in step_tuples:
            result.tuples.append(tup)
            result.tuple_records.append(
                FeedbackRecord(
                    u=u, r=tup.reward, k=model.update_count,
                    queried=True, episode=episode, step=step,
                )
            )
        result.step_logs.append(
            StepLog(
                episode=episode, step=step, k=model.update_count, u=u,
                gamma=gamma, queried=decision.queried, reason=decision.reason,
                reward=int(reward),
                kind=step_tuples[0].kind.value if step_tuples else "none",
                planned_action=planned, executed_action=executed,
            )
        )
        try:
            obs, done = env.step(executed)
        except EpisodeAborted:
            break
        step += 1
    return result
