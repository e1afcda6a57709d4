"""Session service bridging the engine's blocking queries to a remote teacher.

One session wraps one experiment run.  The engine runs in a worker thread;
when it queries, the pending query (with a human-readable scene rendering)
is exposed over HTTP, and the engine blocks until feedback arrives or the
timeout fallback answers with the oracle.  Every state transition is
pushed, in order, to WebSocket subscribers; disconnected clients catch up
from a bounded event buffer.
"""

from __future__ import annotations

import asyncio
import json
import math
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from askdagger import core, simbench
from askdagger.config import ExperimentConfig, echo_config
from askdagger.fier import QueryPresentation, TeacherResponse
from askdagger.simbench import OracleTeacher, RunHooks, Scene, SynthTask, run_experiment

SCHEMA_VERSION = 1
EVENT_BUFFER = 1000


@dataclass
class PendingQuery:
    query_id: int
    payload: dict
    presentation: QueryPresentation
    scene: Scene
    answered: threading.Event = field(default_factory=threading.Event)
    response: TeacherResponse | None = None
    source: str = ""  # client | timeout


class Session:
    """Mutable state of one live run: pending query, stats, event stream."""

    def __init__(self, session_id: str, config: ExperimentConfig, task: SynthTask):
        self.id = session_id
        self.config = config
        self.task = task
        self.lock = threading.Lock()
        self.pending: PendingQuery | None = None
        self.next_query_id = 0
        self.next_event_id = 0
        self.events: deque[dict] = deque(maxlen=EVENT_BUFFER)
        self.subscribers: list[tuple[asyncio.Queue, asyncio.AbstractEventLoop]] = []
        self.stats: dict = {}
        self.status = "running"
        self.dataset: core.DemoDataset | None = None
        self.result: simbench.RunResult | None = None

    def post_event(self, kind: str, data: dict) -> None:
        with self.lock:
            event = {"id": self.next_event_id, "type": kind, "data": data}
            self.next_event_id += 1
            self.events.append(event)
            subscribers = list(self.subscribers)
        for queue, loop in subscribers:
            try:
                loop.call_soon_threadsafe(queue.put_nowait, event)
            except RuntimeError:
                # subscriber's loop already closed; drop it
                with self.lock:
                    if (queue, loop) in self.subscribers:
                        self.subscribers.remove((queue, loop))

    def state_payload(self) -> dict:
        with self.lock:
            return {
                "schema_version": SCHEMA_VERSION,
                "status": self.status,
                "pending_query": self.pending.payload if self.pending else None,
                "stats": dict(self.stats),
            }

    def dataset_jsonl(self) -> str:
        if self.dataset is None:
            return ""
        snapshot = core.DemoDataset(
            tuples=list(self.dataset.tuples), records=list(self.dataset.records)
        )
        return core.dumps_jsonl(snapshot)


def render_query(
    task: SynthTask, scene: Scene, presentation: QueryPresentation, query_id: int
) -> dict:
    """Wire form of a pending query: what a teacher needs to judge the plan."""
    return {
        "schema_version": SCHEMA_VERSION,
        "query_id": query_id,
        "episode": presentation.episode,
        "step": presentation.step,
        "goal": presentation.goal,
        "goal_name": task.attribute_name(presentation.goal),
        "planned_action": presentation.planned_action,
        "u": presentation.u,
        "candidates": [
            {
                "index": i,
                "attribute": attr,
                "name": task.attribute_name(attr),
            }
            for i, attr in enumerate(scene.attributes)
        ],
    }


class FeedbackRejected(ValueError):
    """Feedback payload fails the protocol rules (HTTP 422)."""


def parse_feedback(body: dict, goal_set: frozenset[int], n_candidates: int) -> TeacherResponse:
    """Validate a feedback payload into a TeacherResponse (raises on 422 cases)."""
    verdict = body.get("verdict")
    if verdict not in ("validate", "reject"):
        raise FeedbackRejected(f"verdict must be validate or reject, got {verdict!r}")
    relabel_goal = body.get("relabel_goal")
    annotation_action = body.get("annotation_action")
    if verdict == "validate":
        if relabel_goal is not None or annotation_action is not None:
            raise FeedbackRejected("validation carries no relabel or annotation")
        return TeacherResponse(verdict="validate")
    if not isinstance(annotation_action, int) or isinstance(annotation_action, bool):
        raise FeedbackRejected("rejection requires an integer annotation_action")
    if not 0 <= annotation_action < n_candidates:
        raise FeedbackRejected(
            f"annotation_action {annotation_action} outside [0, {n_candidates})"
        )
    if relabel_goal is not None:
        if not isinstance(relabel_goal, int) or isinstance(relabel_goal, bool):
            raise FeedbackRejected("relabel_goal must be an integer goal id")
        if relabel_goal not in goal_set:
            raise FeedbackRejected(f"relabel_goal {relabel_goal} outside the goal set")
    return TeacherResponse(
        verdict="reject", relabel_goal=relabel_goal, annotation_action=annotation_action
    )


class RemoteTeacher:
    """Blocks the engine on a pending query until feedback or fallback.

    With ``fallback="oracle_after_timeout"`` an unanswered query is
    answered by the wrapped oracle after ``timeout`` seconds, keeping
    unattended runs deterministic.
    """

    def __init__(
        self,
        session: Session,
        env: simbench.SynthEnv,
        oracle: OracleTeacher,
        timeout: float,
        fallback: str,
    ):
        self.session = session
        self.env = env
        self.oracle = oracle
        self.timeout = timeout
        self.fallback = fallback

    def respond(self, presentation: QueryPresentation) -> TeacherResponse:
        session = self.session
        scene = self.env.scene
        with session.lock:
            query_id = session.next_query_id
            session.next_query_id += 1
            pending = PendingQuery(
                query_id=query_id,
                payload=render_query(session.task, scene, presentation, query_id),
                presentation=presentation,
                scene=scene,
            )
            session.pending = pending
        session.post_event("query_posted", pending.payload)

        answered = pending.answered.wait(
            self.timeout if self.fallback == "oracle_after_timeout" else None
        )
        if not answered:
            with session.lock:
                if session.pending is pending and pending.response is None:
                    pending.response = self.oracle.respond(presentation)
                    pending.source = "timeout"
                    session.pending = None
                    pending.answered.set()
        pending.answered.wait()
        session.post_event(
            "query_answered",
            {
                "query_id": query_id,
                "source": pending.source,
                "verdict": pending.response.verdict,
            },
        )
        return pending.response


def create_session(config: ExperimentConfig) -> Session:
    from askdagger.rand import substream

    task = SynthTask.build(config, substream(config.seed, "task"))
    return Session(uuid.uuid4().hex[:8], config, task)


def start_engine(session: Session, use_remote_teacher: bool = True) -> threading.Thread:
    """Launch the experiment in a worker thread, routing queries via the session."""
    config = session.config

    def teacher_factory(env, rng):
        oracle = OracleTeacher(env, config.relabel_probability, rng)
        if not use_remote_teacher:
            return oracle
        return RemoteTeacher(session, env, oracle, config.timeout, config.fallback)

    hooks = RunHooks(on_episode_end=_episode_hook(session))

    def target():
        try:
            result = run_experiment(
                config,
                out_dir=None,
                teacher_factory=teacher_factory,
                hooks=hooks,
                dataset_sink=lambda ds: setattr(session, "dataset", ds),
            )
            session.result = result
            session.status = "done"
        except Exception as exc:  # surfaced via /state
            session.status = f"failed: {exc}"
            raise
        finally:
            session.post_event("session_done", {"status": session.status})

    thread = threading.Thread(target=target, daemon=True, name=f"engine-{session.id}")
    thread.start()
    return thread


def _json_safe(value):
    """Replace non-finite floats with null; wire payloads must be strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def _episode_hook(session: Session):
    def hook(episode: int, stats: dict) -> None:
        safe = _json_safe(stats)
        with session.lock:
            session.stats = safe
        session.post_event("episode_done", {"episode": episode})
        session.post_event("metrics_update", safe)

    return hook


def create_app(sessions: dict[str, Session]) -> FastAPI:
    app = FastAPI(title="teaching session service")

    def get_session(session_id: str) -> Session | None:
        return sessions.get(session_id)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "schema_version": SCHEMA_VERSION,
            "sessions": {
                sid: {"status": s.status, "config": echo_config(s.config)}
                for sid, s in sessions.items()
            },
        }

    @app.get("/session/{session_id}/state")
    def state(session_id: str):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return session.state_payload()

    @app.post("/session/{session_id}/feedback")
    async def feedback(session_id: str, body: dict):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        query_id = body.get("query_id")
        with session.lock:
            pending = session.pending
            if pending is None or pending.query_id != query_id:
                return JSONResponse(
                    {"error": "no pending query with that id"}, status_code=409
                )
            try:
                response = parse_feedback(
                    body, session.task.goal_set, session.task.candidates
                )
            except FeedbackRejected as exc:
                return JSONResponse({"error": str(exc)}, status_code=422)
            pending.response = response
            pending.source = "client"
            session.pending = None
            pending.answered.set()
        return {"ok": True, "query_id": query_id}

    @app.get("/session/{session_id}/dataset")
    def dataset(session_id: str):
        session = get_session(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return PlainTextResponse(session.dataset_jsonl(), media_type="application/jsonl")

    @app.websocket("/session/{session_id}/events")
    async def events(websocket: WebSocket, session_id: str):
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue: asyncio.Queue = asyncio.Queue()
        loop = asyncio.get_running_loop()
        with session.lock:
            backlog = list(session.events)
            session.subscribers.append((queue, loop))
        try:
            for event in backlog:
                await websocket.send_text(json.dumps(event))
            while True:
                event = await queue.get()
                await websocket.send_text(json.dumps(event))
        except WebSocketDisconnect:
            pass
        finally:
            with session.lock:
                if (queue, loop) in session.subscribers:
                    session.subscribers.remove((queue, loop))

    return app


def serve_forever(config: ExperimentConfig, host: str = "127.0.0.1") -> None:
    import uvicorn

    session = create_session(config)
    sessions = {session.id: session}
    app = create_app(sessions)
    start_engine(session)
    print(f"session {session.id} on http://{host}:{config.port}")
    uvicorn.run(app, host=host, port=config.port, log_level="warning")
