// Single console store: connection, pending query, draft, metric buffers.
// All WebSocket events and user edits funnel through these functions on one
// event loop, so views always render from a consistent snapshot.

import type {
  MetricPoint,
  PendingQuery,
  ResponseDraft,
  SessionEvent,
  TaskShape,
} from './types.js';
import { SCHEMA_VERSION } from './types.js';

export type Connection = 'connecting' | 'open' | 'closed';

export interface ConsoleState {
  connection: Connection;
  pending: PendingQuery | null;
  draft: ResponseDraft;
  banner: string | null; // blocking problem (schema mismatch, bad payload)
  notice: string | null; // transient info (409 refresh, network retry)
  lastEventId: number;
  metrics: Record<string, MetricPoint[]>;
  episodes: number;
  sessionStatus: string;
}

export const METRIC_KEYS = ['sensitivity', 'system_success', 'novice_success', 'query_rate'];
const METRIC_BUFFER = 2000;

export function initialState(): ConsoleState {
  return {
    connection: 'connecting',
    pending: null,
    draft: emptyDraft(),
    banner: null,
    notice: null,
    lastEventId: -1,
    metrics: Object.fromEntries(METRIC_KEYS.map((k) => [k, []])),
    episodes: 0,
    sessionStatus: 'running',
  };
}

export function emptyDraft(): ResponseDraft {
  return { verdict: null, relabelGoal: null, annotationAction: null };
}

function isValidQuery(query: unknown): query is PendingQuery {
  if (typeof query !== 'object' || query === null) return false;
  const q = query as Record<string, unknown>;
  return (
    typeof q['query_id'] === 'number' &&
    typeof q['planned_action'] === 'number' &&
    typeof q['u'] === 'number' &&
    Array.isArray(q['candidates']) &&
    q['candidates'].length > 0
  );
}

/** Install a pending query from the server; malformed payloads raise a banner. */
export function setPendingQuery(state: ConsoleState, query: unknown): ConsoleState {
  if (query === null) {
    return { ...state, pending: null, draft: emptyDraft() };
  }
  if (!isValidQuery(query)) {
    return { ...state, banner: 'malformed query payload from server', pending: null };
  }
  const pending = query as PendingQuery;
  if (pending.schema_version !== SCHEMA_VERSION) {
    return {
      ...state,
      banner: `schema version mismatch: server ${pending.schema_version}, console ${SCHEMA_VERSION}`,
      pending: null,
    };
  }
  if (state.pending && state.pending.query_id === pending.query_id) {
    return { ...state, pending }; // same query refreshed; keep the draft
  }
  return { ...state, pending, draft: emptyDraft(), notice: null };
}

/** Fold one event-stream message into the store (idempotent by event id). */
export function applyEvent(state: ConsoleState, event: SessionEvent): ConsoleState {
  if (event.id <= state.lastEventId) {
    return state; // replayed during catch-up
  }
  const next = { ...state, lastEventId: event.id };
  switch (event.type) {
    case 'query_posted':
      return setPendingQuery(next, event.data);
    case 'query_answered': {
      const answered = event.data['query_id'];
      if (next.pending && next.pending.query_id === answered) {
        return { ...next, pending: null, draft: emptyDraft() };
      }
      return next;
    }
    case 'episode_done':
      return { ...next, episodes: next.episodes + 1 };
    case 'metrics_update': {
      const metrics = { ...next.metrics };
      for (const key of METRIC_KEYS) {
        const value = event.data[key];
        if (typeof value === 'number' && Number.isFinite(value)) {
          const buf = [...(metrics[key] ?? []), { episode: next.episodes, value }];
          metrics[key] = buf.length > METRIC_BUFFER ? buf.slice(-METRIC_BUFFER) : buf;
        }
      }
      return { ...next, metrics };
    }
    case 'session_done':
      return { ...next, sessionStatus: String(event.data['status'] ?? 'done'), pending: null };
    default:
      return next;
  }
}

export function setVerdict(state: ConsoleState, verdict: 'validate' | 'reject'): ConsoleState {
  const draft = { ...state.draft, verdict };
  if (verdict === 'validate') {
    draft.relabelGoal = null;
    draft.annotationAction = null;
  }
  return { ...state, draft };
}

export function setAnnotation(state: ConsoleState, index: number): ConsoleState {
  return { ...state, draft: { ...state.draft, verdict: 'reject', annotationAction: index } };
}

export function setRelabel(state: ConsoleState, goal: number | null): ConsoleState {
  return { ...state, draft: { ...state.draft, relabelGoal: goal } };
}

export function taskShapeFromQuery(query: PendingQuery, goals: number[]): TaskShape {
  return { candidates: query.candidates.length, goals };
}
