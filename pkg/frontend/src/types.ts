// Wire types mirrored from the session service (schema_version 1).

export const SCHEMA_VERSION = 1;

export interface CandidateView {
  index: number;
  attribute: number | null;
  name: string;
}

export interface PendingQuery {
  schema_version: number;
  query_id: number;
  episode: number;
  step: number;
  goal: number;
  goal_name: string;
  planned_action: number;
  u: number;
  candidates: CandidateView[];
}

export interface SessionState {
  schema_version: number;
  status: string;
  pending_query: PendingQuery | null;
  stats: Record<string, number | null>;
}

export interface FeedbackBody {
  query_id: number;
  verdict: 'validate' | 'reject';
  relabel_goal?: number | null;
  annotation_action?: number | null;
}

export interface SessionEvent {
  id: number;
  type: 'query_posted' | 'query_answered' | 'episode_done' | 'metrics_update' | 'session_done';
  data: Record<string, unknown>;
}

// What the teacher is composing before submitting.
export interface ResponseDraft {
  verdict: 'validate' | 'reject' | null;
  relabelGoal: number | null;
  annotationAction: number | null;
}

export interface MetricPoint {
  episode: number;
  value: number;
}

export interface TaskShape {
  candidates: number;
  goals: number[];
}
