// Client-side feedback validation, mirroring the server's 422 rules exactly.
// The shared fixture (shared/feedback_cases.json) is asserted against both
// this module and the live server, so the two rule sets cannot drift.

import type { FeedbackBody, ResponseDraft, TaskShape } from './types.js';

export interface ValidationResult {
  valid: boolean;
  errors: string[];
}

function isInt(value: unknown): value is number {
  return typeof value === 'number' && Number.isInteger(value);
}

/** Validate a raw feedback body the way the server would (422 rules). */
export function validateFeedbackBody(body: Record<string, unknown>, task: TaskShape): ValidationResult {
  const errors: string[] = [];
  const verdict = body['verdict'];
  if (verdict !== 'validate' && verdict !== 'reject') {
    errors.push(`verdict must be validate or reject, got ${JSON.stringify(verdict)}`);
    return { valid: false, errors };
  }
  const relabel = body['relabel_goal'] ?? null;
  const annotation = body['annotation_action'] ?? null;
  if (verdict === 'validate') {
    if (relabel !== null || annotation !== null) {
      errors.push('validation carries no relabel or annotation');
    }
    return { valid: errors.length === 0, errors };
  }
  if (!isInt(annotation)) {
    errors.push('rejection requires an integer annotation_action');
  } else if (annotation < 0 || annotation >= task.candidates) {
    errors.push(`annotation_action ${annotation} outside [0, ${task.candidates})`);
  }
  if (relabel !== null) {
    if (!isInt(relabel)) {
      errors.push('relabel_goal must be an integer goal id');
    } else if (!task.goals.includes(relabel)) {
      errors.push(`relabel_goal ${relabel} outside the goal set`);
    }
  }
  return { valid: errors.length === 0, errors };
}

/** Whether the submit button should be enabled for the current draft. */
export function draftIsSubmittable(draft: ResponseDraft, task: TaskShape): boolean {
  if (draft.verdict === null) return false;
  const body = draftToBody(draft, 0);
  return validateFeedbackBody(body as unknown as Record<string, unknown>, task).valid;
}

/** Convert a draft into the wire body for POST /session/{id}/feedback. */
export function draftToBody(draft: ResponseDraft, queryId: number): FeedbackBody {
  const body: FeedbackBody = { query_id: queryId, verdict: draft.verdict ?? 'validate' };
  if (draft.verdict === 'reject') {
    body.annotation_action = draft.annotationAction;
    if (draft.relabelGoal !== null) {
      body.relabel_goal = draft.relabelGoal;
    }
  }
  return body;
}
