// Thin typed client for the session service endpoints.

import type { FeedbackBody, SessionState } from './types.js';

export interface SubmitResult {
  status: number;
  body: Record<string, unknown>;
}

export class SessionApi {
  constructor(
    private baseUrl: string,
    private sessionId: string,
  ) {}

  async getState(): Promise<SessionState> {
    const resp = await fetch(`${this.baseUrl}/session/${this.sessionId}/state`);
    if (!resp.ok) {
      throw new Error(`state request failed: ${resp.status}`);
    }
    return (await resp.json()) as SessionState;
  }

  async postFeedback(body: FeedbackBody): Promise<SubmitResult> {
    const resp = await fetch(`${this.baseUrl}/session/${this.sessionId}/feedback`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    let parsed: Record<string, unknown> = {};
    try {
      parsed = (await resp.json()) as Record<string, unknown>;
    } catch {
      // non-JSON error bodies are fine; status carries the outcome
    }
    return { status: resp.status, body: parsed };
  }

  datasetUrl(): string {
    return `${this.baseUrl}/session/${this.sessionId}/dataset`;
  }

  eventsUrl(): string {
    const ws = this.baseUrl.replace(/^http/, 'ws');
    return `${ws}/session/${this.sessionId}/events`;
  }
}
