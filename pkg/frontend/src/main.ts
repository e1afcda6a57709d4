// Console wiring: one store, one socket, one render loop.

import { SessionApi } from './api.js';
import { drawSeries, latestLabel } from './charts.js';
import {
  ConsoleState,
  METRIC_KEYS,
  applyEvent,
  initialState,
  setAnnotation,
  setPendingQuery,
  setRelabel,
  setVerdict,
} from './state.js';
import type { TaskShape } from './types.js';
import { renderQuerySafe } from './render.js';
import { draftToBody, validateFeedbackBody } from './validation.js';
import { EventSocket } from './ws.js';

const DEFAULT_GOALS = Array.from({ length: 12 }, (_, i) => i);

interface ConsoleApp {
  state: ConsoleState;
  api: SessionApi;
  task: TaskShape;
  gamma: number | null; // latest threshold seen in metrics_update
}

function rerender(app: ConsoleApp): void {
  const root = document.getElementById('query-root');
  if (root) {
    renderQuerySafe(document, root, app.state, app.task, app.gamma, {
      onValidate: () => {
        app.state = setVerdict(app.state, 'validate');
        void submit(app);
      },
      onAnnotate: (index) => {
        app.state = setAnnotation(app.state, index);
        rerender(app);
      },
      onRelabel: (goal) => {
        app.state = setRelabel(app.state, goal);
        rerender(app);
      },
      onSubmit: () => void submit(app),
    });
  }
  const status = document.getElementById('connection');
  if (status) {
    status.textContent = `${app.state.connection} | ${app.state.sessionStatus} | episodes ${app.state.episodes}`;
  }
  for (const key of METRIC_KEYS) {
    const canvas = document.getElementById(`chart-${key}`) as HTMLCanvasElement | null;
    if (canvas) drawSeries(canvas, app.state.metrics[key] ?? []);
    const label = document.getElementById(`label-${key}`);
    if (label) label.textContent = `${key}: ${latestLabel(app.state.metrics[key] ?? [])}`;
  }
}

async function submit(app: ConsoleApp): Promise<void> {
  const pending = app.state.pending;
  if (!pending) return;
  const body = draftToBody(app.state.draft, pending.query_id);
  const check = validateFeedbackBody(body as unknown as Record<string, unknown>, app.task);
  if (!check.valid) {
    app.state = { ...app.state, notice: check.errors.join('; ') };
    rerender(app);
    return;
  }
  try {
    const result = await app.api.postFeedback(body);
    if (result.status === 200) {
      app.state = setPendingQuery(app.state, null);
    } else if (result.status === 409) {
      // answered elsewhere (e.g. timeout fallback); refresh from the server
      const fresh = await app.api.getState();
      app.state = setPendingQuery({ ...app.state, notice: 'query was already answered' }, fresh.pending_query);
    } else if (result.status === 422) {
      app.state = { ...app.state, notice: `rejected: ${String(result.body['error'] ?? 'invalid feedback')}` };
    }
  } catch {
    // network failure: keep the draft, offer retry
    app.state = { ...app.state, notice: 'network failure, draft preserved; retry submit' };
  }
  rerender(app);
}

export async function startConsole(baseUrl: string, sessionId: string): Promise<void> {
  const api = new SessionApi(baseUrl, sessionId);
  const app: ConsoleApp = {
    state: initialState(),
    api,
    task: { candidates: 6, goals: DEFAULT_GOALS },
    gamma: null,
  };

  const fresh = await api.getState();
  app.state = setPendingQuery(app.state, fresh.pending_query);
  if (fresh.pending_query) {
    app.task = { ...app.task, candidates: fresh.pending_query.candidates.length };
  }

  const socket = new EventSocket(api.eventsUrl(), {
    onEvent: (event) => {
      app.state = applyEvent(app.state, event);
      if (event.type === 'query_posted') {
        app.task = {
          ...app.task,
          candidates: (event.data['candidates'] as unknown[])?.length ?? app.task.candidates,
        };
      }
      if (event.type === 'metrics_update' && typeof event.data['gamma'] === 'number') {
        app.gamma = event.data['gamma'] as number;
      }
      rerender(app);
    },
    onStatus: (status) => {
      app.state = { ...app.state, connection: status };
      rerender(app);
    },
  });
  socket.connect();
  rerender(app);
}

declare global {
  interface Window {
    startConsole: typeof startConsole;
  }
}

if (typeof window !== 'undefined') {
  window.startConsole = startConsole;
}
