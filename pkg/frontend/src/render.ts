// DOM rendering: the query card with its candidate grid, banners, and the
// idle view.  Pure functions of the store snapshot; main.ts wires callbacks.

import type { ConsoleState } from './state.js';
import type { PendingQuery } from './types.js';
import { draftIsSubmittable } from './validation.js';
import type { TaskShape } from './types.js';

export interface RenderCallbacks {
  onValidate: () => void;
  onAnnotate: (index: number) => void;
  onRelabel: (goal: number | null) => void;
  onSubmit: () => void;
}

function el(doc: Document, tag: string, className: string, text = ''): HTMLElement {
  const node = doc.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function renderBanner(doc: Document, root: HTMLElement, state: ConsoleState): void {
  const old = root.querySelector('.banner');
  if (old) old.remove();
  if (!state.banner) return;
  const banner = el(doc, 'div', 'banner', state.banner);
  root.prepend(banner);
}

/** Render the pending query card: goal text, uncertainty, candidate grid. */
export function renderQuery(
  doc: Document,
  root: HTMLElement,
  state: ConsoleState,
  task: TaskShape,
  gamma: number | null,
  callbacks: RenderCallbacks,
): void {
  root.innerHTML = '';
  renderBanner(doc, root, state);
  const query = state.pending;
  if (query === null) {
    root.appendChild(el(doc, 'div', 'idle', 'no pending query'));
    return;
  }
  const card = el(doc, 'div', 'query-card');
  card.appendChild(
    el(doc, 'div', 'goal', `pick the ${query.goal_name} object (goal ${query.goal})`),
  );
  const meta = `uncertainty ${query.u.toFixed(3)}` + (gamma === null ? '' : `, threshold ${gamma.toFixed(3)}`);
  card.appendChild(el(doc, 'div', 'meta', meta));

  const grid = el(doc, 'div', 'candidate-grid');
  for (const candidate of query.candidates) {
    const cell = el(doc, 'button', 'candidate', `${candidate.index}: ${candidate.name}`);
    if (candidate.index === query.planned_action) {
      cell.classList.add('planned');
    }
    if (state.draft.annotationAction === candidate.index) {
      cell.classList.add('annotated');
    }
    cell.addEventListener('click', () => callbacks.onAnnotate(candidate.index));
    grid.appendChild(cell);
  }
  card.appendChild(grid);

  const controls = el(doc, 'div', 'controls');
  const validate = el(doc, 'button', 'validate', 'validate plan') as HTMLButtonElement;
  validate.addEventListener('click', () => callbacks.onValidate());
  controls.appendChild(validate);

  const relabel = doc.createElement('select');
  relabel.className = 'relabel';
  const none = doc.createElement('option');
  none.value = '';
  none.textContent = 'no relabel';
  relabel.appendChild(none);
  for (const goal of task.goals) {
    const option = doc.createElement('option');
    option.value = String(goal);
    option.textContent = `plan achieves goal ${goal}`;
    relabel.appendChild(option);
  }
  relabel.value = state.draft.relabelGoal === null ? '' : String(state.draft.relabelGoal);
  relabel.addEventListener('change', () =>
    callbacks.onRelabel(relabel.value === '' ? null : Number(relabel.value)),
  );
  controls.appendChild(relabel);

  const submit = el(doc, 'button', 'submit', 'submit feedback') as HTMLButtonElement;
  submit.disabled = !draftIsSubmittable(state.draft, task);
  submit.addEventListener('click', () => callbacks.onSubmit());
  controls.appendChild(submit);
  card.appendChild(controls);

  if (state.notice) {
    card.appendChild(el(doc, 'div', 'notice', state.notice));
  }
  root.appendChild(card);
}

/** Safe wrapper: malformed payloads surface a banner instead of crashing. */
export function renderQuerySafe(
  doc: Document,
  root: HTMLElement,
  state: ConsoleState,
  task: TaskShape,
  gamma: number | null,
  callbacks: RenderCallbacks,
): void {
  try {
    renderQuery(doc, root, state, task, gamma, callbacks);
  } catch (err) {
    root.innerHTML = '';
    root.appendChild(el(doc, 'div', 'banner', `render error: ${String(err)}`));
  }
}

export function queryFromUnknown(payload: unknown): PendingQuery | null {
  if (typeof payload !== 'object' || payload === null) return null;
  return payload as PendingQuery;
}
