// @vitest-environment happy-dom
import { describe, expect, it, vi } from 'vitest';

import { initialState, setAnnotation, setPendingQuery } from '../src/state.js';
import { renderQuerySafe } from '../src/render.js';
import type { PendingQuery, TaskShape } from '../src/types.js';

const task: TaskShape = { candidates: 6, goals: Array.from({ length: 12 }, (_, i) => i) };

function query(planned = 2): PendingQuery {
  return {
    schema_version: 1,
    query_id: 1,
    episode: 0,
    step: 0,
    goal: 4,
    goal_name: 'olive',
    planned_action: planned,
    u: 0.37,
    candidates: Array.from({ length: 6 }, (_, i) => ({ index: i, attribute: i, name: `a${i}` })),
  };
}

function noopCallbacks() {
  return {
    onValidate: vi.fn(),
    onAnnotate: vi.fn(),
    onRelabel: vi.fn(),
    onSubmit: vi.fn(),
  };
}

function root(): HTMLElement {
  const node = document.createElement('div');
  document.body.appendChild(node);
  return node;
}

describe('query rendering', () => {
  it('highlights the planned candidate', () => {
    const state = setPendingQuery(initialState(), query(2));
    const node = root();
    renderQuerySafe(document, node, state, task, 0.5, noopCallbacks());
    const planned = node.querySelectorAll('.candidate.planned');
    expect(planned).toHaveLength(1);
    expect(planned[0].textContent).toContain('2:');
  });

  it('shows goal text, uncertainty, and threshold', () => {
    const state = setPendingQuery(initialState(), query());
    const node = root();
    renderQuerySafe(document, node, state, task, 0.512, noopCallbacks());
    expect(node.querySelector('.goal')?.textContent).toContain('olive');
    expect(node.querySelector('.meta')?.textContent).toContain('0.370');
    expect(node.querySelector('.meta')?.textContent).toContain('0.512');
  });

  it('null query renders the idle view', () => {
    const node = root();
    renderQuerySafe(document, node, initialState(), task, null, noopCallbacks());
    expect(node.querySelector('.idle')).not.toBeNull();
    expect(node.querySelector('.query-card')).toBeNull();
  });

  it('malformed payload shows a banner and does not crash', () => {
    const state = setPendingQuery(initialState(), { garbage: 1 });
    const node = root();
    renderQuerySafe(document, node, state, task, null, noopCallbacks());
    expect(node.querySelector('.banner')?.textContent).toMatch(/malformed/);
  });

  it('fuzzed payloads never crash the renderer', () => {
    const payloads = [
      42,
      'text',
      [],
      { candidates: 'nope' },
      { query_id: 'x', candidates: [] },
      { ...query(), candidates: [] },
      { ...query(), u: 'high' },
    ];
    for (const payload of payloads) {
      const state = setPendingQuery(initialState(), payload);
      const node = root();
      renderQuerySafe(document, node, state, task, null, noopCallbacks());
      expect(node.querySelector('.banner, .idle, .query-card')).not.toBeNull();
    }
  });

  it('submit disabled until the draft is valid', () => {
    let state = setPendingQuery(initialState(), query());
    const node = root();
    const callbacks = noopCallbacks();
    renderQuerySafe(document, node, state, task, null, callbacks);
    let submit = node.querySelector('.submit') as HTMLButtonElement;
    expect(submit.disabled).toBe(true);

    state = setAnnotation(state, 1); // reject with annotation selected
    renderQuerySafe(document, node, state, task, null, callbacks);
    submit = node.querySelector('.submit') as HTMLButtonElement;
    expect(submit.disabled).toBe(false);
  });

  it('clicking a candidate reports the annotation index', () => {
    const state = setPendingQuery(initialState(), query());
    const node = root();
    const callbacks = noopCallbacks();
    renderQuerySafe(document, node, state, task, null, callbacks);
    const cells = node.querySelectorAll('.candidate');
    (cells[3] as HTMLButtonElement).click();
    expect(callbacks.onAnnotate).toHaveBeenCalledWith(3);
  });

  it('validate button triggers the validate callback', () => {
    const state = setPendingQuery(initialState(), query());
    const node = root();
    const callbacks = noopCallbacks();
    renderQuerySafe(document, node, state, task, null, callbacks);
    (node.querySelector('.validate') as HTMLButtonElement).click();
    expect(callbacks.onValidate).toHaveBeenCalled();
  });
});
