// Browser wiring: DOM events append to the session event log, the view is
// re-rendered from scratch after every event (state is tiny), traces are
// fetched lazily when the attention link is clicked.

import { ApiClient, ApiError } from './api.js';
import { buildAttentionView, MalformedTraceError, renderAttentionHtml, renderEmptyState } from './heatmap.js';
import {
  renderError,
  renderJdOptions,
  renderResumeOptions,
  renderResumePanel,
  renderTranscript,
} from './render.js';
import { inputDisabled, SessionStore } from './state.js';
import type { JdListing, ResumeListing } from './types.js';

const api = new ApiClient('');
const store = new SessionStore();

let resumes: ResumeListing[] = [];
let jds: JdListing[] = [];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function rerender(): void {
  const view = store.view;
  el('transcript').innerHTML = renderTranscript(view);
  el('error').innerHTML = renderError(view);
  const input = el<HTMLInputElement>('answer-input');
  const send = el<HTMLButtonElement>('send-btn');
  const disabled = inputDisabled(view);
  input.disabled = disabled;
  send.disabled = disabled || input.value.trim() === '';
  const selected = resumes.find((r) => r.id === view.resumeId) ?? null;
  el('resume-panel').innerHTML = renderResumePanel(selected);
  const traceRef = view.activeTraceRef;
  if (traceRef && view.traces[traceRef]) {
    try {
      el('heatmap').innerHTML = renderAttentionHtml(buildAttentionView(view.traces[traceRef]));
    } catch (err) {
      if (err instanceof MalformedTraceError) {
        el('heatmap').innerHTML = renderEmptyState(err.message);
      } else {
        throw err;
      }
    }
  }
  for (const link of Array.from(document.querySelectorAll('.trace-link'))) {
    link.addEventListener('click', (ev) => {
      ev.preventDefault();
      const ref = (link as HTMLElement).dataset.traceRef;
      if (ref) void loadTrace(ref);
    });
  }
}

async function loadTrace(traceRef: string): Promise<void> {
  try {
    const { trace } = await api.getTrace(traceRef);
    store.apply({ kind: 'trace_loaded', traceRef, trace });
  } catch (err) {
    el('heatmap').innerHTML = renderEmptyState(
      err instanceof ApiError ? err.message : 'failed to load trace',
    );
    return;
  }
  rerender();
}

async function startSession(): Promise<void> {
  const resumeId = el<HTMLSelectElement>('resume-select').value;
  const jdId = el<HTMLSelectElement>('jd-select').value;
  const requestId = store.nextRequestId();
  store.apply({ kind: 'create_requested', requestId, resumeId, jdId });
  rerender();
  try {
    const res = await api.createSession(resumeId, jdId);
    store.apply({
      kind: 'create_succeeded',
      requestId,
      sessionId: res.session_id,
      question: res.question,
      traceRef: res.trace_ref,
    });
  } catch (err) {
    store.apply({
      kind: 'create_failed',
      requestId,
      message: err instanceof ApiError ? err.message : 'network error',
    });
  }
  rerender();
}

async function sendAnswer(): Promise<void> {
  const view = store.view;
  if (inputDisabled(view) || !view.sessionId) return;
  const input = el<HTMLInputElement>('answer-input');
  const text = input.value.trim();
  if (!text) return;
  const requestId = store.nextRequestId();
  store.apply({ kind: 'answer_requested', requestId, text });
  input.value = '';
  rerender();
  try {
    const res = await api.submitAnswer(view.sessionId, text, requestId);
    store.apply({
      kind: 'answer_succeeded',
      requestId,
      question: res.question,
      traceRef: res.trace_ref,
    });
  } catch (err) {
    store.apply({
      kind: 'answer_failed',
      requestId,
      message: err instanceof ApiError ? err.message : 'network error',
    });
    input.value = text; // failed bubble stays editable
  }
  rerender();
}

async function boot(): Promise<void> {
  try {
    [{ resumes }, { jds }] = await Promise.all([api.listResumes(), api.listJds()]);
  } catch {
    el('error').innerHTML = renderEmptyState('service unreachable; is `interviewgen serve` running?');
    return;
  }
  el('resume-select').innerHTML = renderResumeOptions(resumes);
  el('jd-select').innerHTML = renderJdOptions(jds);
  el('start-btn').addEventListener('click', () => void startSession());
  el('send-btn').addEventListener('click', () => void sendAnswer());
  el<HTMLInputElement>('answer-input').addEventListener('keydown', (ev) => {
    if ((ev as KeyboardEvent).key === 'Enter') void sendAnswer();
  });
  el<HTMLInputElement>('answer-input').addEventListener('input', rerender);
  rerender();
}

document.addEventListener('DOMContentLoaded', () => void boot());
