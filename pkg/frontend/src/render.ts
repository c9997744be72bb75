// Transcript and picker rendering to HTML strings (kept DOM-free so the
// view layer is testable; app.ts owns actual DOM insertion).

import type { Message, SessionView } from './state.js';
import type { JdListing, ResumeListing } from './types.js';

const esc = (s: string) =>
  s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');

export function renderMessage(m: Message): string {
  const text = esc(m.tokens.join(' '));
  const classes = `bubble ${m.speaker} ${m.status}`;
  const trace = m.traceRef
    ? ` <a class="trace-link" data-trace-ref="${esc(m.traceRef)}" href="#">attention</a>`
    : '';
  const badge = m.status === 'failed' ? ' <span class="badge">failed, click to edit</span>' : '';
  return `<div class="${classes}" data-request-id="${esc(m.requestId ?? '')}">${text}${trace}${badge}</div>`;
}

export function renderTranscript(view: SessionView): string {
  return view.messages.map(renderMessage).join('');
}

export function renderError(view: SessionView): string {
  return view.error ? `<div class="error-banner">${esc(view.error)}</div>` : '';
}

export function renderResumeOptions(resumes: ResumeListing[]): string {
  return resumes
    .map((r) => {
      const label = `${r.id} (${r.basic['expected_position'] ?? '?'}, ${r.basic['skills'] ?? '?'})`;
      return `<option value="${esc(r.id)}">${esc(label)}</option>`;
    })
    .join('');
}

export function renderJdOptions(jds: JdListing[]): string {
  return jds
    .map((j) => {
      const label = `${j.id}: ${j.tokens.slice(0, 6).join(' ')}...`;
      return `<option value="${esc(j.id)}">${esc(label)}</option>`;
    })
    .join('');
}

export function renderResumePanel(resume: ResumeListing | null): string {
  if (!resume) return '<div class="resume-panel empty">no resume selected</div>';
  const rows = Object.entries(resume.basic)
    .map(([k, v]) => `<tr><th>${esc(k)}</th><td>${esc(v)}</td></tr>`)
    .join('');
  return `<table class="resume-panel">${rows}</table>`;
}
