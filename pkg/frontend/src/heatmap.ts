// Key-matching heatmap view model: one row per memory slot (context turn),
// one column per resume field grouped by part, cell intensity proportional
// to the slot's key-matching weight. Pure data-in data-out so tests don't
// need a DOM.

import type { TracePayload } from './types.js';

export interface HeatmapCell {
  fieldKey: string;
  part: string;
  value: number;
  /** value / row max, in [0, 1]; drives cell opacity. */
  intensity: number;
}

export interface HeatmapRow {
  slot: number;
  label: string;
  rowSum: number;
  cells: HeatmapCell[];
}

export interface AttentionView {
  rows: HeatmapRow[];
  columns: { fieldKey: string; part: string }[];
  gates: number[];
}

export class MalformedTraceError extends Error {}

export function buildAttentionView(trace: TracePayload): AttentionView {
  const memory = trace?.memory;
  if (!memory || !Array.isArray(memory.slots) || !Array.isArray(memory.field_keys)) {
    throw new MalformedTraceError('trace payload is missing memory slots');
  }
  const keys = memory.field_keys;
  const parts = memory.field_parts;
  if (parts.length !== keys.length) {
    throw new MalformedTraceError('field keys and parts disagree');
  }
  // group columns by part, preserving field order within each part
  const order = keys
    .map((_, i) => i)
    .sort((a, b) => (parts[a] === parts[b] ? a - b : parts[a] < parts[b] ? -1 : 1));
  const columns = order.map((i) => ({ fieldKey: keys[i], part: parts[i] }));
  const rows: HeatmapRow[] = memory.slots.map((slot) => {
    if (!Array.isArray(slot.beta) || slot.beta.length !== keys.length) {
      throw new MalformedTraceError(`slot ${slot.slot} has a malformed weight row`);
    }
    const rowMax = Math.max(...slot.beta, 1e-12);
    const cells = order.map((i) => ({
      fieldKey: keys[i],
      part: parts[i],
      value: slot.beta[i],
      intensity: slot.beta[i] / rowMax,
    }));
    const rowSum = slot.beta.reduce((acc, v) => acc + v, 0);
    return { slot: slot.slot, label: `turn ${slot.slot + 1}`, rowSum, cells };
  });
  const gates = (trace.steps ?? []).map((s) => s.gate);
  return { rows, columns, gates };
}

const esc = (s: string) =>
  s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');

export function renderAttentionHtml(view: AttentionView): string {
  const header = view.columns
    .map((c) => `<th class="part-${esc(c.part)}" title="${esc(c.part)}">${esc(c.fieldKey)}</th>`)
    .join('');
  const body = view.rows
    .map((row) => {
      const cells = row.cells
        .map(
          (c) =>
            `<td class="heat" style="opacity:${c.intensity.toFixed(3)}" ` +
            `title="${esc(c.fieldKey)}: ${c.value.toFixed(4)}"></td>`,
        )
        .join('');
      return `<tr><th>${esc(row.label)}</th>${cells}</tr>`;
    })
    .join('');
  const spark = view.gates
    .map((g, i) => {
      const h = Math.round(Math.min(Math.max(g, 0), 1) * 100);
      return `<span class="gate-bar" style="height:${h}%" title="step ${i + 1}: ${g.toFixed(3)}"></span>`;
    })
    .join('');
  return (
    `<table class="heatmap"><thead><tr><th></th>${header}</tr></thead>` +
    `<tbody>${body}</tbody></table>` +
    `<div class="gate-sparkline" aria-label="fusion gate per step">${spark}</div>`
  );
}

export function renderEmptyState(message: string): string {
  return `<div class="heatmap-empty">${esc(message)}</div>`;
}
