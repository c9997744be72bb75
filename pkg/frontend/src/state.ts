// Event-sourced session view: the rendered UI is a pure function of the
// event log, so replaying recorded events reproduces the exact view. The
// client never computes model quantities; it only rearranges server
// payloads.

import type { TracePayload } from './types.js';

export interface Message {
  speaker: 'interviewer' | 'candidate';
  tokens: string[];
  status: 'confirmed' | 'pending' | 'failed';
  requestId?: string;
  traceRef?: string;
}

export type SessionEvent =
  | { kind: 'create_requested'; requestId: string; resumeId: string; jdId: string }
  | {
      kind: 'create_succeeded';
      requestId: string;
      sessionId: string;
      question: string[];
      traceRef: string;
    }
  | { kind: 'create_failed'; requestId: string; message: string }
  | { kind: 'answer_requested'; requestId: string; text: string }
  | {
      kind: 'answer_succeeded';
      requestId: string;
      question: string[];
      traceRef: string;
    }
  | { kind: 'answer_failed'; requestId: string; message: string }
  | { kind: 'trace_loaded'; traceRef: string; trace: TracePayload };

export interface SessionView {
  sessionId: string | null;
  resumeId: string | null;
  jdId: string | null;
  pendingRequestId: string | null;
  error: string | null;
  messages: Message[];
  traces: Record<string, TracePayload>;
  activeTraceRef: string | null;
}

export const initialView: SessionView = {
  sessionId: null,
  resumeId: null,
  jdId: null,
  pendingRequestId: null,
  error: null,
  messages: [],
  traces: {},
  activeTraceRef: null,
};

/** Input is disabled whenever a mutation is in flight. */
export function inputDisabled(view: SessionView): boolean {
  return view.pendingRequestId !== null || view.sessionId === null;
}

export function reduce(view: SessionView, event: SessionEvent): SessionView {
  switch (event.kind) {
    case 'create_requested':
      return {
        ...initialView,
        resumeId: event.resumeId,
        jdId: event.jdId,
        pendingRequestId: event.requestId,
      };
    case 'create_succeeded': {
      if (view.pendingRequestId !== event.requestId) return view;
      return {
        ...view,
        sessionId: event.sessionId,
        pendingRequestId: null,
        error: null,
        messages: [
          {
            speaker: 'interviewer',
            tokens: event.question,
            status: 'confirmed',
            traceRef: event.traceRef,
          },
        ],
      };
    }
    case 'create_failed': {
      if (view.pendingRequestId !== event.requestId) return view;
      // no phantom transcript entries on failure
      return { ...view, pendingRequestId: null, error: event.message, messages: [] };
    }
    case 'answer_requested': {
      if (view.sessionId === null || view.pendingRequestId !== null) return view;
      const optimistic: Message = {
        speaker: 'candidate',
        tokens: event.text.split(/\s+/).filter(Boolean),
        status: 'pending',
        requestId: event.requestId,
      };
      return {
        ...view,
        pendingRequestId: event.requestId,
        error: null,
        messages: [...view.messages, optimistic],
      };
    }
    case 'answer_succeeded': {
      if (view.pendingRequestId !== event.requestId) return view;
      const messages = view.messages.map((m) =>
        m.requestId === event.requestId ? { ...m, status: 'confirmed' as const } : m,
      );
      messages.push({
        speaker: 'interviewer',
        tokens: event.question,
        status: 'confirmed',
        traceRef: event.traceRef,
      });
      return { ...view, pendingRequestId: null, messages };
    }
    case 'answer_failed': {
      if (view.pendingRequestId !== event.requestId) return view;
      // mark the optimistic bubble failed so it can be edited and resent
      const messages = view.messages.map((m) =>
        m.requestId === event.requestId ? { ...m, status: 'failed' as const } : m,
      );
      return { ...view, pendingRequestId: null, error: event.message, messages };
    }
    case 'trace_loaded':
      return {
        ...view,
        traces: { ...view.traces, [event.traceRef]: event.trace },
        activeTraceRef: event.traceRef,
      };
    default:
      return view;
  }
}

export function replay(events: SessionEvent[]): SessionView {
  return events.reduce(reduce, initialView);
}

/** Append-only log with a monotonically increasing request id. */
export class SessionStore {
  events: SessionEvent[] = [];
  view: SessionView = initialView;
  private counter = 0;

  nextRequestId(): string {
    this.counter += 1;
    return `req${this.counter}`;
  }

  apply(event: SessionEvent): SessionView {
    this.events.push(event);
    this.view = reduce(this.view, event);
    return this.view;
  }
}
