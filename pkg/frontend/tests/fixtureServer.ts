// In-memory stand-in for the interview service: implements just enough of
// the HTTP surface for client tests, with hooks for delays and failures.

import type { FetchLike } from '../src/api.js';
import type { TracePayload, TranscriptTurn } from '../src/types.js';

interface FixtureSession {
  id: string;
  transcript: TranscriptTurn[];
  traces: TracePayload[];
}

export class FixtureServer {
  sessions = new Map<string, FixtureSession>();
  createCalls = 0;
  answerCalls = 0;
  failNextCreate: number | null = null; // http status to fail with
  failNextAnswer: number | null = null;
  answerDelays: number[] = []; // ms per successive answer call
  private counter = 0;
  private questionCounter = 0;

  makeTrace(slots: number): TracePayload {
    return {
      steps: [
        { gate: 0.4, slot_weights: Array(slots).fill(0.1), top_tokens: [] },
        { gate: 0.7, slot_weights: Array(slots).fill(0.2), top_tokens: [] },
      ],
      memory: {
        slots: Array.from({ length: slots }, (_, i) => ({
          slot: i,
          beta: [0.7, 0.2, 0.1],
        })),
        field_keys: ['school', 'experience_1', 'skills'],
        field_parts: ['basic', 'work_experience', 'basic'],
      },
    };
  }

  private nextQuestion(): string[] {
    this.questionCounter += 1;
    return ['question', `number`, `${this.questionCounter}`, 'about', 'your', 'work'];
  }

  fetch: FetchLike = async (input, init) => {
    const url = String(input);
    const method = init?.method ?? 'GET';
    const delay = (ms: number) => new Promise((r) => setTimeout(r, ms));

    if (method === 'POST' && url.endsWith('/sessions')) {
      this.createCalls += 1;
      if (this.failNextCreate !== null) {
        const status = this.failNextCreate;
        this.failNextCreate = null;
        return json({ detail: 'model not loaded' }, status);
      }
      this.counter += 1;
      const id = `s${this.counter}`;
      const question = this.nextQuestion();
      const session: FixtureSession = {
        id,
        transcript: [{ speaker: 'interviewer', tokens: question }],
        traces: [this.makeTrace(1)],
      };
      this.sessions.set(id, session);
      return json(
        {
          session_id: id,
          question,
          trace_ref: `/sessions/${id}/traces/0`,
          checkpoint_hash: 'fixturehash',
        },
        201,
      );
    }

    const answerMatch = url.match(/\/sessions\/([^/]+)\/answers$/);
    if (method === 'POST' && answerMatch) {
      this.answerCalls += 1;
      const wait = this.answerDelays.shift();
      if (wait) await delay(wait);
      if (this.failNextAnswer !== null) {
        const status = this.failNextAnswer;
        this.failNextAnswer = null;
        return json({ detail: 'answer must not be empty' }, status);
      }
      const session = this.sessions.get(answerMatch[1]);
      if (!session) return json({ detail: 'unknown session' }, 404);
      const body = JSON.parse(String(init?.body ?? '{}')) as { text: string };
      session.transcript.push({
        speaker: 'candidate',
        tokens: body.text.split(/\s+/).filter(Boolean),
      });
      const question = this.nextQuestion();
      session.transcript.push({ speaker: 'interviewer', tokens: question });
      session.traces.push(this.makeTrace(session.traces.length + 1));
      const turn = session.transcript.length - 1;
      return json({
        question,
        trace_ref: `/sessions/${session.id}/traces/${turn}`,
        checkpoint_hash: 'fixturehash',
      });
    }

    const traceMatch = url.match(/\/sessions\/([^/]+)\/traces\/(\d+)$/);
    if (method === 'GET' && traceMatch) {
      const session = this.sessions.get(traceMatch[1]);
      if (!session) return json({ detail: 'unknown session' }, 404);
      const idx = Math.floor(Number(traceMatch[2]) / 2);
      const trace = session.traces[idx];
      if (!trace) return json({ detail: 'turn out of range' }, 404);
      return json({ trace, checkpoint_hash: 'fixturehash' });
    }

    const sessionMatch = url.match(/\/sessions\/([^/]+)$/);
    if (method === 'GET' && sessionMatch) {
      const session = this.sessions.get(sessionMatch[1]);
      if (!session) return json({ detail: 'unknown session' }, 404);
      return json({
        session_id: session.id,
        resume_id: 'r0001',
        jd_id: 'jd_d0001',
        status: 'active',
        transcript: session.transcript,
        checkpoint_hash: 'fixturehash',
      });
    }

    if (method === 'GET' && url.endsWith('/corpus/resumes')) {
      return json({
        resumes: [{ id: 'r0001', basic: { skills: 'python', expected_position: 'backend_engineer' } }],
        checkpoint_hash: 'fixturehash',
      });
    }
    if (method === 'GET' && url.endsWith('/corpus/jds')) {
      return json({
        jds: [{ id: 'jd_d0001', tokens: ['hiring', 'a', 'backend_engineer'] }],
        checkpoint_hash: 'fixturehash',
      });
    }
    return json({ detail: `no fixture for ${method} ${url}` }, 500);
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}
