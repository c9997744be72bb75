// Thin fetch client for the interview service, with in-flight request
// de-duplication so a double-clicked submit creates exactly one session
// (or one answer) per logical action.

import type {
  AnswerResponse,
  CreateSessionResponse,
  JdListing,
  ResumeListing,
  SessionResponse,
  TracePayload,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

async function parseOrThrow<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText || `http ${res.status}`;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body && typeof body.detail === 'string') detail = body.detail;
    } catch {
      // non-json error body; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  private pending = new Map<string, Promise<unknown>>();

  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Coalesce concurrent calls with the same key onto one request. */
  private dedupe<T>(key: string, run: () => Promise<T>): Promise<T> {
    const existing = this.pending.get(key);
    if (existing) return existing as Promise<T>;
    const request = run().finally(() => {
      this.pending.delete(key);
    });
    this.pending.set(key, request);
    return request;
  }

  private post<T>(path: string, body: unknown, key: string): Promise<T> {
    return this.dedupe(key, async () => {
      const res = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(body),
      });
      return parseOrThrow<T>(res);
    });
  }

  private get<T>(path: string): Promise<T> {
    return this.dedupe(`GET ${path}`, async () => {
      const res = await this.fetchFn(`${this.baseUrl}${path}`);
      return parseOrThrow<T>(res);
    });
  }

  createSession(resumeId: string, jdId: string): Promise<CreateSessionResponse> {
    return this.post('/sessions', { resume_id: resumeId, jd_id: jdId },
      `POST /sessions ${resumeId} ${jdId}`);
  }

  submitAnswer(sessionId: string, text: string, requestId: string): Promise<AnswerResponse> {
    return this.post(`/sessions/${sessionId}/answers`, { text },
      `POST answer ${sessionId} ${requestId}`);
  }

  getSession(sessionId: string): Promise<SessionResponse> {
    return this.get(`/sessions/${sessionId}`);
  }

  getTrace(traceRef: string): Promise<{ trace: TracePayload }> {
    return this.get(traceRef);
  }

  listResumes(): Promise<{ resumes: ResumeListing[] }> {
    return this.get('/corpus/resumes');
  }

  listJds(): Promise<{ jds: JdListing[] }> {
    return this.get('/corpus/jds');
  }
}
