// Payload shapes of the interview service HTTP API.

export interface CreateSessionResponse {
  session_id: string;
  question: string[];
  trace_ref: string;
  checkpoint_hash: string;
}

export interface AnswerResponse {
  question: string[];
  trace_ref: string;
  checkpoint_hash: string;
}

export interface TranscriptTurn {
  speaker: 'interviewer' | 'candidate';
  tokens: string[];
}

export interface SessionResponse {
  session_id: string;
  resume_id: string;
  jd_id: string;
  status: 'active' | 'closed';
  transcript: TranscriptTurn[];
  checkpoint_hash: string;
}

export interface TraceStep {
  gate: number;
  slot_weights: number[];
  top_tokens: { token: string; prob: number }[];
}

export interface TraceMemorySlot {
  slot: number;
  beta: number[];
}

export interface TracePayload {
  steps: TraceStep[];
  memory: {
    slots: TraceMemorySlot[];
    field_keys: string[];
    field_parts: string[];
  };
}

export interface ResumeListing {
  id: string;
  basic: Record<string, string>;
}

export interface JdListing {
  id: string;
  tokens: string[];
}
