// Typed client for the dstkit chat service.

export interface SqlPayload {
  text: string;
  params: string[];
}

export interface DstResultPayload {
  dialogue_status: "in_progress" | "complete";
  intent: string;
  state: Record<string, string>;
  sql: SqlPayload;
  followup: string | null;
}

export interface MessageResponse {
  reply: string;
  action: string;
  verdict: string;
  result: DstResultPayload | null;
}

export interface FillView {
  value: string;
  source: string;
  turn_no: number;
}

export interface StateView {
  session_id: string;
  active_intent: string | null;
  pending: string;
  turn_no: number;
  fills: Record<string, FillView>;
  history: unknown[];
  missing_mandatory: string[];
}

export interface TranscriptEntry {
  speaker: "user" | "system";
  text: string;
}

export class ApiError extends Error {
  code: string;

  constructor(code: string, message: string) {
    super(message);
    this.code = code;
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    const err = body?.error;
    throw new ApiError(err?.code ?? `http_${response.status}`,
                       err?.message ?? response.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<void> {
    await unwrap(await fetch(this.url("/healthz")));
  }

  async createSession(): Promise<string> {
    const body = await unwrap<{ session_id: string }>(
      await fetch(this.url("/v1/sessions"), { method: "POST" }));
    return body.session_id;
  }

  async sendMessage(sessionId: string, text: string): Promise<MessageResponse> {
    return unwrap(await fetch(this.url(`/v1/sessions/${sessionId}/messages`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    }));
  }

  async getState(sessionId: string): Promise<StateView> {
    return unwrap(await fetch(this.url(`/v1/sessions/${sessionId}/state`)));
  }

  async getTranscript(sessionId: string): Promise<TranscriptEntry[]> {
    const body = await unwrap<{ transcript: TranscriptEntry[] }>(
      await fetch(this.url(`/v1/sessions/${sessionId}/transcript`)));
    return body.transcript;
  }
}
