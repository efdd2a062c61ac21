// Typed client for the five experiment-service endpoints.

export interface TrialPayload {
  done: boolean;
  index: number | null;
  total: number;
  left: string | null;
  right: string | null;
}

export interface ResponseAck {
  accepted: boolean;
  index: number;
  done: boolean;
}

export interface LevelSummary {
  level: number;
  trials: number;
  correct: number;
}

export interface SessionSummary {
  id: string;
  observer: string;
  kind: string;
  axis: string;
  total: number;
  completed: number;
  done: boolean;
  levels: LevelSummary[];
}

export interface SessionCreated {
  id: string;
  observer: string;
  total: number;
}

export type Choice = "left" | "right";

export interface RespondOutcome {
  status: number;
  ack: ResponseAck | null;
  detail: string | null;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(readonly base: string = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.base + path);
    if (!res.ok) {
      throw new ApiError(`GET ${path} failed (${res.status})`, res.status);
    }
    return (await res.json()) as T;
  }

  async createSession(body: {
    observer: string;
    seed?: number;
    experiment?: string;
    plan?: unknown;
  }): Promise<SessionCreated> {
    const res = await this.fetchFn(this.base + "/api/session", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      const detail = await res.text();
      throw new ApiError(`session creation failed: ${detail}`, res.status);
    }
    return (await res.json()) as SessionCreated;
  }

  trial(sessionId: string): Promise<TrialPayload> {
    return this.getJson(`/api/session/${sessionId}/trial`);
  }

  summary(sessionId: string): Promise<SessionSummary> {
    return this.getJson(`/api/session/${sessionId}/summary`);
  }

  // 409 (stale index) is an expected outcome, not an exception
  async respond(sessionId: string, index: number, choice: Choice): Promise<RespondOutcome> {
    const res = await this.fetchFn(`${this.base}/api/session/${sessionId}/response`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ index, choice }),
    });
    if (res.ok) {
      return { status: res.status, ack: (await res.json()) as ResponseAck, detail: null };
    }
    let detail: string | null = null;
    try {
      const body = (await res.json()) as { detail?: string };
      detail = body.detail ?? null;
    } catch {
      detail = null;
    }
    if (res.status === 409) {
      return { status: 409, ack: null, detail };
    }
    throw new ApiError(detail ?? `response submission failed (${res.status})`, res.status);
  }

  stimulusUrl(key: string): string {
    return `${this.base}/api/stimulus/${key}`;
  }
}
