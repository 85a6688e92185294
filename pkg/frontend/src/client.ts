// Typed client for the session service. All engine state changes go
// through createSession/postDecision; everything else is read-only.

import { SseParser } from "./sse";
import type {
  CostReport,
  Decision,
  GraphSnapshot,
  ResultResponse,
  SessionEvent,
  VerdictResponse,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(query: string, data: string, description: string | Record<string, string>) {
    return this.request<{ id: string; status: string; verdict: VerdictResponse["verdict"] }>(
      "/sessions",
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ query, data, description }),
      },
    );
  }

  getVerdict(sessionId: string) {
    return this.request<VerdictResponse>(`/sessions/${sessionId}/verdict`);
  }

  postDecision(sessionId: string, decision: Decision) {
    return this.request<VerdictResponse>(`/sessions/${sessionId}/decision`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(decision),
    });
  }

  getGraph(sessionId: string) {
    return this.request<GraphSnapshot>(`/sessions/${sessionId}/graph`);
  }

  getResult(sessionId: string) {
    return this.request<ResultResponse>(`/sessions/${sessionId}/result`);
  }

  getCosts(sessionId: string) {
    return this.request<CostReport>(`/sessions/${sessionId}/costs`);
  }

  /**
   * Consume the session's server-sent events from a sequence number.
   * Resolves with the final status once the stream ends; the caller
   * reconnects (with a fresh snapshot refetch) if the stream drops early.
   */
  async streamEvents(
    sessionId: string,
    since: number,
    onEvent: (event: SessionEvent) => void,
    signal?: AbortSignal,
  ): Promise<string> {
    const response = await this.fetchFn(
      `${this.baseUrl}/sessions/${sessionId}/events?since=${since}`,
      { signal },
    );
    if (!response.ok || !response.body) {
      throw new ApiError(response.status, "event stream unavailable");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    let finalStatus = "dropped";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const message of parser.push(decoder.decode(value, { stream: true }))) {
          if (message.event === "end") {
            finalStatus = (JSON.parse(message.data) as { status: string }).status;
          } else {
            onEvent(JSON.parse(message.data) as SessionEvent);
          }
        }
      }
    } catch (error) {
      if (signal?.aborted) {
        return "closed";
      }
      throw error;
    }
    if (signal?.aborted) {
      return "closed";
    }
    return finalStatus;
  }
}
