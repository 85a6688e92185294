// Wires the client, the view model, and the renderer into a live session
// console. The view model is the single source of truth; every server
// message folds into it and the DOM re-renders.

import { ApiClient, ApiError } from "./client";
import {
  applyEvent,
  applyVerdict,
  initialView,
  reconcileGraph,
  type SessionView,
} from "./model";
import { render } from "./render";
import type { Decision, SessionStatus } from "./types";

export class SessionConsole {
  private view: SessionView = initialView();
  private streaming = false;
  private aborter = new AbortController();

  constructor(
    private client: ApiClient,
    private container: HTMLElement,
  ) {}

  current(): SessionView {
    return this.view;
  }

  /** Disconnect from the event stream (e.g. when the view closes). */
  stop(): void {
    this.aborter.abort();
  }

  private update(mutate: (view: SessionView) => SessionView): void {
    this.view = mutate(this.view);
    render(this.container, this.view, {
      onDecision: (decision) => void this.decide(decision),
    });
  }

  async start(query: string, data: string, description: string | Record<string, string>) {
    const created = await this.client.createSession(query, data, description);
    this.update((view) => ({
      ...applyVerdict(view, created.status as SessionStatus, created.verdict),
      sessionId: created.id,
    }));
    this.follow().catch((error) =>
      this.update((view) => ({ ...view, error: String(error) })),
    );
    return created.id;
  }

  async decide(decision: Decision): Promise<void> {
    const sessionId = this.view.sessionId;
    if (!sessionId) return;
    try {
      const response = await this.client.postDecision(sessionId, decision);
      this.update((view) => applyVerdict(view, response.status, response.verdict));
    } catch (error) {
      if (error instanceof ApiError) {
        this.update((view) => ({ ...view, error: error.message }));
        return;
      }
      throw error;
    }
  }

  /** Follow the event stream to completion, reconnecting on drops. */
  async follow(): Promise<void> {
    const sessionId = this.view.sessionId;
    if (!sessionId || this.streaming) return;
    this.streaming = true;
    try {
      for (;;) {
        const status = await this.client.streamEvents(
          sessionId,
          this.view.lastSeq + 1,
          (event) => this.update((view) => applyEvent(view, event)),
          this.aborter.signal,
        );
        if (status === "closed") {
          return;
        }
        if (status === "done" || status === "aborted") {
          await this.finish(status);
          return;
        }
        // dropped mid-session: refetch the snapshot, reconcile, resubscribe
        const snapshot = await this.client.getGraph(sessionId);
        this.update((view) => reconcileGraph(view, snapshot));
        const verdict = await this.client.getVerdict(sessionId);
        this.update((view) => applyVerdict(view, verdict.status, verdict.verdict));
        if (verdict.status === "awaiting_decision") {
          // keep streaming; decisions arrive through the UI
        }
      }
    } finally {
      this.streaming = false;
    }
  }

  private async finish(status: string): Promise<void> {
    const sessionId = this.view.sessionId;
    if (!sessionId) return;
    const [result, costs, graph] = await Promise.all([
      this.client.getResult(sessionId),
      this.client.getCosts(sessionId),
      this.client.getGraph(sessionId),
    ]);
    this.update((view) => {
      let next = reconcileGraph(view, graph);
      next = { ...next, status: status as SessionStatus, costs };
      if (result.status === "done" && result.result) {
        next = { ...next, result: result.result };
      } else if (result.status === "aborted") {
        next = { ...next, feedback: result.feedback ?? "aborted" };
      }
      return next;
    });
  }
}

export function mount(root: HTMLElement, baseUrl: string): void {
  const form = root.querySelector("form");
  const panel = root.querySelector<HTMLElement>(".session-panel");
  if (!form || !panel) {
    throw new Error("missing .session-panel or form in the mount root");
  }
  const console_ = new SessionConsole(new ApiClient(baseUrl), panel);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const query = (form.querySelector<HTMLInputElement>("[name=query]") ?? { value: "" }).value;
    const data = (form.querySelector<HTMLInputElement>("[name=data]") ?? { value: "" }).value;
    const description = (
      form.querySelector<HTMLInputElement>("[name=description]") ?? { value: "" }
    ).value;
    if (query && data && description) {
      void console_.start(query, data, description);
    }
  });
}
