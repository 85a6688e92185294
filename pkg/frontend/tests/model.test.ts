import { describe, expect, it } from "vitest";

import {
  applyEvent,
  applyVerdict,
  enabledControls,
  graphFromSnapshot,
  initialView,
  layoutGraph,
  reconcileGraph,
  replay,
} from "../src/model";
import type { SessionEvent } from "../src/types";

const dogWhistleEvents: SessionEvent[] = [
  { seq: 0, type: "verdict", verdict: "clear", chain: [] },
  { seq: 1, type: "graph", event: "node", id: "c1", name: "tweet_text", description: "Tweet text" },
  { seq: 2, type: "stage", stage: "table_generation", status: "entered", detail: "" },
  { seq: 3, type: "graph", event: "node", id: "c2", name: "dog_whistle", description: "term" },
  {
    seq: 4, type: "graph", event: "edge", inputs: ["c1"], output: "c2",
    function: "dog_whistle_extractor", kind: "execute",
  },
  { seq: 5, type: "stage", stage: "table_generation", status: "ok", detail: "" },
  { seq: 6, type: "graph", event: "node", id: "c3", name: "persona_or_ingroup", description: "p" },
  {
    seq: 7, type: "graph", event: "edge", inputs: ["c2"], output: "c3",
    function: "persona_ingroup_identifier", kind: "execute",
  },
  { seq: 8, type: "code", sql: "SELECT 1 FROM table" },
];

describe("view model", () => {
  it("is a pure function of the event log", () => {
    const first = replay(dogWhistleEvents);
    const second = replay(dogWhistleEvents);
    expect(second).toEqual(first);
  });

  it("drops duplicate events on reconnect replays", () => {
    const once = replay(dogWhistleEvents);
    const twice = replay([...dogWhistleEvents, ...dogWhistleEvents]);
    expect(twice).toEqual(once);
  });

  it("tracks stages, graph, and sql", () => {
    const view = replay(dogWhistleEvents);
    expect(view.stages.map((s) => s.status)).toEqual(["entered", "ok"]);
    expect(view.graph.nodes.map((n) => n.name)).toEqual([
      "tweet_text", "dog_whistle", "persona_or_ingroup",
    ]);
    expect(view.graph.edges).toHaveLength(2);
    expect(view.sql).toBe("SELECT 1 FROM table");
  });

  it("computes derivation depth for the layered layout", () => {
    const view = replay(dogWhistleEvents);
    const placed = layoutGraph(view.graph);
    const byName = new Map(placed.map((n) => [n.name, n]));
    expect(byName.get("tweet_text")!.x).toBe(0);
    expect(byName.get("dog_whistle")!.x).toBe(1);
    expect(byName.get("persona_or_ingroup")!.x).toBe(2);
  });

  it("marks aborted sessions with feedback", () => {
    const view = replay([
      { seq: 0, type: "stage", stage: "aborted", status: "error", detail: "gave up" },
    ]);
    expect(view.status).toBe("aborted");
    expect(view.feedback).toBe("gave up");
  });

  it("flags malformed verdict payloads without touching the session", () => {
    const before = initialView();
    const after = applyVerdict(before, "running", {} as never);
    expect(after.error).toMatch(/malformed/);
    expect(after.verdict).toBeNull();
  });
});

describe("decision controls mirror the 409 contract", () => {
  it("disables everything outside awaiting_decision", () => {
    let view = applyVerdict(initialView(), "running", { verdict: "clear" });
    expect(enabledControls(view)).toEqual([]);
    view = applyVerdict(initialView(), "done", { verdict: "clear" });
    expect(enabledControls(view)).toEqual([]);
  });

  it("clear verdicts expose no controls", () => {
    const view = applyVerdict(initialView(), "awaiting_decision", { verdict: "clear" });
    expect(enabledControls(view)).toEqual([]);
  });

  it("warnings expose proceed and respecify", () => {
    const view = applyVerdict(initialView(), "awaiting_decision", {
      verdict: "numeric_underspecified",
      warning: "w",
      placeholders: ["x"],
      confirmed: false,
    });
    expect(enabledControls(view)).toEqual(["proceed", "respecify"]);
  });

  it("vague verdicts expose only choose_alternative", () => {
    const view = applyVerdict(initialView(), "awaiting_decision", {
      verdict: "vague",
      reason: "data-insufficiency",
      alternatives: ["a", "b"],
    });
    expect(enabledControls(view)).toEqual(["choose_alternative"]);
  });
});

describe("graph snapshot reconciliation", () => {
  const snapshot = {
    nodes: [
      { id: "c1", name: "a", description: "" },
      { id: "c2", name: "b", description: "" },
    ],
    edges: [{ inputs: ["c1"], output: "c2", function: "f", kind: "execute" as const }],
    seq: 3,
  };

  it("builds depths from a snapshot", () => {
    const graph = graphFromSnapshot(snapshot);
    expect(graph.nodes.find((n) => n.id === "c2")!.depth).toBe(1);
    expect(graph.seq).toBe(3);
  });

  it("adopts fresher snapshots and ignores stale ones", () => {
    let view = replay(dogWhistleEvents);
    const richer = view.graph.seq;
    view = reconcileGraph(view, { ...snapshot, seq: richer + 5 });
    expect(view.graph.seq).toBe(richer + 5);
    const unchanged = reconcileGraph(view, { ...snapshot, seq: 0 });
    expect(unchanged.graph.seq).toBe(richer + 5);
  });
});

describe("event folding edge cases", () => {
  it("ignores unknown event types", () => {
    const view = applyEvent(initialView(), { seq: 0, type: "mystery" });
    expect(view.stages).toEqual([]);
  });
});
