// Session view model: a pure fold over (API snapshots, event log).
// Replaying the same snapshots and events always reproduces the same view,
// and nothing here talks to the network.

import type {
  CostReport,
  GraphEdgePayload,
  GraphSnapshot,
  ResultPayload,
  SessionEvent,
  SessionStatus,
  VerdictPayload,
} from "./types";

export interface StageEntry {
  stage: string;
  status: "entered" | "ok" | "error";
  detail: string;
}

export interface GraphNodeView {
  id: string;
  name: string;
  description: string;
  depth: number;
}

export interface GraphView {
  nodes: GraphNodeView[];
  edges: GraphEdgePayload[];
  seq: number;
}

export interface SessionView {
  sessionId: string | null;
  status: SessionStatus;
  verdict: VerdictPayload | null;
  stages: StageEntry[];
  graph: GraphView;
  sql: string | null;
  result: ResultPayload | null;
  feedback: string | null;
  costs: CostReport | null;
  error: string | null;
  lastSeq: number;
}

export function initialView(): SessionView {
  return {
    sessionId: null,
    status: "created",
    verdict: null,
    stages: [],
    graph: { nodes: [], edges: [], seq: 0 },
    sql: null,
    result: null,
    feedback: null,
    costs: null,
    error: null,
    lastSeq: -1,
  };
}

function nodeDepth(graph: GraphView, id: string): number {
  const node = graph.nodes.find((n) => n.id === id);
  return node ? node.depth : 0;
}

function addNode(graph: GraphView, id: string, name: string, description: string): GraphView {
  if (graph.nodes.some((n) => n.id === id)) {
    return graph;
  }
  return {
    ...graph,
    nodes: [...graph.nodes, { id, name, description, depth: 0 }],
    seq: graph.seq + 1,
  };
}

function addEdge(graph: GraphView, edge: GraphEdgePayload): GraphView {
  // derivation depth: one past the deepest input, so user columns sit at 0
  const depth = Math.max(...edge.inputs.map((input) => nodeDepth(graph, input)), 0) + 1;
  return {
    ...graph,
    nodes: graph.nodes.map((n) => (n.id === edge.output ? { ...n, depth } : n)),
    edges: [...graph.edges, edge],
    seq: graph.seq + 1,
  };
}

export function graphFromSnapshot(snapshot: GraphSnapshot): GraphView {
  let graph: GraphView = { nodes: [], edges: [], seq: 0 };
  for (const node of snapshot.nodes) {
    graph = addNode(graph, node.id, node.name, node.description);
  }
  for (const edge of snapshot.edges) {
    graph = addEdge(graph, edge);
  }
  return { ...graph, seq: snapshot.seq };
}

/** Reconcile a refetched snapshot: adopt it only when it is not stale. */
export function reconcileGraph(view: SessionView, snapshot: GraphSnapshot): SessionView {
  if (snapshot.seq < view.graph.seq) {
    return view;
  }
  return { ...view, graph: graphFromSnapshot(snapshot) };
}

export function applyVerdict(
  view: SessionView,
  status: SessionStatus,
  verdict: VerdictPayload,
): SessionView {
  if (!verdict || typeof verdict.verdict !== "string") {
    return { ...view, error: "malformed verdict payload" };
  }
  return { ...view, status, verdict, error: null };
}

export function applyEvent(view: SessionView, event: SessionEvent): SessionView {
  if (typeof event.seq === "number") {
    if (event.seq <= view.lastSeq) {
      return view; // replayed duplicate after a reconnect
    }
    view = { ...view, lastSeq: event.seq };
  }
  switch (event.type) {
    case "verdict":
      return applyVerdict(view, view.status, event as unknown as VerdictPayload & SessionEvent);
    case "stage": {
      const entry: StageEntry = {
        stage: String(event.stage),
        status: event.status as StageEntry["status"],
        detail: String(event.detail ?? ""),
      };
      const next = { ...view, stages: [...view.stages, entry] };
      if (entry.stage === "aborted") {
        return { ...next, status: "aborted", feedback: entry.detail };
      }
      return next;
    }
    case "graph": {
      if (event.event === "node") {
        return {
          ...view,
          graph: addNode(
            view.graph,
            String(event.id),
            String(event.name),
            String(event.description ?? ""),
          ),
        };
      }
      return {
        ...view,
        graph: addEdge(view.graph, {
          inputs: event.inputs as string[],
          output: String(event.output),
          function: String(event.function),
          kind: event.kind as GraphEdgePayload["kind"],
          mechanism: event.mechanism as string | undefined,
        }),
      };
    }
    case "code":
      return { ...view, sql: String(event.sql) };
    case "decision":
      return view;
    case "divergence":
      return view;
    case "result":
      return view; // the grid is filled from GET /result
    default:
      return view;
  }
}

export function replay(events: SessionEvent[], base?: SessionView): SessionView {
  let view = base ?? initialView();
  for (const event of events) {
    view = applyEvent(view, event);
  }
  return view;
}

export type DecisionControl = "proceed" | "respecify" | "choose_alternative";

/**
 * Which decision controls are live. Mirrors the service's 409 contract:
 * anything not listed here would be rejected by the decision endpoint.
 */
export function enabledControls(view: SessionView): DecisionControl[] {
  if (view.status !== "awaiting_decision" || view.verdict === null) {
    return [];
  }
  if (view.verdict.verdict === "numeric_underspecified" && !view.verdict.confirmed) {
    return ["proceed", "respecify"];
  }
  if (view.verdict.verdict === "vague") {
    return ["choose_alternative"];
  }
  return [];
}

/** Left-to-right layered layout: x by derivation depth, y by arrival order. */
export function layoutGraph(graph: GraphView): Array<GraphNodeView & { x: number; y: number }> {
  const perDepth = new Map<number, number>();
  return graph.nodes.map((node) => {
    const row = perDepth.get(node.depth) ?? 0;
    perDepth.set(node.depth, row + 1);
    return { ...node, x: node.depth, y: row };
  });
}
