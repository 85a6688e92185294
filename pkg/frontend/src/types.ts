// Payload shapes of the session service API.

export type VerdictKind = "clear" | "numeric_underspecified" | "vague";

export interface ChainCall {
  function: string;
  bindings: Array<{ param: string; column?: string; call?: number }>;
  output: string;
}

export interface VerdictPayload {
  verdict: VerdictKind;
  chain?: ChainCall[];
  warning?: string;
  placeholders?: string[];
  confirmed?: boolean;
  reason?: string;
  alternatives?: string[];
}

export type SessionStatus =
  | "created"
  | "awaiting_decision"
  | "running"
  | "done"
  | "aborted";

export interface VerdictResponse {
  status: SessionStatus;
  verdict: VerdictPayload;
}

export interface SessionEvent {
  seq: number;
  type: string;
  [key: string]: unknown;
}

export interface GraphNodePayload {
  id: string;
  name: string;
  description: string;
}

export interface GraphEdgePayload {
  inputs: string[];
  output: string;
  function: string;
  kind: "execute" | "alias";
  mechanism?: string;
}

export interface GraphSnapshot {
  nodes: GraphNodePayload[];
  edges: GraphEdgePayload[];
  seq: number;
}

export interface ResultPayload {
  columns: Array<{ name: string; kind: string }>;
  rows: Array<Array<string | number | boolean | null>>;
  scalar?: string | number | boolean | null;
  metadata: {
    sql: string;
    placeholder_resolutions: Record<string, { value: number; note: string }>;
  };
}

export interface ResultResponse {
  status: "done" | "aborted" | "vague";
  result?: ResultPayload;
  feedback?: string;
  alternatives?: string[];
}

export interface CostReport {
  stages: Array<{
    stage: string;
    requests: number;
    prompt_tokens: number;
    completion_tokens: number;
    dollars: number;
  }>;
  total: { prompt_tokens: number; completion_tokens: number; dollars: number };
}

export type Decision =
  | { action: "proceed" }
  | { action: "respecify"; query: string }
  | { action: "choose_alternative"; index: number };
