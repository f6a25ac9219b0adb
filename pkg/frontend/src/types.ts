// Payload shapes as the HTTP service returns them. These mirror the JSON
// exactly (snake_case and all) so fixtures captured from a live run
// typecheck without any mapping layer.

export interface Envelope<T> {
  ok: boolean;
  data: T | null;
  error: { code: string; message: string; [k: string]: unknown } | null;
}

export type Stage =
  | "pre_process"
  | "pre_save_data"
  | "execute"
  | "post_process"
  | "format_output";

export interface TraceEvent {
  trace_id: string;
  seq: number;
  ts_ms: number;
  call_id: string;
  parent_call_id: string | null;
  node: string;
  kind: string;
  stage: Stage;
  phase: "before" | "after";
  status: string;
  payload: Record<string, unknown> | null;
  annotations: unknown[];
}

export interface EventLog {
  trace_id: string;
  version_id: string;
  sealed: boolean;
  events: TraceEvent[];
}

export interface GraphCall {
  call_id: string;
  parent_call_id: string | null;
  name: string;
  kind: string;
  status: string;
  begin_ms: number | null;
  end_ms: number | null;
  duration_ms: number | null;
  children: GraphCall[];
}

export interface TraceGraph {
  trace_id: string;
  version_id: string;
  sealed: boolean;
  roots: GraphCall[];
  normalized: unknown;
  checksum: string;
}

export interface TimingRow {
  call_id: string;
  name: string;
  kind: string;
  total_ms: number;
  self_ms: number;
  llm_ms: number;
  tool_ms: number;
  agent_ms: number;
}

export interface TimingReport {
  trace_id: string;
  version_id: string;
  calls: TimingRow[];
}

export interface TraceListing {
  trace_id: string;
  created_ms: number;
  group_id: string | null;
  meta: Record<string, unknown>;
  versions: string[];
}

export interface VersionInfo {
  parent: string | null;
  created_ms: number;
  sealed: boolean;
  seal_ms: number | null;
  meta: { origin?: string; [k: string]: unknown };
}

export interface VersionTree {
  trace_id: string;
  created_ms: number;
  group_id: string | null;
  meta: Record<string, unknown>;
  versions: Record<string, VersionInfo>;
}

export interface TopologyNode {
  name: string;
  kind: string;
  description: string;
  permitted_callees: string[];
  model: string | null;
}

export interface TopologyReport {
  entrypoint: string | null;
  nodes: TopologyNode[];
  permission_edges: [string, string][];
  binding_edges: [string, string][];
  issues: { severity: string; subject: string; kind: string; detail: string }[];
}

export interface ChatResult {
  trace_id: string;
  version_id: string;
  status: string;
  answer: unknown;
  output: unknown;
  error_detail: string | null;
  duration_ms: number;
  timing: Record<string, number>;
}

export type ReviewState = "pending" | "annotated" | "rejected" | "approved";

export interface BankRecord {
  record_id: string;
  trace_id: string;
  version_id: string;
  state: ReviewState;
  priority: string;
  template: string;
  occurrence_count: number;
  annotation: Record<string, unknown> | null;
  projection: Record<string, unknown>;
  digest: string;
  audit: Record<string, unknown>[];
  created_ms: number;
  updated_ms: number;
  approved_ms: number | null;
}

export interface Breakpoint {
  bp_id: string;
  node: string;
  stage: Stage;
}

export interface PausedCall {
  pause_id: string;
  call_id: string;
  trace_id: string;
  node: string;
  stage: Stage;
  [k: string]: unknown;
}

export interface PromptVersion {
  version: string;
  text: string;
  applied: boolean;
  created_ms: number;
  source: Record<string, unknown>;
}
