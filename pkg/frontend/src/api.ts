// Thin typed client over the service's response envelope.
//
// Every endpoint returns {ok, data, error}; errors become ApiError with the
// HTTP status and the service's error code, so callers can branch on
// err.code ("invalid_transition", "unknown_call", ...) instead of parsing
// message text.

import type {
  BankRecord,
  Breakpoint,
  ChatResult,
  Envelope,
  EventLog,
  PausedCall,
  PromptVersion,
  TimingReport,
  TopologyReport,
  TraceGraph,
  TraceListing,
  VersionTree,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: Record<string, unknown>;

  constructor(status: number, code: string, message: string, detail: Record<string, unknown> = {}) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
    this.detail = detail;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ApiOptions {
  baseUrl?: string;
  fetchImpl?: FetchLike;
}

export class Api {
  readonly baseUrl: string;
  private readonly doFetch: FetchLike;

  constructor(opts: ApiOptions = {}) {
    this.baseUrl = (opts.baseUrl ?? "").replace(/\/$/, "");
    this.doFetch = opts.fetchImpl ?? ((input, init) => fetch(input, init));
  }

  url(path: string, params?: Record<string, string | number | undefined>): string {
    const qs = Object.entries(params ?? {})
      .filter(([, v]) => v !== undefined)
      .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(String(v))}`)
      .join("&");
    return this.baseUrl + path + (qs ? `?${qs}` : "");
  }

  private async request<T>(method: string, path: string, body?: unknown,
                           params?: Record<string, string | number | undefined>): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.doFetch(this.url(path, params), init);
    let envelope: Envelope<T>;
    try {
      envelope = (await resp.json()) as Envelope<T>;
    } catch {
      throw new ApiError(resp.status, "bad_response", `non-JSON response from ${path}`);
    }
    if (!envelope.ok || envelope.data === null) {
      const err = envelope.error ?? { code: "unknown", message: "no error detail" };
      const { code, message, ...rest } = err;
      throw new ApiError(resp.status, code, message, rest);
    }
    return envelope.data;
  }

  private get<T>(path: string, params?: Record<string, string | number | undefined>): Promise<T> {
    return this.request<T>("GET", path, undefined, params);
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>("POST", path, body);
  }

  // -- runtime ------------------------------------------------------------

  health(): Promise<{ service: string; nodes: number }> {
    return this.get("/health");
  }

  topology(): Promise<TopologyReport> {
    return this.get("/mas/topology");
  }

  chat(query: string, opts: { agent?: string; group_id?: string } = {}): Promise<ChatResult> {
    return this.post("/chat", { query, ...opts });
  }

  chatStart(query: string, opts: { agent?: string; group_id?: string } = {}):
      Promise<{ trace_id: string; version_id: string }> {
    return this.post("/chat/start", { query, ...opts });
  }

  // -- traces ---------------------------------------------------------------

  traces(): Promise<{ traces: TraceListing[] }> {
    return this.get("/traces");
  }

  versionTree(traceId: string): Promise<VersionTree> {
    return this.get(`/traces/${traceId}`);
  }

  eventlog(traceId: string, version?: string, fromSeq?: number): Promise<EventLog> {
    return this.get(`/traces/${traceId}/eventlog`, { version, from_seq: fromSeq });
  }

  graph(traceId: string, version?: string): Promise<TraceGraph> {
    return this.get(`/traces/${traceId}/graph`, { version });
  }

  timing(traceId: string, version?: string): Promise<TimingReport> {
    return this.get(`/traces/${traceId}/timing`, { version });
  }

  dot(traceId: string, version?: string): Promise<{ version_id: string; dot: string }> {
    return this.get(`/traces/${traceId}/dot`, { version });
  }

  regenerate(traceId: string, callId: string, body: {
    version_id?: string;
    overrides?: Record<string, unknown>;
    wait?: boolean;
  } = {}): Promise<ChatResult & { new_version_id: string }> {
    return this.post(`/traces/${traceId}/nodes/${callId}/regenerate`, body);
  }

  // -- breakpoints ------------------------------------------------------------

  breakpoints(): Promise<{ breakpoints: Breakpoint[]; paused: PausedCall[] }> {
    return this.get("/runtime/breakpoints");
  }

  addBreakpoint(node: string, stage?: string): Promise<{ bp_id: string }> {
    return this.post("/runtime/breakpoints", { node, stage });
  }

  removeBreakpoint(bpId: string): Promise<{ removed: boolean }> {
    return this.request("DELETE", `/runtime/breakpoints/${bpId}`);
  }

  resume(callId: string, overrides?: Record<string, unknown>):
      Promise<{ resumed: boolean; call_id: string }> {
    return this.post("/runtime/resume", { call_id: callId, overrides });
  }

  // -- bank ---------------------------------------------------------------------

  bankRecords(filter: { state?: string; priority?: string } = {}): Promise<{ records: BankRecord[] }> {
    return this.get("/bank/records", filter);
  }

  bankRecord(recordId: string): Promise<BankRecord> {
    return this.get(`/bank/records/${recordId}`);
  }

  deposit(traceId: string, versionId?: string): Promise<BankRecord> {
    return this.post("/bank/records", { trace_id: traceId, version_id: versionId });
  }

  annotate(recordId: string, payload: Record<string, unknown>): Promise<BankRecord> {
    return this.post(`/bank/records/${recordId}/annotate`, { payload });
  }

  audit(recordId: string, verdict: "approve" | "reject", note?: string): Promise<BankRecord> {
    return this.post(`/bank/records/${recordId}/audit`, { verdict, note });
  }

  reopen(recordId: string, note?: string): Promise<BankRecord> {
    return this.post(`/bank/records/${recordId}/reopen`, { note });
  }

  exportKnowledge(filter: { priority?: string; template?: string; since?: number } = {}):
      Promise<{ count: number; samples: Record<string, unknown>[] }> {
    return this.get("/bank/export", filter);
  }

  // -- prompts --------------------------------------------------------------------

  prompts(agent: string): Promise<{ agent: string; active: string; versions: PromptVersion[] }> {
    return this.get(`/agents/${agent}/prompts`);
  }

  optimizePrompt(agent: string, binding?: string): Promise<PromptVersion> {
    return this.post(`/agents/${agent}/optimize-prompt`, binding ? { binding } : {});
  }

  applyPrompt(agent: string, version: string): Promise<unknown> {
    return this.post(`/agents/${agent}/apply-prompt`, { version });
  }
}
