// SSE subscription for /traces/{id}/events.
//
// Frames arrive as `event: trace` with the event JSON, then one
// `event: sealed`. The stream is resumable: pass fromSeq to skip what you
// already have. EventSource is injectable so tests can drive the handlers
// without a network.

import type { TraceEvent } from "./types.js";

export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent) => void): void;
  close(): void;
  onerror: ((ev: unknown) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface StreamHandlers {
  onEvent: (ev: TraceEvent) => void;
  onSealed?: (info: { trace_id: string; version_id: string }) => void;
  onError?: () => void;
}

export interface StreamOptions {
  version?: string;
  fromSeq?: number;
  source?: EventSourceFactory;
}

export function streamUrl(baseUrl: string, traceId: string, opts: StreamOptions = {}): string {
  const params = new URLSearchParams();
  if (opts.version) params.set("version", opts.version);
  if (opts.fromSeq !== undefined) params.set("from_seq", String(opts.fromSeq));
  const qs = params.toString();
  return `${baseUrl.replace(/\/$/, "")}/traces/${traceId}/events${qs ? `?${qs}` : ""}`;
}

/** Subscribe; returns a close function. Closes itself on `sealed`. */
export function streamTrace(
  baseUrl: string,
  traceId: string,
  handlers: StreamHandlers,
  opts: StreamOptions = {},
): () => void {
  const factory = opts.source ?? ((url: string) => new EventSource(url) as EventSourceLike);
  const es = factory(streamUrl(baseUrl, traceId, opts));

  es.addEventListener("trace", (msg) => {
    handlers.onEvent(JSON.parse(msg.data as string) as TraceEvent);
  });
  es.addEventListener("sealed", (msg) => {
    es.close();
    if (handlers.onSealed) {
      handlers.onSealed(JSON.parse(msg.data as string) as { trace_id: string; version_id: string });
    }
  });
  es.onerror = () => {
    if (handlers.onError) handlers.onError();
  };
  return () => es.close();
}
