// Shared test plumbing: fixture loading, a scriptable EventSource, and a
// route-table fetch stub. Fixtures under tests/fixtures/ are verbatim JSON
// captured from a live service session, so the suite asserts against real
// payload shapes rather than hand-typed approximations.

import { readFileSync } from "node:fs";
import { join } from "node:path";

import type { EventSourceLike } from "../src/sse.js";
import type { Envelope } from "../src/types.js";

// vitest runs with the package root as cwd
export function fixture<T>(name: string): T {
  const path = join(process.cwd(), "tests", "fixtures", `${name}.json`);
  return JSON.parse(readFileSync(path, "utf8")) as T;
}

export function ok<T>(data: T): Envelope<T> {
  return { ok: true, data, error: null };
}

export function fail(code: string, message: string): Envelope<never> {
  return { ok: false, data: null, error: { code, message } };
}

export class FakeEventSource implements EventSourceLike {
  closed = false;
  onerror: ((ev: unknown) => void) | null = null;
  private listeners = new Map<string, Array<(ev: MessageEvent) => void>>();

  constructor(readonly url: string) {}

  addEventListener(type: string, listener: (ev: MessageEvent) => void): void {
    const all = this.listeners.get(type) ?? [];
    all.push(listener);
    this.listeners.set(type, all);
  }

  close(): void {
    this.closed = true;
  }

  /** Deliver one server-sent frame of the given event type. */
  emit(type: string, payload: unknown): void {
    if (this.closed) return;
    for (const fn of this.listeners.get(type) ?? []) {
      fn({ data: JSON.stringify(payload) } as MessageEvent);
    }
  }

  error(): void {
    this.onerror?.({ type: "error" });
  }
}

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
}

export interface StubReply {
  status?: number;
  body: unknown;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * Build a fetch replacement from a handler. The handler sees every request
 * (method, full url, parsed JSON body) and returns the reply to serve;
 * returning undefined yields a 404 envelope. All requests are recorded for
 * later assertions on paths and bodies.
 */
export function stubFetch(handler: (call: RecordedCall) => StubReply | undefined): {
  fetchImpl: FetchLike;
  calls: RecordedCall[];
} {
  const calls: RecordedCall[] = [];
  const fetchImpl: FetchLike = (input, init) => {
    const call: RecordedCall = {
      method: init?.method ?? "GET",
      url: input,
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    };
    calls.push(call);
    const reply = handler(call) ?? { status: 404, body: fail("not_found", `no stub for ${input}`) };
    const response = new Response(JSON.stringify(reply.body), {
      status: reply.status ?? 200,
      headers: { "content-type": "application/json" },
    });
    return Promise.resolve(response);
  };
  return { fetchImpl, calls };
}
