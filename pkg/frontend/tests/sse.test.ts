import { describe, expect, it } from "vitest";

import { streamTrace, streamUrl } from "../src/sse.js";
import type { EventLog, TraceEvent } from "../src/types.js";
import { FakeEventSource, fixture } from "./helpers.js";

const LOG = fixture<EventLog>("eventlog");

describe("streamUrl", () => {
  it("builds the events url with optional resume parameters", () => {
    expect(streamUrl("", "t-1")).toBe("/traces/t-1/events");
    expect(streamUrl("http://x/", "t-1")).toBe("http://x/traces/t-1/events");
    expect(streamUrl("", "t-1", { version: "v2" })).toBe("/traces/t-1/events?version=v2");
    expect(streamUrl("", "t-1", { fromSeq: 0 })).toBe("/traces/t-1/events?from_seq=0");
    expect(streamUrl("", "t-1", { version: "v1", fromSeq: 12 }))
      .toBe("/traces/t-1/events?version=v1&from_seq=12");
  });
});

describe("streamTrace", () => {
  const open = (onEvent: (ev: TraceEvent) => void, extra: {
    onSealed?: (info: { trace_id: string; version_id: string }) => void;
    onError?: () => void;
  } = {}, opts: { version?: string; fromSeq?: number } = {}) => {
    let source!: FakeEventSource;
    const close = streamTrace("", LOG.trace_id, { onEvent, ...extra }, {
      ...opts,
      source: (url) => (source = new FakeEventSource(url)),
    });
    return { source, close };
  };

  it("parses trace frames in arrival order", () => {
    const seen: TraceEvent[] = [];
    const { source } = open((ev) => seen.push(ev));
    for (const ev of LOG.events.slice(0, 7)) source.emit("trace", ev);
    expect(seen).toEqual(LOG.events.slice(0, 7));
  });

  it("passes resume parameters into the subscription url", () => {
    const { source } = open(() => {}, {}, { version: "v1", fromSeq: 42 });
    expect(source.url).toBe(`/traces/${LOG.trace_id}/events?version=v1&from_seq=42`);
  });

  it("closes itself on sealed, then reports the seal", () => {
    const order: string[] = [];
    const { source } = open(
      () => order.push("event"),
      { onSealed: (info) => order.push(`sealed:${info.version_id}:closed=${source.closed}`) },
    );
    source.emit("trace", LOG.events[0]);
    source.emit("sealed", { trace_id: LOG.trace_id, version_id: LOG.version_id });
    expect(order).toEqual(["event", `sealed:${LOG.version_id}:closed=true`]);
    // nothing after the seal is delivered
    source.emit("trace", LOG.events[1]);
    expect(order.length).toBe(2);
  });

  it("returned closer shuts the source", () => {
    const seen: TraceEvent[] = [];
    const { source, close } = open((ev) => seen.push(ev));
    close();
    expect(source.closed).toBe(true);
    source.emit("trace", LOG.events[0]);
    expect(seen).toEqual([]);
  });

  it("routes transport errors to onError", () => {
    let errors = 0;
    const { source } = open(() => {}, { onError: () => errors++ });
    source.error();
    expect(errors).toBe(1);
  });
});
