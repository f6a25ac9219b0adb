// Pure trace folding. The playback slider, the live view, and the node
// panel all read from a PlaybackFrame; a frame is a function of the event
// prefix and nothing else, which is what makes scrubbing trustworthy: the
// view at cursor k is byte-for-byte the view you would have had if the run
// had stopped after k events.

import type { TraceEvent } from "./types.js";

export type NodeVisual = "idle" | "running" | "ok" | "error";

export interface CallState {
  callId: string;
  parent: string | null;
  node: string;
  kind: string;
  // last (stage, phase, status) seen for the call
  stage: string;
  phase: string;
  status: string;
  done: boolean;
  children: string[];
}

export interface PlaybackFrame {
  cursor: number;
  calls: Map<string, CallState>;
  order: string[];          // call ids, first appearance
  highlights: string[];     // node names in execute-begin order
  answer: unknown;          // root output once format_output/after lands
}

export function emptyFrame(): PlaybackFrame {
  return { cursor: 0, calls: new Map(), order: [], highlights: [], answer: undefined };
}

export function applyEvent(frame: PlaybackFrame, ev: TraceEvent): void {
  let call = frame.calls.get(ev.call_id);
  if (!call) {
    call = {
      callId: ev.call_id,
      parent: ev.parent_call_id,
      node: ev.node,
      kind: ev.kind,
      stage: ev.stage,
      phase: ev.phase,
      status: ev.status,
      done: false,
      children: [],
    };
    frame.calls.set(ev.call_id, call);
    frame.order.push(ev.call_id);
    if (ev.parent_call_id) {
      frame.calls.get(ev.parent_call_id)?.children.push(ev.call_id);
    }
  }
  call.stage = ev.stage;
  call.phase = ev.phase;
  call.status = ev.status;
  if (ev.stage === "execute" && ev.phase === "before") {
    frame.highlights.push(ev.node);
  }
  if (ev.stage === "format_output" && ev.phase === "after") {
    call.done = true;
    if (!call.parent) {
      frame.answer = (ev.payload as { output?: unknown } | null)?.output;
    }
  }
  frame.cursor += 1;
}

/** Fold the first `cursor` events (all of them when omitted). */
export function renderPrefix(events: TraceEvent[], cursor?: number): PlaybackFrame {
  const upto = cursor === undefined ? events.length : Math.max(0, Math.min(cursor, events.length));
  const frame = emptyFrame();
  for (let i = 0; i < upto; i++) applyEvent(frame, events[i]);
  return frame;
}

/**
 * Visual state per registry node. A node with any unfinished call is
 * running; otherwise it shows the worst finished status (error > ok);
 * nodes the prefix never touched are absent (the view renders them idle).
 */
export function nodeVisuals(frame: PlaybackFrame): Map<string, NodeVisual> {
  const visuals = new Map<string, NodeVisual>();
  for (const id of frame.order) {
    const call = frame.calls.get(id)!;
    const current = visuals.get(call.node);
    let next: NodeVisual;
    if (!call.done) {
      next = "running";
    } else {
      next = call.status === "error" ? "error" : "ok";
    }
    if (current === "running" && next === "ok") continue; // a live call wins
    if (current === "error" && next !== "running") continue; // errors stick
    visuals.set(call.node, next);
  }
  return visuals;
}

/** Stable summary used by tests to compare two frames for equality. */
export function frameDigest(frame: PlaybackFrame): string {
  const calls = frame.order.map((id) => {
    const c = frame.calls.get(id)!;
    return [c.callId, c.parent, c.node, c.kind, c.stage, c.phase, c.status, c.done, c.children];
  });
  return JSON.stringify({
    cursor: frame.cursor,
    calls,
    highlights: frame.highlights,
    answer: frame.answer ?? null,
    visuals: [...nodeVisuals(frame).entries()],
  });
}

/**
 * Incremental playback over a growing event list. seek() re-folds from
 * scratch rather than keeping checkpoints: traces are small and correctness
 * is the point (the frame must equal renderPrefix exactly at every cursor).
 */
export class Playback {
  private events: TraceEvent[] = [];
  private frame: PlaybackFrame = emptyFrame();
  private live = true;

  get length(): number {
    return this.events.length;
  }

  get cursor(): number {
    return this.frame.cursor;
  }

  get following(): boolean {
    return this.live;
  }

  current(): PlaybackFrame {
    return this.frame;
  }

  /** Append a streamed event; advances the frame only while following. */
  push(ev: TraceEvent): void {
    this.events.push(ev);
    if (this.live) applyEvent(this.frame, ev);
  }

  reset(events: TraceEvent[]): void {
    this.events = [...events];
    this.frame = renderPrefix(this.events);
    this.live = true;
  }

  seek(cursor: number): PlaybackFrame {
    this.frame = renderPrefix(this.events, cursor);
    this.live = this.frame.cursor === this.events.length;
    return this.frame;
  }

  follow(): PlaybackFrame {
    return this.seek(this.events.length);
  }
}
