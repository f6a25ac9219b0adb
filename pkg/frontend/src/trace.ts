// Trace explorer: playback slider, node panel, call tree, timing bars,
// version tree, regenerate and breakpoint controls. Rendering is split into
// pure functions of a PlaybackFrame so the slider view and the live view
// cannot drift apart.

import type { Api } from "./api.js";
import { clear, el } from "./dom.js";
import type { CallState, PlaybackFrame } from "./playback.js";
import { nodeVisuals, Playback } from "./playback.js";
import { streamTrace } from "./sse.js";
import { renderTimingBars } from "./timeline.js";
import type { TraceEvent, VersionTree } from "./types.js";
import { renderVersionTree } from "./versions.js";

/** Distinct nodes the prefix has touched, one chip each, in first-touch order. */
export function renderNodePanel(container: HTMLElement, frame: PlaybackFrame): void {
  clear(container);
  const visuals = nodeVisuals(frame);
  const seen = new Set<string>();
  for (const id of frame.order) {
    const call = frame.calls.get(id)!;
    if (seen.has(call.node)) continue;
    seen.add(call.node);
    container.append(
      el(
        "span",
        { class: `node-chip visual-${visuals.get(call.node) ?? "idle"}`, "data-node": call.node },
        call.node,
      ),
    );
  }
}

function callLabel(call: CallState): string {
  const phase = call.done ? call.status : `${call.stage}/${call.phase}`;
  return `${call.node} [${call.kind}] ${phase}`;
}

export function renderCallTree(
  container: HTMLElement,
  frame: PlaybackFrame,
  onPick?: (callId: string) => void,
): void {
  clear(container);
  const roots = frame.order.filter((id) => {
    const parent = frame.calls.get(id)!.parent;
    return !parent || !frame.calls.has(parent);
  });
  const renderCall = (id: string): HTMLElement => {
    const call = frame.calls.get(id)!;
    const item = el(
      "li",
      { class: `call status-${call.done ? call.status : "running"}`, "data-call": id },
      el("button", { class: "call-pick", onclick: () => onPick?.(id) }, callLabel(call)),
    );
    if (call.children.length) {
      const sub = el("ul", {});
      for (const child of call.children) sub.append(renderCall(child));
      item.append(sub);
    }
    return item;
  };
  const list = el("ul", { class: "call-tree" });
  for (const id of roots) list.append(renderCall(id));
  container.append(list);
}

export function renderAnswer(container: HTMLElement, frame: PlaybackFrame): void {
  clear(container);
  if (frame.answer === undefined) {
    container.append(el("span", { class: "pending" }, "(running...)"));
    return;
  }
  container.append(el("code", {}, JSON.stringify(frame.answer)));
}

interface TraceViewHooks {
  // test seam: called after every applied live event, before the next frame
  onLiveEvent?: (ev: TraceEvent) => void;
}

export class TraceView {
  readonly playback = new Playback();
  traceId: string | null = null;
  versionId: string | null = null;
  private stopStream: (() => void) | null = null;

  readonly slider: HTMLInputElement;
  private readonly cursorLabel: HTMLElement;
  private readonly followBtn: HTMLButtonElement;
  readonly nodePanel: HTMLElement;
  private readonly callTree: HTMLElement;
  private readonly answerBox: HTMLElement;
  private readonly timingBox: HTMLElement;
  private readonly versionBox: HTMLElement;
  private readonly regenTarget: HTMLElement;
  private readonly statusLine: HTMLElement;
  private pickedCall: string | null = null;

  constructor(
    private readonly container: HTMLElement,
    private readonly api: Api,
    private readonly hooks: TraceViewHooks = {},
  ) {
    this.slider = el("input", { type: "range", min: "0", value: "0", class: "cursor" });
    this.slider.addEventListener("input", () => this.seek(Number(this.slider.value)));
    this.cursorLabel = el("span", { class: "cursor-label" }, "0/0");
    this.followBtn = el("button", { class: "follow", onclick: () => this.follow() }, "follow");
    this.nodePanel = el("div", { class: "node-panel" });
    this.callTree = el("div", { class: "call-tree-box" });
    this.answerBox = el("div", { class: "answer-box" });
    this.timingBox = el("div", { class: "timing-box" });
    this.versionBox = el("div", { class: "version-box" });
    this.regenTarget = el("span", { class: "regen-target" }, "pick a call to regenerate");
    this.statusLine = el("div", { class: "trace-status", role: "status" });

    container.append(
      el("div", { class: "scrub-row" }, this.slider, this.cursorLabel, this.followBtn),
      el("div", { class: "trace-grid" },
        el("section", {}, el("h3", {}, "nodes"), this.nodePanel,
          el("h3", {}, "answer"), this.answerBox),
        el("section", {}, el("h3", {}, "calls"), this.callTree),
        el("section", {}, el("h3", {}, "timing"), this.timingBox),
        el("section", {}, el("h3", {}, "versions"), this.versionBox),
      ),
      this.regenControls(),
      this.statusLine,
    );
  }

  private regenControls(): HTMLElement {
    const overrides = el("input", {
      type: "text",
      class: "regen-overrides",
      placeholder: '{"arguments": {...}} (optional)',
    });
    const go = el("button", {
      class: "regen-go",
      onclick: () => void this.regenerate(overrides.value),
    }, "regenerate from call");
    return el("div", { class: "regen-row" }, this.regenTarget, overrides, go);
  }

  private async regenerate(overrideText: string): Promise<void> {
    if (!this.traceId || !this.pickedCall) {
      this.statusLine.textContent = "regenerate: pick a call first";
      return;
    }
    let overrides: Record<string, unknown> | undefined;
    if (overrideText.trim()) {
      try {
        overrides = JSON.parse(overrideText) as Record<string, unknown>;
      } catch {
        this.statusLine.textContent = "regenerate: overrides must be JSON";
        return;
      }
    }
    try {
      const result = await this.api.regenerate(this.traceId, this.pickedCall, {
        version_id: this.versionId ?? undefined,
        overrides,
      });
      this.statusLine.textContent = `regenerated: ${result.new_version_id} [${result.status}]`;
      await this.load(this.traceId, result.new_version_id);
    } catch (err) {
      this.statusLine.textContent = `regenerate failed: ${String(err)}`;
    }
  }

  async load(traceId: string, version?: string): Promise<void> {
    this.stopStream?.();
    this.stopStream = null;
    this.traceId = traceId;
    const log = await this.api.eventlog(traceId, version);
    this.versionId = log.version_id;
    this.playback.reset(log.events);
    this.renderFrame(this.playback.current());
    await this.refreshSide();
    if (!log.sealed) this.goLive(log.events.length);
  }

  private goLive(fromSeq: number): void {
    if (!this.traceId) return;
    this.stopStream = streamTrace(this.api.baseUrl, this.traceId, {
      onEvent: (ev) => {
        this.playback.push(ev);
        if (this.playback.following) this.renderFrame(this.playback.current());
        else this.updateScrub();
        this.hooks.onLiveEvent?.(ev);
      },
      onSealed: () => {
        this.stopStream = null;
        void this.refreshSide();
      },
    }, { version: this.versionId ?? undefined, fromSeq });
  }

  private async refreshSide(): Promise<void> {
    if (!this.traceId) return;
    try {
      const [timing, tree] = await Promise.all([
        this.api.timing(this.traceId, this.versionId ?? undefined).catch(() => null),
        this.api.versionTree(this.traceId),
      ]);
      if (timing) renderTimingBars(this.timingBox, timing.calls);
      this.renderVersions(tree);
    } catch {
      // side panels are best-effort while a run is in flight
    }
  }

  private renderVersions(tree: VersionTree): void {
    renderVersionTree(this.versionBox, tree, this.versionId ?? "", (vid) => {
      if (this.traceId) void this.load(this.traceId, vid);
    });
  }

  seek(cursor: number): void {
    this.renderFrame(this.playback.seek(cursor));
  }

  follow(): void {
    this.renderFrame(this.playback.follow());
  }

  renderFrame(frame: PlaybackFrame): void {
    this.updateScrub();
    renderNodePanel(this.nodePanel, frame);
    renderCallTree(this.callTree, frame, (id) => {
      this.pickedCall = id;
      this.regenTarget.textContent = `target: ${frame.calls.get(id)?.node} (${id})`;
    });
    renderAnswer(this.answerBox, frame);
  }

  private updateScrub(): void {
    this.slider.max = String(this.playback.length);
    this.slider.value = String(this.playback.cursor);
    this.cursorLabel.textContent = `${this.playback.cursor}/${this.playback.length}`;
  }
}
