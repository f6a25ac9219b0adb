// Composition root. Three tabs: topology (with live highlights), trace
// explorer, bank review. Served by the agentmesh service from /, talking
// to the API on the same origin.

import { Api } from "./api.js";
import { BreakpointPanel } from "./controls.js";
import { clear, el } from "./dom.js";
import { nodeVisuals } from "./playback.js";
import { ReviewBoard } from "./review.js";
import { TopologyView } from "./topology.js";
import { TraceView } from "./trace.js";

export function mountApp(root: HTMLElement, api: Api = new Api()): void {
  clear(root);

  const tabs = el("nav", { class: "tabs" });
  const panes: Record<string, HTMLElement> = {
    topology: el("main", { class: "pane" }),
    trace: el("main", { class: "pane hidden" }),
    bank: el("main", { class: "pane hidden" }),
  };
  const select = (name: string) => {
    for (const [key, pane] of Object.entries(panes)) {
      pane.classList.toggle("hidden", key !== name);
    }
    tabs.querySelectorAll("button").forEach((b) =>
      b.classList.toggle("active", b.dataset.tab === name));
  };
  for (const name of Object.keys(panes)) {
    tabs.append(el("button", { "data-tab": name, onclick: () => select(name) }, name));
  }

  // -- topology + chat ------------------------------------------------------

  const topoBox = el("div", { class: "topo-box" });
  const topology = new TopologyView(topoBox);
  const query = el("input", { type: "text", placeholder: "ask the mesh...", class: "chat-input" });
  const chatStatus = el("span", { class: "chat-status" });
  const traceView = new TraceView(panes.trace, api, {
    onLiveEvent: () => topology.applyVisuals(nodeVisuals(traceView.playback.current())),
  });

  const runChat = async () => {
    if (!query.value.trim()) return;
    chatStatus.textContent = "running...";
    try {
      const started = await api.chatStart(query.value);
      chatStatus.textContent = `trace ${started.trace_id}`;
      await traceView.load(started.trace_id);
    } catch (err) {
      chatStatus.textContent = String(err);
    }
  };
  query.addEventListener("keydown", (ev) => {
    if ((ev as KeyboardEvent).key === "Enter") void runChat();
  });

  panes.topology.append(
    el("div", { class: "chat-row" }, query,
      el("button", { onclick: () => void runChat() }, "run"), chatStatus),
    topoBox,
  );
  void api.topology().then((report) => topology.render(report))
    .catch((err) => topoBox.append(el("p", { class: "error" }, String(err))));

  // -- trace explorer ---------------------------------------------------------

  const picker = el("select", { class: "trace-picker" });
  picker.addEventListener("change", () => void traceView.load(picker.value));
  const refreshTraces = async () => {
    const listing = await api.traces();
    clear(picker);
    for (const t of listing.traces) {
      picker.append(el("option", { value: t.trace_id }, `${t.trace_id} (${t.versions.length}v)`));
    }
  };
  panes.trace.prepend(
    el("div", { class: "trace-head" },
      picker,
      el("button", { onclick: () => void refreshTraces() }, "refresh"),
    ),
  );
  const bpInner = el("div", {});
  new BreakpointPanel(bpInner, api);
  panes.trace.append(el("details", {}, el("summary", {}, "breakpoints"), bpInner));
  void refreshTraces().catch(() => undefined);

  // -- bank -------------------------------------------------------------------

  const board = new ReviewBoard(panes.bank, api);
  const loadBank = async () => {
    const data = await api.bankRecords();
    board.render(data.records);
  };
  panes.bank.prepend(
    el("div", { class: "bank-head" },
      el("button", { onclick: () => void loadBank() }, "refresh records")),
  );
  void loadBank().catch(() => undefined);

  root.append(el("header", {}, el("h1", {}, "agentmesh")), tabs, ...Object.values(panes));
  select("topology");
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app")!);
}
