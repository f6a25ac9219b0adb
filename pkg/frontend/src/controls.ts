// Breakpoint panel: set node/stage pairs, list what is paused, resume.

import type { Api } from "./api.js";
import { clear, el } from "./dom.js";

const STAGES = ["pre_process", "pre_save_data", "execute", "post_process", "format_output"];

export class BreakpointPanel {
  private readonly list: HTMLElement;
  private readonly paused: HTMLElement;
  private readonly status: HTMLElement;

  constructor(private readonly container: HTMLElement, private readonly api: Api) {
    const node = el("input", { type: "text", placeholder: "node name" });
    const stage = el("select", {});
    for (const s of STAGES) stage.append(el("option", { value: s }, s));
    stage.value = "execute";
    this.list = el("div", { class: "bp-list" });
    this.paused = el("div", { class: "paused-list" });
    this.status = el("div", { class: "bp-status", role: "status" });
    container.append(
      el("div", { class: "bp-form" },
        node, stage,
        el("button", { onclick: () => void this.add(node.value, stage.value) }, "set breakpoint"),
        el("button", { onclick: () => void this.refresh() }, "refresh"),
      ),
      this.list,
      el("h4", {}, "paused"),
      this.paused,
      this.status,
    );
  }

  async refresh(): Promise<void> {
    try {
      const data = await this.api.breakpoints();
      clear(this.list);
      for (const bp of data.breakpoints) {
        this.list.append(
          el("div", { class: "bp-row", "data-bp": bp.bp_id },
            `${bp.node} @ ${bp.stage} `,
            el("button", { onclick: () => void this.remove(bp.bp_id) }, "clear"),
          ),
        );
      }
      clear(this.paused);
      for (const p of data.paused) {
        this.paused.append(
          el("div", { class: "paused-row", "data-call": p.call_id },
            `${p.node} @ ${p.stage} (${p.call_id}) `,
            el("button", { onclick: () => void this.resume(p.call_id) }, "resume"),
          ),
        );
      }
    } catch (err) {
      this.status.textContent = `breakpoints: ${String(err)}`;
    }
  }

  private async add(node: string, stage: string): Promise<void> {
    try {
      await this.api.addBreakpoint(node, stage);
      await this.refresh();
    } catch (err) {
      this.status.textContent = `set failed: ${String(err)}`;
    }
  }

  private async remove(bpId: string): Promise<void> {
    await this.api.removeBreakpoint(bpId);
    await this.refresh();
  }

  private async resume(callId: string): Promise<void> {
    try {
      await this.api.resume(callId);
      this.status.textContent = `resumed ${callId}`;
      await this.refresh();
    } catch (err) {
      this.status.textContent = `resume failed: ${String(err)}`;
    }
  }
}
