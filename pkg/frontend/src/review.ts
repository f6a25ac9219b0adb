// Bank review board.
//
// Button enablement mirrors the server's transition table (approve only
// from annotated, reject from pending/annotated, reopen from rejected),
// but the server stays authoritative: any action that slips through, e.g.
// a stale row or someone poking at the DOM, surfaces the service's 409
// in the status line instead of mutating anything.

import { ApiError } from "./api.js";
import { clear, el } from "./dom.js";
import type { BankRecord, ReviewState } from "./types.js";

export interface ReviewActions {
  annotate(recordId: string, payload: Record<string, unknown>): Promise<BankRecord>;
  audit(recordId: string, verdict: "approve" | "reject", note?: string): Promise<BankRecord>;
  reopen(recordId: string): Promise<BankRecord>;
}

const CAN = {
  annotate: new Set<ReviewState>(["pending", "annotated"]),
  approve: new Set<ReviewState>(["annotated"]),
  reject: new Set<ReviewState>(["pending", "annotated"]),
  reopen: new Set<ReviewState>(["rejected"]),
};

export class ReviewBoard {
  private records: BankRecord[] = [];
  private status: HTMLElement;
  private table: HTMLElement;

  constructor(
    private readonly container: HTMLElement,
    private readonly actions: ReviewActions,
    private readonly onChanged?: () => void,
  ) {
    this.status = el("div", { class: "review-status", role: "status" });
    this.table = el("div", { class: "review-table" });
    container.append(this.status, this.table);
  }

  render(records: BankRecord[]): void {
    this.records = records;
    clear(this.table);
    if (!records.length) {
      this.table.append(el("p", { class: "empty" }, "no records deposited yet"));
      return;
    }
    for (const record of records) this.table.append(this.row(record));
  }

  private async run(label: string, recordId: string, fn: () => Promise<BankRecord>): Promise<void> {
    try {
      const updated = await fn();
      this.setStatus(`${label} ok: ${recordId} is now ${updated.state}`, false);
      this.records = this.records.map((r) => (r.record_id === recordId ? updated : r));
      this.render(this.records);
      if (this.onChanged) this.onChanged();
    } catch (err) {
      if (err instanceof ApiError) {
        this.setStatus(`${label} refused [${err.status} ${err.code}]: ${err.message}`, true);
      } else {
        this.setStatus(`${label} failed: ${String(err)}`, true);
      }
    }
  }

  private setStatus(text: string, isError: boolean): void {
    this.status.textContent = text;
    this.status.classList.toggle("error", isError);
  }

  lastStatus(): string {
    return this.status.textContent ?? "";
  }

  private row(record: BankRecord): HTMLElement {
    const rid = record.record_id;
    const state = record.state;

    const annotateForm = el("div", { class: "annotate-form hidden" });
    const question = el("input", { type: "text", placeholder: "question" });
    const answer = el("input", { type: "text", placeholder: "answer" });
    annotateForm.append(
      question,
      answer,
      el("button", {
        class: "act-save",
        onclick: () =>
          this.run("annotate", rid, () =>
            this.actions.annotate(rid, { question: question.value, answer: answer.value }),
          ),
      }, "save"),
    );
    if (record.annotation) {
      question.value = String(record.annotation.question ?? "");
      answer.value = String(record.annotation.answer ?? "");
    }

    const btn = (cls: string, label: string, allowed: boolean, onclick: () => void) =>
      el("button", { class: cls, disabled: !allowed, onclick }, label);

    const actions = el(
      "div",
      { class: "row-actions" },
      btn("act-annotate", "annotate", CAN.annotate.has(state), () =>
        annotateForm.classList.toggle("hidden"),
      ),
      btn("act-approve", "approve", CAN.approve.has(state), () =>
        this.run("approve", rid, () => this.actions.audit(rid, "approve")),
      ),
      btn("act-reject", "reject", CAN.reject.has(state), () =>
        this.run("reject", rid, () => this.actions.audit(rid, "reject")),
      ),
      btn("act-reopen", "reopen", CAN.reopen.has(state), () =>
        this.run("reopen", rid, () => this.actions.reopen(rid)),
      ),
    );

    return el(
      "div",
      { class: "review-row", "data-record": rid, "data-state": state },
      el(
        "div",
        { class: "row-head" },
        el("span", { class: `state state-${state}` }, state),
        el("span", { class: "rid" }, rid),
        el("span", { class: "prio" }, record.priority),
        el("span", { class: "occ", title: "times this work was deposited" },
          `x${record.occurrence_count}`),
        el("span", { class: "tpl" }, record.template),
      ),
      actions,
      annotateForm,
    );
  }
}
