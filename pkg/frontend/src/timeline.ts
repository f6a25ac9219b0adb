// Timing bars: one row per call, segments for where the time went.

import { clear, el } from "./dom.js";
import type { TimingRow } from "./types.js";

export const CATEGORIES = ["llm", "tool", "agent", "self"] as const;
export type Category = (typeof CATEGORIES)[number];

export interface BarSegment {
  category: Category;
  ms: number;
  pct: number; // of the widest row, so bars are comparable across rows
}

export interface Bar {
  name: string;
  kind: string;
  totalMs: number;
  segments: BarSegment[];
}

export function computeBars(rows: TimingRow[]): Bar[] {
  const widest = Math.max(1, ...rows.map((r) => r.total_ms));
  return rows.map((row) => ({
    name: row.name,
    kind: row.kind,
    totalMs: row.total_ms,
    segments: CATEGORIES.map((category) => {
      const ms = row[`${category}_ms`];
      return { category, ms, pct: (ms / widest) * 100 };
    }).filter((seg) => seg.ms > 0),
  }));
}

export function renderTimingBars(container: HTMLElement, rows: TimingRow[]): void {
  clear(container);
  for (const bar of computeBars(rows)) {
    const track = el("div", { class: "bar-track" });
    for (const seg of bar.segments) {
      const piece = el("div", {
        class: `bar-seg seg-${seg.category}`,
        title: `${seg.category} ${seg.ms}ms`,
      });
      piece.style.width = `${seg.pct}%`;
      track.append(piece);
    }
    container.append(
      el(
        "div",
        { class: "bar-row" },
        el("span", { class: "bar-name" }, `${bar.name} (${bar.totalMs}ms)`),
        track,
      ),
    );
  }
}
