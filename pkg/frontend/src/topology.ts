// Topology panel: the registry as declared, before any run. Nodes columned
// by distance from the entrypoint (permission edges and model bindings both
// count as reachability); solid lines are permissions, dashed lines are
// model bindings. setNodeVisual drives the live highlight during a run.

import type { NodeVisual } from "./playback.js";
import type { TopologyReport } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const COL_W = 170;
const ROW_H = 64;
const NODE_W = 130;
const NODE_H = 36;
const PAD = 24;

export interface NodePos {
  name: string;
  kind: string;
  depth: number;
  row: number;
  x: number;
  y: number;
}

export interface TopologyLayout {
  nodes: NodePos[];
  byName: Map<string, NodePos>;
  width: number;
  height: number;
}

export function layoutTopology(report: TopologyReport): TopologyLayout {
  const adjacency = new Map<string, string[]>();
  for (const [a, b] of [...report.permission_edges, ...report.binding_edges]) {
    const out = adjacency.get(a) ?? [];
    out.push(b);
    adjacency.set(a, out);
  }

  const depth = new Map<string, number>();
  const known = new Set(report.nodes.map((n) => n.name));
  if (report.entrypoint && known.has(report.entrypoint)) {
    depth.set(report.entrypoint, 0);
    const queue = [report.entrypoint];
    while (queue.length) {
      const cur = queue.shift()!;
      for (const next of adjacency.get(cur) ?? []) {
        if (!known.has(next) || depth.has(next)) continue;
        depth.set(next, depth.get(cur)! + 1);
        queue.push(next);
      }
    }
  }
  let orphanDepth = 0;
  for (const d of depth.values()) orphanDepth = Math.max(orphanDepth, d + 1);

  const rows = new Map<number, number>();
  const nodes: NodePos[] = report.nodes.map((n) => {
    const d = depth.get(n.name) ?? orphanDepth;
    const row = rows.get(d) ?? 0;
    rows.set(d, row + 1);
    return {
      name: n.name,
      kind: n.kind,
      depth: d,
      row,
      x: PAD + d * COL_W,
      y: PAD + row * ROW_H,
    };
  });

  const maxDepth = Math.max(0, ...nodes.map((n) => n.depth));
  const maxRow = Math.max(0, ...nodes.map((n) => n.row));
  return {
    nodes,
    byName: new Map(nodes.map((n) => [n.name, n])),
    width: PAD * 2 + maxDepth * COL_W + NODE_W,
    height: PAD * 2 + maxRow * ROW_H + NODE_H,
  };
}

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function edgePath(from: NodePos, to: NodePos): string {
  const x1 = from.x + NODE_W;
  const y1 = from.y + NODE_H / 2;
  const x2 = to.x;
  const y2 = to.y + NODE_H / 2;
  const mid = (x1 + x2) / 2;
  return `M ${x1} ${y1} C ${mid} ${y1}, ${mid} ${y2}, ${x2} ${y2}`;
}

export class TopologyView {
  private readonly svg: SVGElement;
  private layout: TopologyLayout | null = null;

  constructor(private readonly container: HTMLElement) {
    this.svg = svgEl("svg", { class: "topology" });
    container.append(this.svg);
  }

  render(report: TopologyReport): void {
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);
    const layout = layoutTopology(report);
    this.layout = layout;
    this.svg.setAttribute("viewBox", `0 0 ${layout.width} ${layout.height}`);
    this.svg.setAttribute("width", String(layout.width));
    this.svg.setAttribute("height", String(layout.height));

    for (const [a, b] of report.permission_edges) {
      const from = layout.byName.get(a);
      const to = layout.byName.get(b);
      if (!from || !to) continue; // dangling permission: reported in issues
      this.svg.append(svgEl("path", { d: edgePath(from, to), class: "edge edge-permission" }));
    }
    for (const [a, b] of report.binding_edges) {
      const from = layout.byName.get(a);
      const to = layout.byName.get(b);
      if (!from || !to) continue;
      this.svg.append(svgEl("path", { d: edgePath(from, to), class: "edge edge-binding" }));
    }

    for (const pos of layout.nodes) {
      const group = svgEl("g", {
        class: `topo-node kind-${pos.kind} visual-idle`,
        "data-node": pos.name,
        transform: `translate(${pos.x} ${pos.y})`,
      });
      group.append(svgEl("rect", { width: String(NODE_W), height: String(NODE_H), rx: "6" }));
      const label = svgEl("text", { x: String(NODE_W / 2), y: "16", "text-anchor": "middle" });
      label.textContent = pos.name;
      const kind = svgEl("text", {
        x: String(NODE_W / 2),
        y: "30",
        "text-anchor": "middle",
        class: "kind-label",
      });
      kind.textContent = pos.kind;
      group.append(label, kind);
      this.svg.append(group);
    }
  }

  setNodeVisual(name: string, visual: NodeVisual): void {
    const group = this.svg.querySelector(`[data-node="${name}"]`);
    if (!group) return;
    group.classList.remove("visual-idle", "visual-running", "visual-ok", "visual-error");
    group.classList.add(`visual-${visual}`);
  }

  applyVisuals(visuals: Map<string, NodeVisual>): void {
    if (!this.layout) return;
    for (const pos of this.layout.nodes) {
      this.setNodeVisual(pos.name, visuals.get(pos.name) ?? "idle");
    }
  }

  nodeCount(): number {
    return this.svg.querySelectorAll(".topo-node").length;
  }
}
