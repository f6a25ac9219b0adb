// Version tree panel. Regenerations branch, so this is a tree, not a list.

import { clear, el } from "./dom.js";
import type { VersionTree } from "./types.js";

export function renderVersionTree(
  container: HTMLElement,
  tree: VersionTree,
  selected: string,
  onSelect: (versionId: string) => void,
): void {
  clear(container);
  const childrenOf = new Map<string | null, string[]>();
  for (const vid of Object.keys(tree.versions)) {
    const parent = tree.versions[vid].parent;
    const siblings = childrenOf.get(parent) ?? [];
    siblings.push(vid);
    childrenOf.set(parent, siblings);
  }
  const byNumber = (a: string, b: string) => parseInt(a.slice(1), 10) - parseInt(b.slice(1), 10);

  const renderLevel = (parent: string | null): HTMLElement | null => {
    const vids = (childrenOf.get(parent) ?? []).sort(byNumber);
    if (!vids.length) return null;
    const list = el("ul", { class: "version-list" });
    for (const vid of vids) {
      const info = tree.versions[vid];
      const origin = (info.meta.origin as string | undefined) ?? "root";
      const button = el(
        "button",
        {
          class: `version-pick${vid === selected ? " selected" : ""}`,
          "data-version": vid,
          onclick: () => onSelect(vid),
        },
        `${vid} ${info.sealed ? "" : "(running) "}`,
        el("span", { class: `origin origin-${origin}` }, origin),
      );
      const item = el("li", {}, button);
      const sub = renderLevel(vid);
      if (sub) item.append(sub);
      list.append(item);
    }
    return list;
  };

  const root = renderLevel(null);
  if (root) container.append(root);
}
