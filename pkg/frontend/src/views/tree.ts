/** Collapsible tree rendering with hit counts and placeholder badges. */

import type { TreeSnapshot } from "../types";

export class TreeView {
  private collapsed = new Set<string>();
  private last: TreeSnapshot | null = null;

  constructor(private container: HTMLElement) {}

  render(root: TreeSnapshot | null): void {
    this.last = root;
    this.container.textContent = "";
    if (!root || (root.children.length === 0 && !root.hit_count)) {
      const empty = document.createElement("p");
      empty.className = "tree-empty";
      empty.textContent = "No traffic learned yet.";
      this.container.appendChild(empty);
      return;
    }
    const list = document.createElement("ul");
    list.className = "tree";
    list.appendChild(this.renderNode(root, "/"));
    this.container.appendChild(list);
  }

  private renderNode(node: TreeSnapshot, path: string): HTMLElement {
    const item = document.createElement("li");
    item.dataset.path = path;
    const row = document.createElement("div");
    row.className = "node-row";

    if (node.children.length) {
      const isCollapsed = this.collapsed.has(path);
      const toggle = document.createElement("button");
      toggle.className = "toggle";
      toggle.type = "button";
      toggle.textContent = isCollapsed ? "▸" : "▾";
      toggle.addEventListener("click", () => {
        if (this.collapsed.has(path)) this.collapsed.delete(path);
        else this.collapsed.add(path);
        this.render(this.last);
      });
      row.appendChild(toggle);
    } else {
      const spacer = document.createElement("span");
      spacer.className = "toggle-spacer";
      row.appendChild(spacer);
    }

    const label = document.createElement("span");
    label.className = "segment";
    label.textContent = node.segment === "" ? "/" : node.segment;
    row.appendChild(label);

    if (node.hit_count) {
      row.appendChild(badge("hits", `×${node.hit_count}`));
    }
    if (node.methods && node.methods.length) {
      row.appendChild(badge("methods", node.methods.join(" ")));
    }
    if (node.query_params && node.query_params.length) {
      row.appendChild(badge("query", `?${node.query_params.join(",")}`));
    }
    if (node.placeholder) {
      const ph = node.placeholder;
      const span = ph.min_len === ph.max_len ? `${ph.min_len}` : `${ph.min_len}–${ph.max_len}`;
      const randomness = ph.is_random ? "random" : "stable";
      row.appendChild(badge("ph", `${ph.type} · len ${span} · ${randomness}`));
    }

    item.appendChild(row);

    if (node.children.length && !this.collapsed.has(path)) {
      const sub = document.createElement("ul");
      for (const child of node.children) {
        const childPath = path === "/" ? `/${child.segment}` : `${path}/${child.segment}`;
        sub.appendChild(this.renderNode(child, childPath));
      }
      item.appendChild(sub);
    }
    return item;
  }
}

function badge(kind: string, text: string): HTMLElement {
  const span = document.createElement("span");
  span.className = `badge ${kind}`;
  span.textContent = text;
  return span;
}
