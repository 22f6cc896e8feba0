/** Added/removed path highlights between two selectable schema versions. */

import type { SchemaDiff } from "../types";

export class DiffView {
  private fromSelect: HTMLSelectElement;
  private toSelect: HTMLSelectElement;
  private button: HTMLButtonElement;
  private result: HTMLElement;
  private maxVersion = 0;

  constructor(
    container: HTMLElement,
    private loadDiff: (from: number, to: number) => Promise<SchemaDiff>,
  ) {
    container.innerHTML = `
      <div class="diff-controls">
        <label>from <select id="diff-from"></select></label>
        <label>to <select id="diff-to"></select></label>
        <button id="btn-diff" type="button">Compare</button>
      </div>
      <div id="diff-result"></div>
    `;
    this.fromSelect = container.querySelector("#diff-from") as HTMLSelectElement;
    this.toSelect = container.querySelector("#diff-to") as HTMLSelectElement;
    this.button = container.querySelector("#btn-diff") as HTMLButtonElement;
    this.result = container.querySelector("#diff-result") as HTMLElement;
    this.button.addEventListener("click", () => void this.compare());
    this.render(null);
  }

  /** Refresh the selectable version range (1..latest). */
  render(latestVersion: number | null): void {
    const max = latestVersion ?? 0;
    if (max === this.maxVersion) return;
    this.maxVersion = max;
    for (const select of [this.fromSelect, this.toSelect]) {
      const previous = select.value;
      select.textContent = "";
      for (let v = 1; v <= max; v++) {
        const option = document.createElement("option");
        option.value = String(v);
        option.textContent = `v${v}`;
        select.appendChild(option);
      }
      if (previous && Number(previous) <= max) select.value = previous;
    }
    if (max >= 1) {
      this.fromSelect.value = String(Math.max(1, max - 1));
      this.toSelect.value = String(max);
    }
    this.button.disabled = max < 1;
  }

  private async compare(): Promise<void> {
    this.result.textContent = "";
    try {
      const diff = await this.loadDiff(Number(this.fromSelect.value), Number(this.toSelect.value));
      this.renderResult(diff);
    } catch (err) {
      const p = document.createElement("p");
      p.className = "error";
      p.textContent = err instanceof Error ? err.message : String(err);
      this.result.appendChild(p);
    }
  }

  private renderResult(diff: SchemaDiff): void {
    const pre = document.createElement("pre");
    pre.className = "diff-text";
    pre.textContent = diff.text;
    this.result.appendChild(pre);

    const list = document.createElement("ul");
    list.className = "diff-list";
    for (const path of diff.added_paths) {
      const li = document.createElement("li");
      li.className = "diff-added";
      li.textContent = `+ ${path}`;
      list.appendChild(li);
    }
    for (const path of diff.removed_paths) {
      const li = document.createElement("li");
      li.className = "diff-removed";
      li.textContent = `− ${path}`;
      list.appendChild(li);
    }
    if (list.childElementCount) this.result.appendChild(list);
  }
}
