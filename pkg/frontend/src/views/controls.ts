/** Phase badge plus baseline / phase / reset actions with inline confirmation. */

import type { Phase } from "../types";

export interface ControlHandlers {
  baseline(): Promise<void>;
  reset(): Promise<void>;
  setPhase(target: string): Promise<void>;
}

const PHASES: Phase[] = ["training", "detection", "updating"];

export class ControlsView {
  private badge: HTMLElement;
  private staleMarker: HTMLElement;
  private confirmPanel: HTMLElement;
  private confirmText: HTMLElement;
  private toast: HTMLElement;
  private pending: (() => Promise<void>) | null = null;

  constructor(
    private container: HTMLElement,
    private handlers: ControlHandlers,
  ) {
    container.innerHTML = `
      <span id="phase-badge" class="badge phase">—</span>
      <span id="stale-marker" class="stale hidden" title="no event-stream activity within the heartbeat window">stale</span>
      <button id="btn-baseline" type="button">Baseline</button>
      <select id="phase-target"></select>
      <button id="btn-phase" type="button">Set phase</button>
      <button id="btn-reset" type="button">Reset</button>
      <span id="confirm-panel" class="confirm hidden">
        <span id="confirm-text"></span>
        <button id="confirm-yes" type="button">Confirm</button>
        <button id="confirm-no" type="button">Cancel</button>
      </span>
      <div id="toast" class="toast hidden"></div>
    `;
    this.badge = this.must("#phase-badge");
    this.staleMarker = this.must("#stale-marker");
    this.confirmPanel = this.must("#confirm-panel");
    this.confirmText = this.must("#confirm-text");
    this.toast = this.must("#toast");

    const select = this.must("#phase-target") as HTMLSelectElement;
    for (const phase of PHASES) {
      const option = document.createElement("option");
      option.value = phase;
      option.textContent = phase;
      select.appendChild(option);
    }

    this.must("#btn-baseline").addEventListener("click", () =>
      this.ask("Freeze learned traffic into a baseline and enter detection?", () =>
        this.handlers.baseline(),
      ),
    );
    this.must("#btn-reset").addEventListener("click", () =>
      this.ask("Discard the learned tree, schema, and model?", () => this.handlers.reset()),
    );
    this.must("#btn-phase").addEventListener("click", () =>
      this.ask(`Switch phase to ${select.value}?`, () => this.handlers.setPhase(select.value)),
    );
    this.must("#confirm-yes").addEventListener("click", () => void this.confirm());
    this.must("#confirm-no").addEventListener("click", () => this.cancel());
  }

  private must(selector: string): HTMLElement {
    const el = this.container.querySelector(selector);
    if (!el) throw new Error(`controls: missing ${selector}`);
    return el as HTMLElement;
  }

  private ask(question: string, action: () => Promise<void>): void {
    this.hideToast();
    this.pending = action;
    this.confirmText.textContent = question;
    this.confirmPanel.classList.remove("hidden");
  }

  private cancel(): void {
    this.pending = null;
    this.confirmPanel.classList.add("hidden");
  }

  private async confirm(): Promise<void> {
    const action = this.pending;
    this.cancel();
    if (!action) return;
    try {
      await action();
    } catch (err) {
      // Server errors surface verbatim.
      this.showToast(err instanceof Error ? err.message : String(err));
    }
  }

  setPhaseBadge(phase: Phase | null, stale: boolean): void {
    this.badge.textContent = phase ? phase.charAt(0).toUpperCase() + phase.slice(1) : "—";
    this.badge.className = `badge phase${phase ? ` phase-${phase}` : ""}${stale ? " stale" : ""}`;
    this.staleMarker.classList.toggle("hidden", !stale);
  }

  showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.classList.remove("hidden");
  }

  hideToast(): void {
    this.toast.textContent = "";
    this.toast.classList.add("hidden");
  }
}
