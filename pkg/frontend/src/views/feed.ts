/** Anomaly feed: one row per pushed verdict, in arrival order. */

import type { VerdictEvent, VerdictReason } from "../types";

export class FeedView {
  constructor(private container: HTMLElement) {}

  render(feed: VerdictEvent[], dropped: number): void {
    this.container.textContent = "";
    if (!feed.length) {
      const empty = document.createElement("p");
      empty.className = "feed-empty";
      empty.textContent = "No anomalies yet.";
      this.container.appendChild(empty);
      return;
    }

    const table = document.createElement("table");
    table.className = "feed";
    const head = table.createTHead().insertRow();
    for (const title of ["time", "stage", "path", "reason", "score"]) {
      const th = document.createElement("th");
      th.textContent = title;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const event of feed) {
      const row = body.insertRow();
      row.dataset.seq = String(event.seq);
      row.insertCell().textContent = new Date(event.receivedAt).toISOString().slice(11, 19);
      row.insertCell().textContent = event.stage;
      const pathCell = row.insertCell();
      pathCell.className = "path";
      pathCell.textContent = formatPath(event.reasons);
      row.insertCell().textContent =
        event.reasons.map((r) => r.code).join(", ") || "—";
      row.insertCell().textContent =
        event.score === null ? "—" : event.score.toPrecision(3);
    }
    this.container.appendChild(table);

    const footer = document.createElement("p");
    footer.className = "feed-footer";
    footer.textContent =
      `${feed.length} anomalies` + (dropped > 0 ? ` · ${dropped} dropped at the gateway` : "");
    this.container.appendChild(footer);
  }
}

function formatPath(reasons: VerdictReason[]): string {
  const first = reasons[0];
  if (!first) return "—";
  const location = first.location || "/";
  return first.token ? `${location} · ${first.token}` : location;
}
