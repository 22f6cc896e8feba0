/** Wires the gateway client, store, event stream, and views into one page. */

import { GatewayClient, schemaToSnapshot } from "./api";
import type { FetchLike } from "./api";
import { EventStream } from "./sse";
import { ConsoleStore } from "./store";
import type { ConsoleState } from "./store";
import type { VerdictEvent } from "./types";
import { ControlsView } from "./views/controls";
import { DiffView } from "./views/diff";
import { FeedView } from "./views/feed";
import { OpenApiView } from "./views/openapi";
import { TreeView } from "./views/tree";

export interface AppOptions {
  baseUrl: string;
  fetchFn?: FetchLike;
  /** Tree/stats refresh interval. */
  pollIntervalMs?: number;
  /** Mark views stale when the stream has been quiet this long (3 heartbeats). */
  staleAfterMs?: number;
  retryDelayMs?: number;
  maxRetryDelayMs?: number;
}

const SKELETON = `
  <div id="conn-banner" class="banner hidden">gateway unreachable — retrying…</div>
  <header>
    <h1>apiward console</h1>
    <div id="controls"></div>
  </header>
  <main>
    <section id="tree-section">
      <h2>API tree</h2>
      <p id="tree-meta" class="meta"></p>
      <div id="tree"></div>
    </section>
    <section id="feed-section">
      <h2>Anomalies</h2>
      <div id="feed"></div>
    </section>
    <section id="diff-section">
      <h2>Schema diff</h2>
      <div id="diff"></div>
    </section>
    <section id="openapi-section">
      <h2>OpenAPI</h2>
      <div id="openapi"></div>
    </section>
  </main>
`;

export class App {
  readonly client: GatewayClient;
  readonly store: ConsoleStore;
  readonly stream: EventStream;

  private treeView: TreeView;
  private feedView: FeedView;
  private controlsView: ControlsView;
  private diffView: DiffView;
  private openApiView: OpenApiView;
  private treeMeta: HTMLElement;
  private banner: HTMLElement;

  private pollIntervalMs: number;
  private staleAfterMs: number;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private staleTimer: ReturnType<typeof setInterval> | null = null;
  private schemaTreeVersion: number | null = null;

  constructor(root: HTMLElement, options: AppOptions) {
    this.pollIntervalMs = options.pollIntervalMs ?? 2000;
    this.staleAfterMs = options.staleAfterMs ?? 45_000;
    this.client = new GatewayClient(options.baseUrl, options.fetchFn);
    this.store = new ConsoleStore();

    root.innerHTML = SKELETON;
    const pick = (selector: string): HTMLElement => {
      const el = root.querySelector(selector);
      if (!el) throw new Error(`app: missing ${selector}`);
      return el as HTMLElement;
    };
    this.banner = pick("#conn-banner");
    this.treeMeta = pick("#tree-meta");
    this.treeView = new TreeView(pick("#tree"));
    this.feedView = new FeedView(pick("#feed"));
    this.controlsView = new ControlsView(pick("#controls"), {
      baseline: async () => {
        const res = await this.client.baseline();
        this.store.applyPhase(res.phase, res.schema_version);
        await this.refreshSchemaTree();
      },
      reset: async () => {
        const res = await this.client.reset();
        this.schemaTreeVersion = null;
        this.store.clearFeed();
        this.store.applyPhase(res.phase, null);
        await this.refresh();
      },
      setPhase: async (target: string) => {
        const res = await this.client.setPhase(target);
        this.store.applyPhase(res.phase);
        await this.refresh();
      },
    });
    this.diffView = new DiffView(pick("#diff"), (from, to) => this.client.diff(from, to));
    this.openApiView = new OpenApiView(pick("#openapi"), () => this.client.openapiDoc());

    this.stream = new EventStream(this.client.baseUrl + "/events", {
      fetchFn: options.fetchFn,
      retryDelayMs: options.retryDelayMs,
      maxRetryDelayMs: options.maxRetryDelayMs,
      onState: (state) => this.store.setStreamState(state),
      onFrame: (frame) => {
        // Any frame, heartbeats included, proves the stream is fresh.
        this.store.setStale(false);
        if (frame.event !== "verdict" || !frame.data) return;
        let verdict: VerdictEvent;
        try {
          const parsed = JSON.parse(frame.data) as Omit<VerdictEvent, "receivedAt">;
          verdict = { ...parsed, seq: parsed.seq ?? Number(frame.id), receivedAt: Date.now() };
        } catch {
          return; // malformed event payloads are dropped, not fatal
        }
        this.store.applyVerdict(verdict);
      },
    });

    this.store.subscribe((state) => this.render(state));
  }

  async start(): Promise<void> {
    await this.refresh();
    this.pollTimer = setInterval(() => void this.refresh(), this.pollIntervalMs);
    const staleCheckMs = Math.max(50, Math.min(1000, Math.floor(this.staleAfterMs / 3)));
    this.staleTimer = setInterval(() => this.checkStale(), staleCheckMs);
    this.stream.start();
  }

  stop(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    if (this.staleTimer !== null) clearInterval(this.staleTimer);
    this.pollTimer = null;
    this.staleTimer = null;
    this.stream.stop();
  }

  /** One poll round: stats + live tree, plus the schema tree when the version moved. */
  async refresh(): Promise<void> {
    try {
      const stats = await this.client.stats();
      this.store.applyStats(stats);
      const tree = await this.client.tree();
      this.store.applyLiveTree(tree);
      await this.refreshSchemaTree();
      this.store.setConnected(true);
    } catch (err) {
      this.store.setConnected(false, err instanceof Error ? err.message : String(err));
    }
  }

  private async refreshSchemaTree(): Promise<void> {
    const version = this.store.state.schemaVersion;
    if (version === null) {
      this.schemaTreeVersion = null;
      if (this.store.state.schemaTree !== null) this.store.applySchemaTree(null);
      return;
    }
    if (version === this.schemaTreeVersion) return;
    const doc = await this.client.schema();
    this.store.applySchemaTree(schemaToSnapshot(doc.root));
    this.schemaTreeVersion = doc.version;
  }

  private checkStale(): void {
    const last = this.stream.lastActivityAt;
    this.store.setStale(last > 0 && Date.now() - last > this.staleAfterMs);
  }

  private render(state: ConsoleState): void {
    const unhealthy = !state.connected || state.streamState === "retrying";
    this.banner.classList.toggle("hidden", !unhealthy);

    this.controlsView.setPhaseBadge(state.phase, state.stale);

    // One tree panel: the frozen schema once a baseline exists, the live
    // trie while training (and again right after a reset empties it).
    if (state.schemaVersion !== null && state.schemaTree !== null) {
      this.treeMeta.textContent = `schema v${state.schemaVersion}`;
      this.treeView.render(state.schemaTree);
    } else {
      this.treeMeta.textContent = "live tree";
      this.treeView.render(state.liveTree);
    }

    this.feedView.render(state.feed, state.feedDropped);
    this.diffView.render(state.schemaVersion);
  }
}
