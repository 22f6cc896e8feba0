/**
 * Console state: one store, subscribed views.
 *
 * The poll loop is sequential, so poll results are authoritative; push
 * events and polls are reconciled by last-write-wins on the schema
 * version — a push may only advance the version, never regress a newer
 * poll, while an explicit reset clears the watermark.
 */

import type { StreamState } from "./sse";
import type { GatewayStats, Phase, TreeSnapshot, VerdictEvent } from "./types";

export const FEED_LIMIT = 500;

export interface ConsoleState {
  connected: boolean;
  streamState: StreamState;
  stale: boolean;
  phase: Phase | null;
  schemaVersion: number | null;
  liveTree: TreeSnapshot | null;
  schemaTree: TreeSnapshot | null;
  feed: VerdictEvent[];
  feedDropped: number;
  lastError: string | null;
}

export type Listener = (state: ConsoleState) => void;

export class ConsoleStore {
  readonly state: ConsoleState = {
    connected: false,
    streamState: "connecting",
    stale: false,
    phase: null,
    schemaVersion: null,
    liveTree: null,
    schemaTree: null,
    feed: [],
    feedDropped: 0,
    lastError: null,
  };

  private listeners = new Set<Listener>();

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  /** Apply a polled /stats document. */
  applyStats(stats: GatewayStats): void {
    this.state.phase = stats.phase;
    if (stats.schema_version === null) {
      // A reset happened server-side: clear the watermark.
      this.state.schemaVersion = null;
      this.state.schemaTree = null;
    } else if (
      this.state.schemaVersion === null ||
      stats.schema_version >= this.state.schemaVersion
    ) {
      this.state.schemaVersion = stats.schema_version;
    }
    this.state.feedDropped = stats.events.dropped;
    this.state.connected = true;
    this.state.lastError = null;
    this.emit();
  }

  /** Apply a control response (/baseline, /phase, /reset). */
  applyPhase(phase: Phase, schemaVersion?: number | null): void {
    this.state.phase = phase;
    if (schemaVersion !== undefined) {
      this.state.schemaVersion = schemaVersion;
      if (schemaVersion === null) this.state.schemaTree = null;
    }
    this.emit();
  }

  applyLiveTree(tree: TreeSnapshot | null): void {
    this.state.liveTree = tree;
    this.emit();
  }

  applySchemaTree(tree: TreeSnapshot | null): void {
    this.state.schemaTree = tree;
    this.emit();
  }

  /** Append a pushed verdict; pushes may only advance the schema version. */
  applyVerdict(event: VerdictEvent): void {
    if (
      event.schema_version !== null &&
      (this.state.schemaVersion === null || event.schema_version > this.state.schemaVersion)
    ) {
      this.state.schemaVersion = event.schema_version;
    }
    this.state.feed.push(event);
    if (this.state.feed.length > FEED_LIMIT) {
      this.state.feed.splice(0, this.state.feed.length - FEED_LIMIT);
    }
    this.emit();
  }

  clearFeed(): void {
    this.state.feed = [];
    this.emit();
  }

  setConnected(connected: boolean, error?: string): void {
    this.state.connected = connected;
    this.state.lastError = connected ? null : (error ?? this.state.lastError);
    this.emit();
  }

  setStreamState(streamState: StreamState): void {
    this.state.streamState = streamState;
    this.emit();
  }

  setStale(stale: boolean): void {
    if (this.state.stale !== stale) {
      this.state.stale = stale;
      this.emit();
    }
  }
}
