/**
 * Server-sent-events subscription over a streamed fetch.
 *
 * A plain streamed fetch gives the same wire behaviour as EventSource
 * (frames split on blank lines, `:` comments as heartbeats) while
 * working in every runtime the console is tested in, and it lets the
 * caller inject a fetch implementation.
 */

import type { FetchLike } from "./api";

export interface SseFrame {
  comment?: string;
  id?: string;
  event?: string;
  data?: string;
}

/** Incremental frame parser; feed it text chunks, collect completed frames. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const m = this.buffer.match(/\r\n\r\n|\n\n|\r\r/);
      if (!m || m.index === undefined) break;
      const raw = this.buffer.slice(0, m.index);
      this.buffer = this.buffer.slice(m.index + m[0].length);
      const frame = parseFrame(raw);
      if (frame) frames.push(frame);
    }
    return frames;
  }
}

function parseFrame(raw: string): SseFrame | null {
  const frame: SseFrame = {};
  const data: string[] = [];
  const comments: string[] = [];
  for (const line of raw.split(/\r\n|\n|\r/)) {
    if (!line) continue;
    if (line.startsWith(":")) {
      comments.push(line.slice(1).trimStart());
      continue;
    }
    const idx = line.indexOf(":");
    const field = idx < 0 ? line : line.slice(0, idx);
    let value = idx < 0 ? "" : line.slice(idx + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "id") frame.id = value;
    else if (field === "event") frame.event = value;
    else if (field === "data") data.push(value);
  }
  if (data.length) frame.data = data.join("\n");
  if (comments.length) frame.comment = comments.join("\n");
  if (
    frame.data === undefined &&
    frame.comment === undefined &&
    frame.id === undefined &&
    frame.event === undefined
  ) {
    return null;
  }
  return frame;
}

export type StreamState = "connecting" | "open" | "retrying" | "closed";

export interface EventStreamOptions {
  fetchFn?: FetchLike;
  onFrame?: (frame: SseFrame) => void;
  onState?: (state: StreamState) => void;
  /** First retry delay; doubles per consecutive failure up to the max. */
  retryDelayMs?: number;
  maxRetryDelayMs?: number;
}

/** One /events subscription with automatic reconnect and backoff. */
export class EventStream {
  /** Epoch millis of the last frame seen, heartbeats included. */
  lastActivityAt = 0;

  private readonly url: string;
  private readonly fetchFn: FetchLike;
  private readonly onFrame?: (frame: SseFrame) => void;
  private readonly onState?: (state: StreamState) => void;
  private readonly retryDelayMs: number;
  private readonly maxRetryDelayMs: number;
  private stopped = false;
  private started = false;
  private controller: AbortController | null = null;

  constructor(url: string, options: EventStreamOptions = {}) {
    this.url = url;
    this.fetchFn = options.fetchFn ?? ((input, init) => fetch(input, init));
    this.onFrame = options.onFrame;
    this.onState = options.onState;
    this.retryDelayMs = options.retryDelayMs ?? 1000;
    this.maxRetryDelayMs = options.maxRetryDelayMs ?? 15_000;
  }

  start(): void {
    if (this.started) return;
    this.started = true;
    void this.run();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async run(): Promise<void> {
    let delay = this.retryDelayMs;
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        this.onState?.("connecting");
        const res = await this.fetchFn(this.url, {
          signal: this.controller.signal,
          headers: { accept: "text/event-stream" },
        });
        if (!res.ok || !res.body) {
          throw new Error(`events endpoint returned ${res.status}`);
        }
        this.onState?.("open");
        delay = this.retryDelayMs; // healthy connection resets the backoff
        const reader = res.body.getReader();
        // Aborting the fetch does not settle reads already pending on the
        // body in every runtime; cancelling the reader does.
        const cancelRead = () => void reader.cancel().catch(() => undefined);
        const signal = this.controller.signal;
        if (signal.aborted) cancelRead();
        else signal.addEventListener("abort", cancelRead, { once: true });
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
            this.lastActivityAt = Date.now();
            this.onFrame?.(frame);
          }
        }
        signal.removeEventListener("abort", cancelRead);
      } catch {
        // connection failure: fall through to the retry path
      }
      if (this.stopped) break;
      this.onState?.("retrying");
      await sleep(delay);
      delay = Math.min(delay * 2, this.maxRetryDelayMs);
    }
    this.onState?.("closed");
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
