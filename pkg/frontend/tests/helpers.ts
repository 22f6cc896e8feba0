/** Shared fakes: a scriptable fetch and push-driven SSE bodies. */

import type { FetchLike } from "../src/api";

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

type Responder = (init?: RequestInit) => Response | Promise<Response>;

/** Route-table fetch stub keyed by "METHOD /path". */
export class FakeGateway {
  readonly calls: string[] = [];
  failing = false;
  private handlers = new Map<string, Responder>();

  readonly fetch: FetchLike = async (input, init) => {
    const url = new URL(String(input), "http://fake");
    const key = `${init?.method ?? "GET"} ${url.pathname}`;
    this.calls.push(key);
    if (this.failing) throw new TypeError("fetch failed");
    const handler = this.handlers.get(key);
    if (!handler) throw new TypeError(`fetch failed: no route for ${key}`);
    return handler(init);
  };

  set(key: string, responder: Responder): void {
    this.handlers.set(key, responder);
  }

  setJson(key: string, status: number, body: unknown): void {
    this.set(key, () => jsonResponse(status, body));
  }
}

/** A hand-pumped SSE body: push frames whenever the test wants. */
export class SseSource {
  private controller!: ReadableStreamDefaultController<Uint8Array>;
  readonly stream = new ReadableStream<Uint8Array>({
    start: (c) => {
      this.controller = c;
    },
  });

  push(text: string): void {
    this.controller.enqueue(new TextEncoder().encode(text));
  }

  close(): void {
    this.controller.close();
  }

  response(): Response {
    return new Response(this.stream, {
      status: 200,
      headers: { "content-type": "text/event-stream" },
    });
  }
}

export function flush(ms = 0): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function waitFor(
  condition: () => boolean,
  timeoutMs = 3000,
  stepMs = 10,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (condition()) return;
    await flush(stepMs);
  }
  if (!condition()) throw new Error("waitFor: condition not met in time");
}
