/** Thin typed client for every gateway endpoint the console uses. */

import type {
  GatewayStats,
  Phase,
  SchemaDiff,
  SchemaDoc,
  SchemaNode,
  TreeSnapshot,
  Verdict,
} from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the server's verbatim message and, when sent, its phase. */
export class GatewayError extends Error {
  readonly status: number;
  readonly phase?: string;

  constructor(status: number, message: string, phase?: string) {
    super(message);
    this.name = "GatewayError";
    this.status = status;
    this.phase = phase;
  }
}

export class GatewayClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    const text = await res.text();
    let body: unknown = null;
    if (text) {
      try {
        body = JSON.parse(text);
      } catch {
        body = text;
      }
    }
    if (!res.ok) {
      const doc = (typeof body === "object" && body !== null ? body : {}) as {
        error?: string;
        phase?: string;
      };
      throw new GatewayError(res.status, doc.error ?? `HTTP ${res.status}`, doc.phase);
    }
    return body as T;
  }

  tree(): Promise<TreeSnapshot> {
    return this.request("/tree");
  }

  stats(): Promise<GatewayStats> {
    return this.request("/stats");
  }

  schema(): Promise<SchemaDoc> {
    return this.request("/schema");
  }

  openapiDoc(): Promise<Record<string, unknown>> {
    return this.request("/openapi.json");
  }

  diff(from: number, to: number): Promise<SchemaDiff> {
    return this.request(`/diff?from=${from}&to=${to}`);
  }

  baseline(): Promise<{ phase: Phase; schema_version: number }> {
    return this.request("/baseline", { method: "POST" });
  }

  reset(): Promise<{ phase: Phase }> {
    return this.request("/reset", { method: "POST" });
  }

  setPhase(target: string): Promise<{ phase: Phase }> {
    return this.request("/phase", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ target }),
    });
  }

  ingest(
    records: unknown | unknown[],
  ): Promise<{ ingested: number; phase: Phase; verdicts: Verdict[] }> {
    return this.request("/ingest", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(records),
    });
  }
}

/** Map the /schema serialization onto the snapshot shape the tree view renders. */
export function schemaToSnapshot(node: SchemaNode): TreeSnapshot {
  const view: TreeSnapshot = {
    segment: node.segment,
    children: Object.keys(node.children)
      .sort()
      .map((label) => schemaToSnapshot(node.children[label]!)),
  };
  if (node.hit_count) view.hit_count = node.hit_count;
  if (node.placeholder) {
    view.placeholder = {
      type: node.placeholder.inferred_type,
      min_len: node.placeholder.min_len,
      max_len: node.placeholder.max_len,
      is_random: node.placeholder.is_random,
      merged_count: node.placeholder.merged_count,
    };
  }
  if (node.meta) {
    view.methods = Object.keys(node.meta.methods).sort();
    const params = Object.keys(node.meta.query_params).sort();
    if (params.length) view.query_params = params;
    view.request_count = node.meta.request_count;
  }
  return view;
}
