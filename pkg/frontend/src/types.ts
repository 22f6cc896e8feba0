/** Wire types for the gateway HTTP API the console consumes. */

export type Phase = "training" | "detection" | "updating";

/** Placeholder facts rendered as a badge: type, length bounds, randomness. */
export interface PlaceholderBadge {
  type: string;
  min_len: number;
  max_len: number;
  is_random: boolean;
  merged_count: number;
}

/**
 * One tree node as the console renders it. Both the live /tree snapshot
 * and the reduced /schema tree are mapped into this shape.
 */
export interface TreeSnapshot {
  segment: string;
  hit_count?: number;
  placeholder?: PlaceholderBadge;
  methods?: string[];
  query_params?: string[];
  request_count?: number;
  children: TreeSnapshot[];
}

export interface EventBusStats {
  subscribers: number;
  published: number;
  dropped: number;
}

export interface GatewayStats {
  phase: Phase;
  schema_version: number | null;
  tree_requests: number;
  delta_requests: number;
  counters: Record<string, number>;
  by_reason: Record<string, number>;
  latency: Record<string, number>;
  kernel: string;
  events: EventBusStats;
}

export interface VerdictReason {
  code: string;
  location: string;
  token: string;
  detail?: string;
}

export interface Verdict {
  outcome: "accepted" | "anomalous";
  stage: "structural" | "content" | "none";
  reasons: VerdictReason[];
  score: number | null;
  schema_version: number | null;
}

/** A verdict as it arrives over /events: bus-assigned seq, client-stamped time. */
export interface VerdictEvent extends Verdict {
  seq: number;
  receivedAt: number;
}

export interface SchemaDiff {
  from_version: number;
  to_version: number;
  added_paths: string[];
  removed_paths: string[];
  changed_operations: Array<Record<string, unknown>>;
  text: string;
}

/** /schema payload: the reduced tree in its full serialized form. */
export interface SchemaDoc {
  version: number;
  created_at: number;
  source_request_count: number;
  merge_threshold: number;
  root: SchemaNode;
}

export interface SchemaNode {
  segment: string;
  hit_count: number;
  children: Record<string, SchemaNode>;
  meta?: {
    methods: Record<string, number>;
    query_params: Record<string, unknown>;
    observed_headers: Record<string, number>;
    request_count: number;
  };
  placeholder?: {
    name: string;
    inferred_type: string;
    min_len: number;
    max_len: number;
    is_random: boolean;
    merged_count: number;
    examples: string[];
    class_counts: Record<string, number>;
    signatures: string[];
  };
}
