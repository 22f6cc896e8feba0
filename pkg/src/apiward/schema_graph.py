"""Structural validation: walk requests through the reduced schema graph.

The reduced schema becomes a directed graph whose segment/placeholder
subgraph mirrors the tree, with method and query-parameter nodes
attached to endpoint nodes. Validation locates the first segment among
the root's children (breadth-first, static labels preferred), then walks
the remaining segments depth-first with backtracking across placeholder
branches. The first failing predicate provides the verdict's reason.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .api_tree import (
    ALNUM_RE,
    EMAIL_RE,
    HEX_RE,
    INT_RE,
    UUID_RE,
    EndpointMeta,
    TreeNode,
)
from .reducer import CLASS_ORDER, WORD_RE, PlaceholderMeta, ReducedSchema, SegmentClass
from .request_model import ParsedRequest


class ReasonCode(str, Enum):
    """Why a request was flagged; each code has one trigger condition."""

    UNKNOWN_SEGMENT = "UnknownSegment"
    TYPE_MISMATCH = "TypeMismatch"
    LENGTH_OUT_OF_RANGE = "LengthOutOfRange"
    UNDOCUMENTED_QUERY_PARAM = "UndocumentedQueryParam"
    UNDOCUMENTED_METHOD = "UndocumentedMethod"
    UNKNOWN_ROOT_PATH = "UnknownRootPath"
    MALFORMED_URL = "MalformedUrl"
    CONTENT_RECONSTRUCTION_ERROR = "ContentReconstructionError"


@dataclass
class Reason:
    """One reason with the path prefix and token that triggered it."""

    code: ReasonCode
    location: str = ""
    token: str = ""
    detail: str = ""

    def to_dict(self) -> dict:
        data = {"code": self.code.value, "location": self.location, "token": self.token}
        if self.detail:
            data["detail"] = self.detail
        return data


@dataclass
class Verdict:
    """Outcome of classifying one request."""

    outcome: str  # "accepted" | "anomalous"
    stage: str = "none"  # "structural" | "content" | "none"
    reasons: list[Reason] = field(default_factory=list)
    score: Optional[float] = None
    schema_version: Optional[int] = None

    @property
    def is_anomalous(self) -> bool:
        return self.outcome == "anomalous"

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "stage": self.stage,
            "reasons": [r.to_dict() for r in self.reasons],
            "score": self.score,
            "schema_version": self.schema_version,
        }


@dataclass
class TolerancePolicy:
    """Knobs controlling how forgiving structural validation is."""

    length_slack: float = 0.5
    allow_extra_query: bool = False
    strict_types: bool = True

    def __post_init__(self) -> None:
        if self.length_slack < 0:
            raise ValueError("length_slack must be >= 0")


@dataclass
class GraphNode:
    """One graph vertex: a segment, placeholder, method or query param."""

    id: int
    kind: str  # "segment" | "placeholder" | "method" | "query"
    label: str
    placeholder: Optional[PlaceholderMeta] = None
    endpoint: Optional[EndpointMeta] = None
    seg_children: dict[str, "GraphNode"] = field(default_factory=dict)
    attachments: list["GraphNode"] = field(default_factory=list)

    @property
    def is_placeholder(self) -> bool:
        return self.placeholder is not None


@dataclass
class SchemaGraph:
    """Immutable validation graph derived from one ReducedSchema."""

    root: GraphNode
    nodes: list[GraphNode]
    edges: list[tuple[int, int]]
    version: int

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)


ALNUM_LOOSE_RE = re.compile(r"[A-Za-z0-9]{8,}\Z")

_PATTERNS = {
    SegmentClass.INTEGER: INT_RE,
    SegmentClass.UUID: UUID_RE,
    SegmentClass.EMAIL: EMAIL_RE,
    SegmentClass.HEX: HEX_RE,
    SegmentClass.ALNUM_RANDOM: ALNUM_LOOSE_RE,
    SegmentClass.STATIC: WORD_RE,
}


def pattern_ok(cls: SegmentClass, value: str) -> bool:
    """Does `value` satisfy the shape of segment class `cls`?

    Validation is deliberately looser than learning-time classification:
    a random-token class accepts any long alphanumeric string without
    re-running entropy tests, and other_dynamic accepts anything, so
    values resembling the training population are never rejected.
    """
    if cls == SegmentClass.OTHER_DYNAMIC:
        return True
    return bool(_PATTERNS[cls].match(value))


def placeholder_mismatch(
    meta: PlaceholderMeta, value: str, policy: TolerancePolicy
) -> Optional[ReasonCode]:
    """First failing predicate for `value` against a placeholder, or None.

    The value matches when at least one class this placeholder has
    absorbed (or its inferred type) accepts it and its length falls in
    the slack-widened [min_len, max_len] band. Pattern is checked before
    length, so TypeMismatch wins when both fail.
    """
    if policy.strict_types:
        classes = {meta.inferred_type} | meta.observed_classes
        if not any(pattern_ok(c, value) for c in classes):
            return ReasonCode.TYPE_MISMATCH
    n = len(value)
    lo = meta.min_len * (1.0 - policy.length_slack)
    hi = meta.max_len * (1.0 + policy.length_slack)
    if not lo <= n <= hi:
        return ReasonCode.LENGTH_OUT_OF_RANGE
    return None


def build_graph(schema: ReducedSchema) -> SchemaGraph:
    """Derive the validation graph from a reduced schema."""
    nodes: list[GraphNode] = []
    edges: list[tuple[int, int]] = []

    def make(kind: str, label: str, **kw) -> GraphNode:
        node = GraphNode(id=len(nodes), kind=kind, label=label, **kw)
        nodes.append(node)
        return node

    def walk(tnode: TreeNode) -> GraphNode:
        kind = "placeholder" if tnode.placeholder is not None else "segment"
        gnode = make(kind, tnode.segment, placeholder=tnode.placeholder)
        if tnode.meta is not None:
            gnode.endpoint = tnode.meta
            for method in sorted(tnode.meta.methods):
                mnode = make("method", method)
                gnode.attachments.append(mnode)
                edges.append((gnode.id, mnode.id))
            for param in sorted(tnode.meta.query_params):
                qnode = make("query", param)
                gnode.attachments.append(qnode)
                edges.append((gnode.id, qnode.id))
        for label in sorted(tnode.children):
            child = walk(tnode.children[label])
            gnode.seg_children[label] = child
            edges.append((gnode.id, child.id))
        return gnode

    root = walk(schema.root)
    return SchemaGraph(root=root, nodes=nodes, edges=edges, version=schema.version)


def _ordered_candidates(node: GraphNode, seg: str) -> list[GraphNode]:
    """Children worth trying for one segment, in preference order.

    Exact static label first, then placeholders from most specific type
    to other_dynamic; label is the final tie-break for determinism.
    """
    out: list[GraphNode] = []
    exact = node.seg_children.get(seg)
    if exact is not None and not exact.is_placeholder:
        out.append(exact)
    phs = [c for c in node.seg_children.values() if c.is_placeholder]
    phs.sort(key=lambda c: (CLASS_ORDER[c.placeholder.inferred_type], c.label))
    out.extend(phs)
    return out


def locate_root(
    graph: SchemaGraph, req: ParsedRequest, policy: Optional[TolerancePolicy] = None
) -> Optional[GraphNode]:
    """Breadth-first root location: match the first segment among the
    root's children. Returns the preferred match or None (UnknownRootPath).
    """
    if policy is None:
        policy = TolerancePolicy()
    if not req.segments:
        return graph.root
    for cand in _ordered_candidates(graph.root, req.segments[0]):
        if not cand.is_placeholder:
            return cand
        if placeholder_mismatch(cand.placeholder, req.segments[0], policy) is None:
            return cand
    return None


def _check_terminal(
    node: GraphNode, req: ParsedRequest, policy: TolerancePolicy, prefix: str
) -> Optional[Reason]:
    """Method and query checks once the path is fully consumed."""
    if node.endpoint is None or req.method not in node.endpoint.methods:
        return Reason(ReasonCode.UNDOCUMENTED_METHOD, prefix, req.method)
    if not policy.allow_extra_query:
        documented = node.endpoint.query_params
        for key, _value in req.query:
            if key not in documented:
                return Reason(ReasonCode.UNDOCUMENTED_QUERY_PARAM, prefix, key)
    return None


def validate(
    graph: SchemaGraph, req: ParsedRequest, policy: Optional[TolerancePolicy] = None
) -> Verdict:
    """Depth-first structural validation with backtracking.

    Accepts iff some root-to-node path of the request's length matches
    every segment and passes the terminal method/query checks. On
    rejection the verdict carries the first failure encountered in
    preference order.
    """
    if policy is None:
        policy = TolerancePolicy()
    segments = req.segments
    first_failure: list[Reason] = []

    def note(reason: Reason) -> None:
        if not first_failure:
            first_failure.append(reason)

    def dfs(node: GraphNode, i: int, prefix: str) -> bool:
        if i == len(segments):
            reason = _check_terminal(node, req, policy, prefix or "/")
            if reason is None:
                return True
            note(reason)
            return False
        seg = segments[i]
        candidates = _ordered_candidates(node, seg)
        ph_failure: Optional[ReasonCode] = None
        for cand in candidates:
            if cand.is_placeholder:
                code = placeholder_mismatch(cand.placeholder, seg, policy)
                if code is not None:
                    if ph_failure is None:
                        ph_failure = code
                    continue
            if dfs(cand, i + 1, prefix + "/" + cand.label):
                return True
        if i == 0:
            note(Reason(ReasonCode.UNKNOWN_ROOT_PATH, "/", seg))
        elif ph_failure is not None:
            note(Reason(ph_failure, prefix or "/", seg))
        elif not candidates:
            note(Reason(ReasonCode.UNKNOWN_SEGMENT, prefix or "/", seg))
        return False

    if dfs(graph.root, 0, ""):
        return Verdict(outcome="accepted", stage="none", schema_version=graph.version)
    if not first_failure:
        # Every branch failed deeper in; the note() calls above recorded
        # the earliest of those, so reaching here means the walk never
        # started (no segments and no root endpoint is covered by
        # _check_terminal). Defensive fallback:
        first_failure.append(
            Reason(ReasonCode.UNKNOWN_SEGMENT, "/", segments[0] if segments else "")
        )
    return Verdict(
        outcome="anomalous",
        stage="structural",
        reasons=first_failure,
        schema_version=graph.version,
    )
