"""Reduce phase: collapse dynamic sibling groups into typed placeholders.

Two rules find merge groups among the children of a node:

* Rule A -- at least `k` siblings whose labels share one non-static
  segment class (integers, UUIDs, emails, hex blobs, random tokens).
* Rule B -- at least `k` word-like siblings (labels no pattern class
  claims) whose subtrees are pairwise structurally identical (same child
  labels, methods and query keys). This catches dynamic values that look
  like ordinary words (personal names, slugs). Typed values merge only
  through Rule A: letting them join signature groups would make the
  result depend on arrival order.

Each group is replaced by a single placeholder node whose subtree is the
recursive merge of the members' subtrees. Reduction is idempotent, and
incremental updates (merge new traffic, re-reduce) produce the same
topology as reducing everything in one batch.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .api_tree import ApiTree, TreeNode, char_entropy, classify_scalar

DEFAULT_MERGE_THRESHOLD = 3

# Entropy (bits per character) above which a mixed alphanumeric token is
# considered machine-generated rather than a word.
RANDOM_ENTROPY_BITS = 3.0

# Fraction of observations that must be distinct for a placeholder to be
# flagged random (IDs and tokens virtually never repeat).
RANDOM_DISTINCT_RATIO = 0.9

# Labels allowed to join a Rule B group: word-like names. Anything with
# exotic characters stays concrete so replaying the training set can
# never be rejected by a placeholder's pattern checks.
WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.~-]*\Z")


class SegmentClass(str, Enum):
    """Structural type of a path segment."""

    STATIC = "static"
    INTEGER = "integer"
    UUID = "uuid"
    EMAIL = "email"
    HEX = "hex"
    ALNUM_RANDOM = "alnum_random"
    OTHER_DYNAMIC = "other_dynamic"


# Classes Rule A groups on, and the order placeholder siblings are
# numbered in (most specific first; static/other only arise via Rule B
# majorities and ties).
TYPED_CLASSES = (
    SegmentClass.INTEGER,
    SegmentClass.UUID,
    SegmentClass.EMAIL,
    SegmentClass.HEX,
    SegmentClass.ALNUM_RANDOM,
)

CLASS_ORDER = {
    SegmentClass.INTEGER: 0,
    SegmentClass.UUID: 1,
    SegmentClass.EMAIL: 2,
    SegmentClass.HEX: 3,
    SegmentClass.ALNUM_RANDOM: 4,
    SegmentClass.STATIC: 5,
    SegmentClass.OTHER_DYNAMIC: 6,
}


def classify_segment(value: str) -> SegmentClass:
    """Total, deterministic classification of one segment value."""
    scalar = classify_scalar(value)
    if scalar == "integer":
        return SegmentClass.INTEGER
    if scalar == "uuid":
        return SegmentClass.UUID
    if scalar == "email":
        return SegmentClass.EMAIL
    if scalar == "hex":
        return SegmentClass.HEX
    if (
        scalar == "alnum"
        and len(value) >= 8
        and char_entropy(value) > RANDOM_ENTROPY_BITS
    ):
        return SegmentClass.ALNUM_RANDOM
    return SegmentClass.STATIC


@dataclass
class PlaceholderMeta:
    """Everything known about one placeholder and the values it absorbed."""

    name: str
    inferred_type: SegmentClass
    class_counts: dict[str, int] = field(default_factory=dict)
    examples: list[str] = field(default_factory=list)
    min_len: int = 0
    max_len: int = 0
    is_random: bool = False
    merged_count: int = 0
    # subtree signatures (repr form) of the word groups folded in; a
    # static placeholder absorbs a new word only when the word's subtree
    # matches one of these, not the merged union of all of them
    signatures: list[str] = field(default_factory=list)

    @property
    def observed_classes(self) -> set[SegmentClass]:
        return {SegmentClass(c) for c, n in self.class_counts.items() if n > 0}

    def absorb_label(self, label: str, weight: int) -> None:
        cls = classify_segment(label).value
        self.class_counts[cls] = self.class_counts.get(cls, 0) + weight

    def merge_counts(self, other: "PlaceholderMeta") -> None:
        """Fold another placeholder's absorption tallies into this one."""
        for cls, n in other.class_counts.items():
            self.class_counts[cls] = self.class_counts.get(cls, 0) + n
        self.signatures = sorted(set(self.signatures) | set(other.signatures))

    def copy(self) -> "PlaceholderMeta":
        return PlaceholderMeta(
            name=self.name,
            inferred_type=self.inferred_type,
            class_counts=dict(self.class_counts),
            examples=list(self.examples),
            min_len=self.min_len,
            max_len=self.max_len,
            is_random=self.is_random,
            merged_count=self.merged_count,
            signatures=list(self.signatures),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inferred_type": self.inferred_type.value,
            "class_counts": dict(sorted(self.class_counts.items())),
            "examples": list(self.examples),
            "min_len": self.min_len,
            "max_len": self.max_len,
            "is_random": self.is_random,
            "merged_count": self.merged_count,
            "signatures": list(self.signatures),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlaceholderMeta":
        return cls(
            name=data["name"],
            inferred_type=SegmentClass(data["inferred_type"]),
            class_counts=dict(data["class_counts"]),
            examples=list(data["examples"]),
            min_len=data["min_len"],
            max_len=data["max_len"],
            is_random=data["is_random"],
            merged_count=data["merged_count"],
            signatures=list(data.get("signatures", [])),
        )


@dataclass
class ReducedSchema:
    """An immutable generalized schema produced by reduction."""

    root: TreeNode
    version: int
    created_at: float
    source_request_count: int
    merge_threshold: int = DEFAULT_MERGE_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "created_at": self.created_at,
            "source_request_count": self.source_request_count,
            "merge_threshold": self.merge_threshold,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReducedSchema":
        return cls(
            root=TreeNode.from_dict(data["root"]),
            version=data["version"],
            created_at=data["created_at"],
            source_request_count=data["source_request_count"],
            merge_threshold=data["merge_threshold"],
        )


def _majority_type(class_counts: dict[str, int]) -> SegmentClass:
    """Value-weighted majority class; ties resolve to the loosest type."""
    if not class_counts:
        return SegmentClass.OTHER_DYNAMIC
    best = max(class_counts.values())
    winners = [c for c, n in class_counts.items() if n == best]
    if len(winners) == 1:
        return SegmentClass(winners[0])
    return SegmentClass.OTHER_DYNAMIC


def _child_key(node: TreeNode):
    if node.placeholder is not None:
        return ("ph", node.placeholder.inferred_type.value)
    return ("seg", node.segment)


def subtree_signature(node: TreeNode):
    """Hashable structural fingerprint of a subtree.

    Two subtrees get equal signatures iff they have the same child
    labels (placeholders compare by type), methods and query-parameter
    keys, recursively. Hit counts and value statistics are ignored.
    """
    kids = tuple(
        sorted(
            (_child_key(child), subtree_signature(child))
            for child in node.children.values()
        )
    )
    meta = None
    if node.meta is not None:
        meta = (
            tuple(sorted(node.meta.methods)),
            tuple(sorted(node.meta.query_params)),
        )
    return (kids, meta)


def _rule_b_eligible(label: str) -> bool:
    return bool(WORD_RE.match(label)) and classify_segment(label) == SegmentClass.STATIC


def detect_dynamic_siblings(node: TreeNode, k: int = DEFAULT_MERGE_THRESHOLD) -> list[list[str]]:
    """Find merge groups among `node`'s concrete children.

    Returns sorted label lists: first Rule A groups (shared non-static
    class), then Rule B groups (structurally identical subtrees) over
    whatever Rule A left behind.
    """
    if k < 2:
        raise ValueError("merge threshold must be >= 2")
    concrete = [c for c in node.children.values() if not c.is_placeholder]
    groups: list[list[str]] = []
    consumed: set[str] = set()

    by_class: dict[SegmentClass, list[str]] = {}
    for child in concrete:
        cls = classify_segment(child.segment)
        if cls in TYPED_CLASSES:
            by_class.setdefault(cls, []).append(child.segment)
    for cls in TYPED_CLASSES:
        labels = by_class.get(cls, [])
        if len(labels) >= k:
            groups.append(sorted(labels))
            consumed.update(labels)

    by_sig: dict[tuple, list[str]] = {}
    for child in concrete:
        if child.segment in consumed or not _rule_b_eligible(child.segment):
            continue
        by_sig.setdefault(subtree_signature(child), []).append(child.segment)
    for labels in by_sig.values():
        if len(labels) >= k:
            groups.append(sorted(labels))

    groups.sort(key=lambda g: g[0])
    return groups


def _new_placeholder(members: list[TreeNode], cap: int) -> TreeNode:
    """Merge member nodes into a fresh placeholder node."""
    ph = members[0].copy()
    meta = PlaceholderMeta(name="", inferred_type=SegmentClass.OTHER_DYNAMIC)
    meta.absorb_label(members[0].segment, members[0].hit_count)
    for m in members[1:]:
        ph.merge(m)
        meta.absorb_label(m.segment, m.hit_count)
    meta.inferred_type = _majority_type(meta.class_counts)
    if meta.inferred_type == SegmentClass.STATIC:
        # all members of a word group share one signature by construction
        meta.signatures = [repr(subtree_signature(members[0]))]
    ph.placeholder = meta
    ph.segment = ""
    return ph


def _absorb(ph: TreeNode, child: TreeNode) -> None:
    """Fold a concrete child into an existing placeholder node."""
    assert ph.placeholder is not None
    ph.merge(child)
    ph.placeholder.absorb_label(child.segment, child.hit_count)
    ph.placeholder.inferred_type = _majority_type(ph.placeholder.class_counts)


def _can_absorb(ph: TreeNode, child: TreeNode) -> bool:
    """Existing placeholders keep absorbing matching values at any count.

    Mirrors group formation exactly: same typed class into a typed
    placeholder; a word whose subtree matches one of the signatures the
    placeholder's groups were built from into a word (static)
    placeholder. The placeholder's own merged subtree is the union of
    those groups, so comparing against it directly would reject words a
    from-scratch batch reduction merges; anything looser would fuse
    values batch reduction keeps separate.
    """
    assert ph.placeholder is not None
    cls = classify_segment(child.segment)
    if cls in TYPED_CLASSES and cls == ph.placeholder.inferred_type:
        return True
    if ph.placeholder.inferred_type == SegmentClass.STATIC and _rule_b_eligible(
        child.segment
    ):
        sig = subtree_signature(child)
        if repr(sig) in ph.placeholder.signatures:
            return True
        # placeholders predating signature tracking fall back to the
        # merged-subtree comparison
        if not ph.placeholder.signatures and sig == subtree_signature(ph):
            return True
    return False


def _reduce_node(node: TreeNode, k: int, min_hit_fraction: float, cap: int) -> None:
    """Reduce one node's children in place, bottom-up."""
    for label in sorted(node.children):
        _reduce_node(node.children[label], k, min_hit_fraction, cap)

    if min_hit_fraction > 0.0 and node.hit_count > 0:
        cutoff = min_hit_fraction * node.hit_count
        for label in [
            lbl
            for lbl, child in node.children.items()
            if not child.is_placeholder and child.hit_count < cutoff
        ]:
            del node.children[label]

    # Run absorb/group/coalesce to a fixpoint: each round either shrinks
    # the child set or changes nothing, so this terminates, and a second
    # reduce pass finds nothing left to do (idempotence).
    ph_serial = 0
    while True:
        changed = False
        placeholders = [c for c in node.children.values() if c.is_placeholder]

        # Absorption: placeholders soak up matching concrete siblings.
        if placeholders:
            for label in sorted(node.children):
                child = node.children.get(label)
                if child is None or child.is_placeholder:
                    continue
                for ph in placeholders:
                    if _can_absorb(ph, child):
                        _absorb(ph, child)
                        del node.children[label]
                        _reduce_node(ph, k, min_hit_fraction, cap)
                        changed = True
                        break

        # New merge groups among whatever is still concrete.
        for labels in detect_dynamic_siblings(node, k):
            members = [node.children.pop(lbl) for lbl in labels]
            ph = _new_placeholder(members, cap)
            # provisional key, renamed later; must not collide with a
            # placeholder left by an earlier reduce pass over this node
            while f"\x00ph{ph_serial}" in node.children:
                ph_serial += 1
            ph.segment = f"\x00ph{ph_serial}"
            ph_serial += 1
            node.children[ph.segment] = ph
            _reduce_node(ph, k, min_hit_fraction, cap)
            changed = True

        # Coalesce placeholders that ended up with the same inferred type.
        by_type: dict[SegmentClass, TreeNode] = {}
        for ph in (c for c in list(node.children.values()) if c.is_placeholder):
            t = ph.placeholder.inferred_type
            keeper = by_type.get(t)
            if keeper is None:
                by_type[t] = ph
                continue
            keeper.merge(ph)  # TreeNode.merge folds the placeholder tallies too
            del node.children[ph.segment]
            _reduce_node(keeper, k, min_hit_fraction, cap)
            changed = True

        if not changed:
            break


def _finalize_meta(node: TreeNode) -> None:
    """Derive placeholder metadata from the node's accumulated stats."""
    for child in node.children.values():
        _finalize_meta(child)
    meta = node.placeholder
    if meta is None:
        return
    stats = node.value_stats
    meta.inferred_type = _majority_type(meta.class_counts)
    meta.examples = list(stats.examples)
    meta.min_len = stats.min_len
    meta.max_len = stats.max_len
    meta.merged_count = stats.distinct_estimate
    ratio = stats.distinct_estimate / stats.count if stats.count else 0.0
    meta.is_random = (
        stats.mean_entropy > RANDOM_ENTROPY_BITS and ratio > RANDOM_DISTINCT_RATIO
    )


def _sanitize(label: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_]", "_", label.strip("{}")).strip("_")
    return cleaned or "root"


def _assign_names(node: TreeNode) -> None:
    """Canonical placeholder naming: a pure function of final topology.

    Placeholder siblings are ordered by type and named
    "{<parent>_param_<i>}", so batch and incremental reductions that
    agree on topology also agree on names.
    """
    phs = sorted(
        (c for c in node.children.values() if c.is_placeholder),
        key=lambda c: CLASS_ORDER[c.placeholder.inferred_type],
    )
    base = _sanitize(node.segment)
    # Detach every placeholder before re-keying: renaming in place can
    # land on a sibling placeholder's current key (e.g. a fresh group
    # whose type orders before an existing "{base}_param_0") and silently
    # overwrite it.
    for ph in phs:
        del node.children[ph.segment]
    serial = 0
    for ph in phs:
        name = f"{{{base}_param_{serial}}}"
        while name in node.children:  # concrete sibling owns this label
            serial += 1
            name = f"{{{base}_param_{serial}}}"
        ph.segment = name
        ph.placeholder.name = name
        node.children[name] = ph
        serial += 1
    for child in list(node.children.values()):
        _assign_names(child)


def reduce_tree(
    tree: ApiTree,
    k: int = DEFAULT_MERGE_THRESHOLD,
    min_hit_fraction: float = 0.0,
    version: int = 1,
) -> ReducedSchema:
    """Reduce a training tree into a generalized schema.

    The input tree is left untouched; the returned schema owns a reduced
    copy. `min_hit_fraction` (default off) drops children seen in less
    than that fraction of their parent's traffic before grouping.
    """
    if k < 2:
        raise ValueError("merge threshold must be >= 2")
    root = tree.root.copy()
    _reduce_node(root, k, min_hit_fraction, tree.reservoir_cap)
    _finalize_meta(root)
    _assign_names(root)
    return ReducedSchema(
        root=root,
        version=version,
        created_at=time.time(),
        source_request_count=tree.total_requests,
        merge_threshold=k,
    )


def update_schema(
    schema: ReducedSchema,
    delta: ApiTree,
    k: Optional[int] = None,
    min_hit_fraction: float = 0.0,
) -> ReducedSchema:
    """Fold new traffic into an existing schema without full retraining.

    Equivalent to merging the delta into the schema's tree and reducing
    again: existing placeholders absorb matching new values, new groups
    form where enough fresh siblings appeared, and the version bumps.
    """
    if k is None:
        k = schema.merge_threshold
    work = ApiTree(delta.reservoir_cap)
    work.root = schema.root.copy()
    work.total_requests = schema.source_request_count
    work.merge(delta)
    return reduce_tree(
        work, k, min_hit_fraction=min_hit_fraction, version=schema.version + 1
    )
