"""Map phase: accumulate parsed requests into a hierarchical path tree.

Each node is one path segment; terminal nodes carry method/query/header
metadata. Nodes also track statistics over their observed labels so the
reducer can later decide which sibling groups are dynamic and what type
a merged placeholder should take.
"""

from __future__ import annotations

import bisect
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Optional, TYPE_CHECKING

from ._kernels import fnv1a64
from .request_model import ParsedRequest

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .reducer import PlaceholderMeta

DEFAULT_RESERVOIR_CAP = 16

# Scalar classes used for value statistics. The reducer builds its
# segment taxonomy on top of these.
SCALAR_CLASSES = ("integer", "uuid", "email", "hex", "alpha", "alnum", "other")

INT_RE = re.compile(r"[0-9]+\Z")
UUID_RE = re.compile(
    r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}\Z"
)
EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\Z")
HEX_RE = re.compile(r"[0-9a-fA-F]{8,}\Z")
ALPHA_RE = re.compile(r"[A-Za-z]+\Z")
ALNUM_RE = re.compile(r"[A-Za-z0-9]+\Z")


def classify_scalar(value: str) -> str:
    """Assign one scalar class to a string value.

    Precedence runs most-specific first, so "12345678" is integer (not
    hex) and a UUID is never just hex-with-dashes.
    """
    if INT_RE.match(value):
        return "integer"
    if UUID_RE.match(value):
        return "uuid"
    if EMAIL_RE.match(value):
        return "email"
    if HEX_RE.match(value):
        return "hex"
    if ALPHA_RE.match(value):
        return "alpha"
    if ALNUM_RE.match(value):
        return "alnum"
    return "other"


def char_entropy(value: str) -> float:
    """Shannon entropy (bits) of the character distribution of `value`."""
    if not value:
        return 0.0
    n = len(value)
    return -sum(
        (c / n) * math.log2(c / n) for c in Counter(value).values()
    )


_MASK64 = (1 << 64) - 1


def _mix64(h: int) -> int:
    """splitmix64 finalizer. KMV estimation reads order statistics near
    zero, and raw FNV output is visibly non-uniform there for short keys;
    one round of strong bit mixing restores the uniformity the estimator
    assumes."""
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return h ^ (h >> 31)


class DistinctSketch:
    """Distinct-value counter: exact up to a limit, then KMV bottom-k.

    Small populations (the common case for path-segment labels) are
    counted exactly from a hash set; past EXACT_LIMIT the sketch keeps
    only the K smallest 64-bit hashes and estimates cardinality as
    (K-1) * 2^64 / kth_smallest. Deterministic and mergeable.
    """

    EXACT_LIMIT = 1024
    K = 256
    _SPACE = 2**64

    def __init__(self) -> None:
        self._exact: Optional[set[int]] = set()
        self._kmv: list[int] = []  # sorted ascending, unique

    def add(self, value: str) -> None:
        self.add_hash(_mix64(fnv1a64(value.encode("utf-8"))))

    def add_hash(self, h: int) -> None:
        if self._exact is not None:
            self._exact.add(h)
            if len(self._exact) > self.EXACT_LIMIT:
                self._to_kmv()
            return
        kmv = self._kmv
        if len(kmv) == self.K and h >= kmv[-1]:
            return
        i = bisect.bisect_left(kmv, h)
        if i < len(kmv) and kmv[i] == h:
            return
        kmv.insert(i, h)
        if len(kmv) > self.K:
            kmv.pop()

    def _to_kmv(self) -> None:
        assert self._exact is not None
        self._kmv = sorted(self._exact)[: self.K]
        self._exact = None

    def estimate(self) -> int:
        if self._exact is not None:
            return len(self._exact)
        if len(self._kmv) < self.K:
            return len(self._kmv)
        return int(round((self.K - 1) * self._SPACE / self._kmv[-1]))

    def merge(self, other: "DistinctSketch") -> None:
        if self._exact is not None and other._exact is not None:
            self._exact |= other._exact
            if len(self._exact) > self.EXACT_LIMIT:
                self._to_kmv()
            return
        # At least one side is approximate, so the union must be too.
        if self._exact is not None:
            self._to_kmv()
        for h in other._exact if other._exact is not None else other._kmv:
            self.add_hash(h)

    def to_dict(self) -> dict:
        if self._exact is not None:
            return {"mode": "exact", "hashes": sorted(self._exact)}
        return {"mode": "kmv", "hashes": self._kmv}

    @classmethod
    def from_dict(cls, data: dict) -> "DistinctSketch":
        sketch = cls()
        if data["mode"] == "exact":
            sketch._exact = set(data["hashes"])
        else:
            sketch._exact = None
            sketch._kmv = list(data["hashes"])
        return sketch


class ValueStats:
    """Bounded statistics over a population of observed string values."""

    __slots__ = (
        "cap",
        "count",
        "examples",
        "min_len",
        "max_len",
        "type_counts",
        "entropy_sum",
        "sketch",
    )

    def __init__(self, cap: int = DEFAULT_RESERVOIR_CAP) -> None:
        self.cap = cap
        self.count = 0
        self.examples: list[str] = []  # first distinct values, bounded
        self.min_len = 0
        self.max_len = 0
        self.type_counts: dict[str, int] = {}
        self.entropy_sum = 0.0
        self.sketch = DistinctSketch()

    def add(self, value: str) -> None:
        n = len(value)
        if self.count == 0:
            self.min_len = self.max_len = n
        else:
            self.min_len = min(self.min_len, n)
            self.max_len = max(self.max_len, n)
        self.count += 1
        cls = classify_scalar(value)
        self.type_counts[cls] = self.type_counts.get(cls, 0) + 1
        self.entropy_sum += char_entropy(value)
        self.sketch.add(value)
        if len(self.examples) < self.cap and value not in self.examples:
            self.examples.append(value)

    @property
    def mean_entropy(self) -> float:
        return self.entropy_sum / self.count if self.count else 0.0

    @property
    def distinct_estimate(self) -> int:
        return self.sketch.estimate()

    def majority_class(self) -> str:
        """Most frequent scalar class; ties broken as 'other'."""
        if not self.type_counts:
            return "other"
        best = max(self.type_counts.values())
        winners = [c for c, n in self.type_counts.items() if n == best]
        return winners[0] if len(winners) == 1 else "other"

    def merge(self, other: "ValueStats") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.min_len, self.max_len = other.min_len, other.max_len
        else:
            self.min_len = min(self.min_len, other.min_len)
            self.max_len = max(self.max_len, other.max_len)
        self.count += other.count
        for cls, n in other.type_counts.items():
            self.type_counts[cls] = self.type_counts.get(cls, 0) + n
        self.entropy_sum += other.entropy_sum
        self.sketch.merge(other.sketch)
        for ex in other.examples:
            if len(self.examples) >= self.cap:
                break
            if ex not in self.examples:
                self.examples.append(ex)

    def copy(self) -> "ValueStats":
        dup = ValueStats(self.cap)
        dup.merge(self)
        return dup

    def to_dict(self) -> dict:
        return {
            "cap": self.cap,
            "count": self.count,
            "examples": list(self.examples),
            "min_len": self.min_len,
            "max_len": self.max_len,
            "type_counts": dict(sorted(self.type_counts.items())),
            "entropy_sum": self.entropy_sum,
            "sketch": self.sketch.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValueStats":
        stats = cls(data["cap"])
        stats.count = data["count"]
        stats.examples = list(data["examples"])
        stats.min_len = data["min_len"]
        stats.max_len = data["max_len"]
        stats.type_counts = dict(data["type_counts"])
        stats.entropy_sum = data["entropy_sum"]
        stats.sketch = DistinctSketch.from_dict(data["sketch"])
        return stats


class EndpointMeta:
    """What we know about requests terminating at one tree node."""

    __slots__ = ("methods", "query_params", "observed_headers", "request_count")

    def __init__(self) -> None:
        self.methods: dict[str, int] = {}
        self.query_params: dict[str, ValueStats] = {}
        self.observed_headers: dict[str, int] = {}
        self.request_count = 0

    def record(self, req: ParsedRequest, reservoir_cap: int) -> None:
        self.request_count += 1
        self.methods[req.method] = self.methods.get(req.method, 0) + 1
        for key, value in req.query:
            stats = self.query_params.get(key)
            if stats is None:
                stats = self.query_params[key] = ValueStats(reservoir_cap)
            stats.add(value)
        for name, _value in req.headers:
            name = name.lower()
            self.observed_headers[name] = self.observed_headers.get(name, 0) + 1

    def merge(self, other: "EndpointMeta") -> None:
        self.request_count += other.request_count
        for m, n in other.methods.items():
            self.methods[m] = self.methods.get(m, 0) + n
        for key, stats in other.query_params.items():
            if key in self.query_params:
                self.query_params[key].merge(stats)
            else:
                self.query_params[key] = stats.copy()
        for name, n in other.observed_headers.items():
            self.observed_headers[name] = self.observed_headers.get(name, 0) + n

    def copy(self) -> "EndpointMeta":
        dup = EndpointMeta()
        dup.merge(self)
        return dup

    def to_dict(self) -> dict:
        return {
            "methods": dict(sorted(self.methods.items())),
            "query_params": {
                k: v.to_dict() for k, v in sorted(self.query_params.items())
            },
            "observed_headers": dict(sorted(self.observed_headers.items())),
            "request_count": self.request_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EndpointMeta":
        meta = cls()
        meta.methods = dict(data["methods"])
        meta.query_params = {
            k: ValueStats.from_dict(v) for k, v in data["query_params"].items()
        }
        meta.observed_headers = dict(data["observed_headers"])
        meta.request_count = data["request_count"]
        return meta


@dataclass
class TreeNode:
    """One path segment in the learned tree.

    The same node type serves raw and reduced trees: a reduced tree's
    placeholder nodes carry a PlaceholderMeta and their value_stats
    cover every absorbed concrete label.
    """

    segment: str
    children: dict[str, "TreeNode"] = field(default_factory=dict)
    meta: Optional[EndpointMeta] = None
    hit_count: int = 0
    value_stats: ValueStats = field(default_factory=ValueStats)
    placeholder: Optional["PlaceholderMeta"] = None

    @property
    def is_placeholder(self) -> bool:
        return self.placeholder is not None

    def child(self, label: str, reservoir_cap: int = DEFAULT_RESERVOIR_CAP) -> "TreeNode":
        """Get or create the child node for `label`."""
        node = self.children.get(label)
        if node is None:
            node = TreeNode(label, value_stats=ValueStats(reservoir_cap))
            self.children[label] = node
        return node

    def walk(self) -> Iterator["TreeNode"]:
        """Yield this node and every descendant, depth-first."""
        yield self
        for label in sorted(self.children):
            yield from self.children[label].walk()

    def copy(self) -> "TreeNode":
        dup = TreeNode(
            self.segment,
            children={k: v.copy() for k, v in self.children.items()},
            meta=self.meta.copy() if self.meta else None,
            hit_count=self.hit_count,
            value_stats=self.value_stats.copy(),
            placeholder=self.placeholder.copy() if self.placeholder else None,
        )
        return dup

    def merge(self, other: "TreeNode") -> None:
        """Fold `other` (same label) into this node, recursively."""
        self.hit_count += other.hit_count
        self.value_stats.merge(other.value_stats)
        if other.meta is not None:
            if self.meta is None:
                self.meta = other.meta.copy()
            else:
                self.meta.merge(other.meta)
        if other.placeholder is not None:
            if self.placeholder is None:
                self.placeholder = other.placeholder.copy()
            else:
                # Both sides carry absorption tallies (e.g. same-labelled
                # provisional placeholders inside merged word-group members);
                # dropping one undercounts the fold.
                self.placeholder.merge_counts(other.placeholder)
        for label, child in other.children.items():
            mine = self.children.get(label)
            if mine is None:
                self.children[label] = child.copy()
            else:
                mine.merge(child)

    def to_dict(self) -> dict:
        data: dict = {
            "segment": self.segment,
            "hit_count": self.hit_count,
            "value_stats": self.value_stats.to_dict(),
            "children": {
                label: self.children[label].to_dict()
                for label in sorted(self.children)
            },
        }
        if self.meta is not None:
            data["meta"] = self.meta.to_dict()
        if self.placeholder is not None:
            data["placeholder"] = self.placeholder.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TreeNode":
        from .reducer import PlaceholderMeta  # deferred: reducer imports us

        node = cls(
            data["segment"],
            hit_count=data["hit_count"],
            value_stats=ValueStats.from_dict(data["value_stats"]),
        )
        if "meta" in data:
            node.meta = EndpointMeta.from_dict(data["meta"])
        if "placeholder" in data:
            node.placeholder = PlaceholderMeta.from_dict(data["placeholder"])
        node.children = {
            label: cls.from_dict(child)
            for label, child in data["children"].items()
        }
        return node


class ApiTree:
    """The mutable training tree plus request bookkeeping."""

    def __init__(self, reservoir_cap: int = DEFAULT_RESERVOIR_CAP) -> None:
        self.reservoir_cap = reservoir_cap
        self.root = TreeNode("", value_stats=ValueStats(reservoir_cap))
        self.total_requests = 0

    def insert(self, req: ParsedRequest) -> "ApiTree":
        """Insert one request; touches exactly the nodes along its path."""
        node = self.root
        node.hit_count += 1
        for seg in req.segments:
            node = node.child(seg, self.reservoir_cap)
            node.hit_count += 1
            node.value_stats.add(seg)
        if node.meta is None:
            node.meta = EndpointMeta()
        node.meta.record(req, self.reservoir_cap)
        self.total_requests += 1
        return self

    def merge(self, other: "ApiTree") -> "ApiTree":
        """Fold another tree into this one (counts and stats are sums)."""
        self.root.merge(other.root)
        self.total_requests += other.total_requests
        return self

    def copy(self) -> "ApiTree":
        dup = ApiTree(self.reservoir_cap)
        dup.root = self.root.copy()
        dup.total_requests = self.total_requests
        return dup

    def to_dict(self) -> dict:
        return {
            "reservoir_cap": self.reservoir_cap,
            "total_requests": self.total_requests,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ApiTree":
        tree = cls(data["reservoir_cap"])
        tree.total_requests = data["total_requests"]
        tree.root = TreeNode.from_dict(data["root"])
        return tree


def insert_request(tree: ApiTree, req: ParsedRequest) -> ApiTree:
    """Insert `req` into `tree` (mutating) and return the tree."""
    return tree.insert(req)


def merge_trees(a: ApiTree, b: ApiTree) -> ApiTree:
    """Union of two trees as a new tree; inputs are left untouched."""
    merged = a.copy()
    merged.merge(b)
    return merged


def _snapshot_node(node: TreeNode) -> dict:
    view: dict = {"segment": node.segment}
    if node.hit_count:
        view["hit_count"] = node.hit_count
    if node.placeholder is not None:
        view["placeholder"] = {
            "type": node.placeholder.inferred_type,
            "min_len": node.placeholder.min_len,
            "max_len": node.placeholder.max_len,
            "is_random": node.placeholder.is_random,
            "merged_count": node.placeholder.merged_count,
        }
    if node.meta is not None:
        view["methods"] = sorted(node.meta.methods)
        if node.meta.query_params:
            view["query_params"] = sorted(node.meta.query_params)
        view["request_count"] = node.meta.request_count
    view["children"] = [
        _snapshot_node(node.children[label]) for label in sorted(node.children)
    ]
    return view


def snapshot(tree: ApiTree) -> dict:
    """Deterministic JSON-ready rendering of the tree.

    Children are sorted by label and zero/absent fields are omitted, so
    equal trees always render identically (golden-file friendly).
    """
    return _snapshot_node(tree.root)
