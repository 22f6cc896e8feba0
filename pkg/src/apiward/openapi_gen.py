"""OpenAPI 3 document generation and schema diffing.

Renders a ReducedSchema as an OpenAPI 3.0.3 document (one path entry per
endpoint node, placeholders as {name} path parameters with type/length
constraints from their metadata) and computes diffs between schema
versions, including shadow/unexercised comparison against a
user-supplied reference document.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .api_tree import EndpointMeta, TreeNode, ValueStats
from .reducer import PlaceholderMeta, ReducedSchema, SegmentClass

OPENAPI_VERSION = "3.0.3"


def _param_schema(meta: PlaceholderMeta) -> dict:
    """Map placeholder metadata onto an OpenAPI parameter schema."""
    t = meta.inferred_type
    if t == SegmentClass.INTEGER:
        lo = 0 if meta.min_len <= 1 else 10 ** (meta.min_len - 1)
        return {
            "type": "integer",
            "minimum": lo,
            "maximum": 10**meta.max_len - 1,
        }
    schema: dict = {"type": "string"}
    if t == SegmentClass.UUID:
        schema["format"] = "uuid"
        return schema
    if t == SegmentClass.EMAIL:
        schema["format"] = "email"
        return schema
    if t == SegmentClass.HEX:
        schema["pattern"] = "^[0-9a-fA-F]+$"
    elif t == SegmentClass.ALNUM_RANDOM:
        schema["pattern"] = "^[A-Za-z0-9]+$"
    schema["minLength"] = meta.min_len
    schema["maxLength"] = meta.max_len
    return schema


def _query_param(name: str, stats: ValueStats) -> dict:
    param: dict = {
        "name": name,
        "in": "query",
        "required": False,
        "schema": {"type": "string"},
    }
    if stats.examples:
        param["example"] = stats.examples[0]
        param["x-examples"] = sorted(stats.examples)
    return param


def _path_param(node: TreeNode) -> dict:
    meta = node.placeholder
    assert meta is not None
    param: dict = {
        "name": node.segment.strip("{}"),
        "in": "path",
        "required": True,
        "schema": _param_schema(meta),
        "x-observed": {
            "inferred_type": meta.inferred_type.value,
            "min_len": meta.min_len,
            "max_len": meta.max_len,
            "is_random": meta.is_random,
            "merged_count": meta.merged_count,
        },
    }
    if meta.examples:
        param["example"] = meta.examples[0]
        param["x-examples"] = sorted(meta.examples)
    return param


def _operation(path: str, method: str, meta: EndpointMeta, path_params: list[dict]) -> dict:
    op: dict = {
        "summary": f"Observed {method} on {path}",
        "description": (
            f"Generated from {meta.request_count} observed request(s); "
            "not hand-written documentation."
        ),
        "operationId": re.sub(r"[^A-Za-z0-9]+", "_", f"{method.lower()}{path}").strip("_"),
        "x-generated": True,
        "x-observed-count": meta.methods.get(method, 0),
    }
    params = [dict(p) for p in path_params]
    params.extend(_query_param(name, meta.query_params[name]) for name in sorted(meta.query_params))
    if params:
        op["parameters"] = params
    op["responses"] = {"default": {"description": "Response not learned from traffic."}}
    return op


def generate_spec(schema: ReducedSchema) -> dict:
    """Emit an OpenAPI 3.0.3 document for the schema.

    Deterministic: paths and methods are sorted and the generated-at
    stamp comes from the schema itself, so identical schemas render to
    byte-identical documents.
    """
    paths: dict[str, dict] = {}

    def walk(node: TreeNode, prefix: str, params: list[dict]) -> None:
        if node.placeholder is not None:
            params = params + [_path_param(node)]
        if node.meta is not None:
            path = prefix or "/"
            entry = {}
            for method in sorted(node.meta.methods):
                entry[method.lower()] = _operation(path, method, node.meta, params)
            paths[path] = entry
        for label in sorted(node.children):
            child = node.children[label]
            walk(child, prefix + "/" + label, params)

    walk(schema.root, "", [])
    generated_at = datetime.fromtimestamp(schema.created_at, tz=timezone.utc)
    return {
        "openapi": OPENAPI_VERSION,
        "info": {
            "title": "Learned API surface",
            "version": str(schema.version),
            "description": "Inferred automatically from observed traffic.",
            "x-generated-at": generated_at.isoformat(),
            "x-source-request-count": schema.source_request_count,
        },
        "paths": {p: paths[p] for p in sorted(paths)},
    }


@dataclass
class SchemaDiff:
    """What changed between two schema versions."""

    from_version: int
    to_version: int
    added_paths: list[str] = field(default_factory=list)
    removed_paths: list[str] = field(default_factory=list)
    changed_operations: list[dict] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.added_paths or self.removed_paths or self.changed_operations)

    def to_dict(self) -> dict:
        return {
            "from_version": self.from_version,
            "to_version": self.to_version,
            "added_paths": self.added_paths,
            "removed_paths": self.removed_paths,
            "changed_operations": self.changed_operations,
        }


def _endpoint_index(schema: ReducedSchema) -> dict[str, dict]:
    """Map templated path -> {methods, query params} for one schema."""
    index: dict[str, dict] = {}

    def walk(node: TreeNode, prefix: str) -> None:
        if node.meta is not None:
            index[prefix or "/"] = {
                "methods": sorted(node.meta.methods),
                "query": sorted(node.meta.query_params),
            }
        for label in sorted(node.children):
            walk(node.children[label], prefix + "/" + label)

    walk(schema.root, "")
    return index


def diff_specs(old: ReducedSchema, new: ReducedSchema) -> SchemaDiff:
    """Set differences over templated paths plus per-path operation deltas."""
    a = _endpoint_index(old)
    b = _endpoint_index(new)
    diff = SchemaDiff(from_version=old.version, to_version=new.version)
    diff.added_paths = sorted(set(b) - set(a))
    diff.removed_paths = sorted(set(a) - set(b))
    for path in sorted(set(a) & set(b)):
        entry: dict = {"path": path}
        for key, label_add, label_del in (
            ("methods", "added_methods", "removed_methods"),
            ("query", "added_query_params", "removed_query_params"),
        ):
            added = sorted(set(b[path][key]) - set(a[path][key]))
            removed = sorted(set(a[path][key]) - set(b[path][key]))
            if added:
                entry[label_add] = added
            if removed:
                entry[label_del] = removed
        if len(entry) > 1:
            diff.changed_operations.append(entry)
    return diff


def format_diff(diff: SchemaDiff) -> str:
    """Human-readable rendering of a SchemaDiff."""
    lines = [f"schema v{diff.from_version} -> v{diff.to_version}"]
    if diff.empty:
        lines.append("  no changes")
        return "\n".join(lines)
    for p in diff.added_paths:
        lines.append(f"  + {p}")
    for p in diff.removed_paths:
        lines.append(f"  - {p}")
    for entry in diff.changed_operations:
        parts = []
        for key in ("added_methods", "removed_methods", "added_query_params", "removed_query_params"):
            if key in entry:
                sign = "+" if key.startswith("added") else "-"
                kind = "method" if "methods" in key else "query"
                parts.append(f"{sign}{kind}:{','.join(entry[key])}")
        lines.append(f"  ~ {entry['path']} ({'; '.join(parts)})")
    return "\n".join(lines)


def _normalize_template(path: str) -> str:
    """Collapse parameter names so '/u/{id}' and '/u/{user_param_0}' compare equal."""
    return re.sub(r"\{[^}]*\}", "{}", path)


def compare_to_reference(schema: ReducedSchema, reference_doc: dict) -> dict:
    """Shadow/unexercised analysis against a hand-written OpenAPI document.

    Paths observed in traffic but missing from the reference are shadow
    APIs; documented paths never observed are unexercised. Parameter
    names inside braces are ignored when matching.
    """
    learned = {_normalize_template(p): p for p in _endpoint_index(schema)}
    documented = {_normalize_template(p): p for p in reference_doc.get("paths", {})}
    shadow = sorted(learned[k] for k in set(learned) - set(documented))
    unexercised = sorted(documented[k] for k in set(documented) - set(learned))
    return {"shadow": shadow, "unexercised": unexercised}
