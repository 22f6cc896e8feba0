"""OpenAPI generation and diff tests: parameter schema mapping, path
bijection against a plain tree walk, synthesis round-trips, and diffs."""

import json
import random

import pytest

import oracles
from apiward.api_tree import EndpointMeta, TreeNode, ValueStats
from apiward.openapi_gen import (
    OPENAPI_VERSION,
    SchemaDiff,
    _param_schema,
    compare_to_reference,
    diff_specs,
    format_diff,
    generate_spec,
)
from apiward.reducer import PlaceholderMeta, ReducedSchema, SegmentClass
from apiward.request_model import ParsedRequest
from apiward.schema_graph import TolerancePolicy, build_graph, validate


def _ph(name, cls, lo, hi, examples=()):
    return PlaceholderMeta(
        name=name,
        inferred_type=cls,
        class_counts={cls.value: 10},
        examples=list(examples),
        min_len=lo,
        max_len=hi,
        merged_count=17,
    )


def _endpoint(methods, query_keys=()):
    meta = EndpointMeta()
    for m in methods:
        meta.methods[m] = 5
    for k in query_keys:
        meta.query_params[k] = ValueStats()
    meta.request_count = 5 * len(methods)
    return meta


def _users_schema():
    """/users/{id:int}/orders GET,POST ?page plus /health GET, version 4."""
    root = TreeNode("")
    users = TreeNode("users")
    uid = TreeNode(
        "{users_param_0}",
        placeholder=_ph("{users_param_0}", SegmentClass.INTEGER, 2, 6, examples=["1234"]),
    )
    orders = TreeNode("orders")
    orders.meta = _endpoint(["GET", "POST"], ["page"])
    orders.meta.query_params["page"].add("3")
    uid.children["orders"] = orders
    users.children["{users_param_0}"] = uid
    root.children["users"] = users
    health = TreeNode("health")
    health.meta = _endpoint(["GET"])
    root.children["health"] = health
    return ReducedSchema(root=root, version=4, created_at=0.0, source_request_count=250)


# ---------------------------------------------------------------------------
# document structure


def test_top_level_document_fields():
    doc = generate_spec(_users_schema())
    assert doc["openapi"] == OPENAPI_VERSION
    assert doc["info"]["version"] == "4"
    assert doc["info"]["x-generated-at"] == "1970-01-01T00:00:00+00:00"
    assert doc["info"]["x-source-request-count"] == 250
    assert list(doc["paths"]) == sorted(doc["paths"])
    assert set(doc["paths"]) == {"/health", "/users/{users_param_0}/orders"}


def test_operation_rendering():
    doc = generate_spec(_users_schema())
    entry = doc["paths"]["/users/{users_param_0}/orders"]
    assert list(entry) == ["get", "post"]
    op = entry["get"]
    assert op["operationId"] == "get_users_users_param_0_orders"
    assert op["x-generated"] is True
    assert op["x-observed-count"] == 5
    assert op["responses"]["default"]["description"]
    path_param, query_param = op["parameters"]
    assert path_param["name"] == "users_param_0"
    assert path_param["in"] == "path" and path_param["required"] is True
    assert path_param["example"] == "1234"
    assert path_param["x-observed"]["inferred_type"] == "integer"
    assert path_param["x-observed"]["merged_count"] == 17
    assert query_param == {
        "name": "page",
        "in": "query",
        "required": False,
        "schema": {"type": "string"},
        "example": "3",
        "x-examples": ["3"],
    }


def test_endpoint_without_parameters_has_no_parameters_key():
    doc = generate_spec(_users_schema())
    assert "parameters" not in doc["paths"]["/health"]["get"]


def test_root_endpoint_renders_as_slash():
    root = TreeNode("")
    root.meta = _endpoint(["GET"])
    schema = ReducedSchema(root=root, version=1, created_at=0.0, source_request_count=1)
    doc = generate_spec(schema)
    assert set(doc["paths"]) == {"/"}


# ---------------------------------------------------------------------------
# parameter schema mapping


@pytest.mark.parametrize(
    "cls,lo,hi,want",
    [
        (SegmentClass.INTEGER, 3, 5, {"type": "integer", "minimum": 100, "maximum": 99999}),
        (SegmentClass.INTEGER, 1, 2, {"type": "integer", "minimum": 0, "maximum": 99}),
        (SegmentClass.UUID, 36, 36, {"type": "string", "format": "uuid"}),
        (SegmentClass.EMAIL, 10, 30, {"type": "string", "format": "email"}),
        (
            SegmentClass.HEX,
            8,
            12,
            {"type": "string", "pattern": "^[0-9a-fA-F]+$", "minLength": 8, "maxLength": 12},
        ),
        (
            SegmentClass.ALNUM_RANDOM,
            8,
            20,
            {"type": "string", "pattern": "^[A-Za-z0-9]+$", "minLength": 8, "maxLength": 20},
        ),
        (
            SegmentClass.OTHER_DYNAMIC,
            2,
            9,
            {"type": "string", "minLength": 2, "maxLength": 9},
        ),
    ],
)
def test_param_schema_per_class(cls, lo, hi, want):
    assert _param_schema(_ph("{p}", cls, lo, hi)) == want


# ---------------------------------------------------------------------------
# bijection with the tree and synthesis round-trip


def _walked_endpoints(schema):
    """Independent walk: templated path -> sorted methods."""
    out = {}

    def walk(node, prefix):
        if node.meta is not None:
            out[prefix or "/"] = sorted(m.lower() for m in node.meta.methods)
        for label, child in node.children.items():
            walk(child, prefix + "/" + label)

    walk(schema.root, "")
    return out


@pytest.mark.parametrize("seed", range(8))
def test_paths_biject_with_tree_endpoints(seed):
    rng = random.Random(3100 + seed)
    schema = oracles.random_reduced_schema(rng, max_nodes=50)
    doc = generate_spec(schema)
    walked = _walked_endpoints(schema)
    assert set(doc["paths"]) == set(walked)
    for path, entry in doc["paths"].items():
        assert sorted(entry) == walked[path]
    ids = [op["operationId"] for entry in doc["paths"].values() for op in entry.values()]
    assert len(ids) == len(set(ids))


@pytest.mark.parametrize("seed", range(5))
def test_requests_synthesized_from_doc_are_accepted(seed):
    """Build requests using only the generated document plus its x-observed
    hints; every one must validate against the schema graph."""
    rng = random.Random(5200 + seed)
    schema = oracles.random_reduced_schema(rng, max_nodes=40)
    doc = generate_spec(schema)
    graph = build_graph(schema)
    policy = TolerancePolicy()
    for path, entry in doc["paths"].items():
        for method, op in entry.items():
            for _ in range(3):
                segments = []
                for raw in path.strip("/").split("/") if path != "/" else []:
                    if not raw.startswith("{"):
                        segments.append(raw)
                        continue
                    spec = next(
                        p
                        for p in op["parameters"]
                        if p["in"] == "path" and p["name"] == raw.strip("{}")
                    )
                    observed = spec["x-observed"]
                    meta = PlaceholderMeta(
                        name=raw,
                        inferred_type=SegmentClass(observed["inferred_type"]),
                        min_len=observed["min_len"],
                        max_len=observed["max_len"],
                    )
                    segments.append(oracles.sample_placeholder_value(meta, rng))
                query = [
                    (p["name"], "7")
                    for p in op.get("parameters", [])
                    if p["in"] == "query" and rng.random() < 0.5
                ]
                req = ParsedRequest(
                    method=method.upper(), segments=segments, query=query, headers=[]
                )
                verdict = validate(graph, req, policy)
                assert verdict.outcome == "accepted", (path, method, req, verdict)


def test_generation_is_deterministic():
    rng = random.Random(64)
    schema = oracles.random_reduced_schema(rng, max_nodes=45)
    a = json.dumps(generate_spec(schema), sort_keys=True)
    b = json.dumps(generate_spec(schema), sort_keys=True)
    assert a == b


# ---------------------------------------------------------------------------
# diffs


def _evolved_schema():
    """The _users_schema plus /admin, minus /health, orders gains DELETE
    and sort=, loses page=."""
    schema = _users_schema()
    root = schema.root
    del root.children["health"]
    admin = TreeNode("admin")
    admin.meta = _endpoint(["GET"])
    root.children["admin"] = admin
    orders = root.children["users"].children["{users_param_0}"].children["orders"]
    orders.meta.methods["DELETE"] = 2
    del orders.meta.query_params["page"]
    orders.meta.query_params["sort"] = ValueStats()
    return ReducedSchema(root=root, version=5, created_at=10.0, source_request_count=300)


def test_diff_detects_all_change_kinds():
    old, new = _users_schema(), _evolved_schema()
    diff = diff_specs(old, new)
    assert diff.from_version == 4 and diff.to_version == 5
    assert diff.added_paths == ["/admin"]
    assert diff.removed_paths == ["/health"]
    assert diff.changed_operations == [
        {
            "path": "/users/{users_param_0}/orders",
            "added_methods": ["DELETE"],
            "added_query_params": ["sort"],
            "removed_query_params": ["page"],
        }
    ]
    assert not diff.empty


def test_diff_identical_schemas_empty():
    schema = _users_schema()
    diff = diff_specs(schema, schema)
    assert diff.empty
    assert diff.to_dict() == {
        "from_version": 4,
        "to_version": 4,
        "added_paths": [],
        "removed_paths": [],
        "changed_operations": [],
    }


def test_format_diff_goldens():
    schema = _users_schema()
    assert format_diff(diff_specs(schema, schema)) == "schema v4 -> v4\n  no changes"
    text = format_diff(diff_specs(schema, _evolved_schema()))
    assert text == (
        "schema v4 -> v5\n"
        "  + /admin\n"
        "  - /health\n"
        "  ~ /users/{users_param_0}/orders "
        "(+method:DELETE; +query:sort; -query:page)"
    )


def test_diff_random_schema_against_itself_and_mutant():
    rng = random.Random(12)
    for _ in range(5):
        schema = oracles.random_reduced_schema(rng, max_nodes=30)
        assert diff_specs(schema, schema).empty
        mutant = ReducedSchema(
            root=schema.root.copy(),
            version=schema.version + 1,
            created_at=schema.created_at,
            source_request_count=schema.source_request_count,
        )
        extra = TreeNode("zz-added")
        extra.meta = _endpoint(["GET"])
        mutant.root.children["zz-added"] = extra
        diff = diff_specs(schema, mutant)
        assert diff.added_paths == ["/zz-added"] and not diff.removed_paths


# ---------------------------------------------------------------------------
# reference comparison


def test_compare_to_reference_shadow_and_unexercised():
    schema = _users_schema()
    reference = {
        "paths": {
            "/users/{userId}/orders": {},  # same template, different param name
            "/billing": {},
        }
    }
    result = compare_to_reference(schema, reference)
    assert result == {"shadow": ["/health"], "unexercised": ["/billing"]}


def test_compare_to_reference_empty_doc():
    schema = _users_schema()
    result = compare_to_reference(schema, {})
    assert result["unexercised"] == []
    assert sorted(result["shadow"]) == ["/health", "/users/{users_param_0}/orders"]


def test_schema_diff_empty_property():
    assert SchemaDiff(1, 2).empty
    assert not SchemaDiff(1, 2, added_paths=["/x"]).empty
