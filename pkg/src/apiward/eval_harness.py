"""Evaluation harness: datasets, corpus generation and benchmarking.

Three pieces:

* loaders (`load_dataset`) normalizing JSONL / CSV / JSON-document
  corpora into labeled RawRequest records with train/test splits;
* a deterministic corpus generator: benign traffic sampled from
  endpoint templates, attacks injected either into the URL (path slot
  replacement or undocumented query key) or into header values / body
  fields of otherwise-valid requests;
* `run_benchmark`: trains an engine on the train split, classifies the
  test split, and reports per-tag precision/recall/F1 per stage plus
  latency, macro averages and raw per-record outcomes.

The attack payload banks ship as data files, one per tag (~50 entries
each). A templated mutation step (case jitter, whitespace padding)
stands in for the non-reproducible way such corpora are usually grown.
"""

from __future__ import annotations

import csv
import json
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable, Optional

from .config import EngineConfig
from .engine import Engine
from .request_model import RawRequest

ATTACK_TAGS = (
    "SQLi",
    "XSS",
    "LogForging",
    "RCE",
    "CookieInjection",
    "DirectoryTraversal",
    "LOG4J",
)

_PAYLOAD_FILES = {
    "SQLi": "sqli.txt",
    "XSS": "xss.txt",
    "LogForging": "log_forging.txt",
    "RCE": "rce.txt",
    "CookieInjection": "cookie_injection.txt",
    "DirectoryTraversal": "directory_traversal.txt",
    "LOG4J": "log4j.txt",
}

# Query keys used for undocumented-parameter attacks; kept disjoint from
# every key the default templates document.
ATTACK_QUERY_KEYS = ("redirect", "cmd", "debug", "exec", "callback", "next", "return_url")


class Placement(str, Enum):
    URL_EMBEDDED = "url"
    BODY_HEADER_EMBEDDED = "body_header"


class FormatError(Exception):
    """A dataset file does not match its declared format."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.detail = message


# --------------------------------------------------------------------------
# Corpus container


def parse_label(label: Optional[str]) -> tuple[str, Optional[str], Optional[str]]:
    """Split a record label into (kind, tag, placement).

    `None`/"benign" are benign; "Tag:placement" is a placed attack; any
    other string is an attack of unknown placement.
    """
    if label is None or label == "benign":
        return ("benign", None, None)
    tag, sep, placement = label.partition(":")
    if sep and placement in (Placement.URL_EMBEDDED.value, Placement.BODY_HEADER_EMBEDDED.value):
        return ("attack", tag, placement)
    return ("attack", label, None)


@dataclass
class LabeledCorpus:
    """Train/test request records; train must be benign-only."""

    train: list[RawRequest]
    test: list[RawRequest]
    info: list[dict] = field(default_factory=list)  # parallel to test
    name: str = ""

    def __post_init__(self):
        if self.info and len(self.info) != len(self.test):
            raise ValueError("info must parallel the test split")
        for i, rec in enumerate(self.train):
            if parse_label(rec.label)[0] != "benign":
                raise ValueError(
                    f"train record {i} is attack-labeled ({rec.label!r}); "
                    "the training split must be benign-only"
                )

    def __len__(self) -> int:
        return len(self.train) + len(self.test)

    def counts(self) -> dict:
        tags: dict[str, int] = {}
        benign_test = 0
        for rec in self.test:
            kind, tag, placement = parse_label(rec.label)
            if kind == "benign":
                benign_test += 1
            else:
                key = f"{tag}:{placement}" if placement else str(tag)
                tags[key] = tags.get(key, 0) + 1
        return {
            "train": len(self.train),
            "test": len(self.test),
            "test_benign": benign_test,
            "test_attacks": dict(sorted(tags.items())),
        }


# --------------------------------------------------------------------------
# Loaders


def _record_from_dict(data: dict, path: str, line: int) -> RawRequest:
    if not isinstance(data, dict):
        raise FormatError(path, line, f"expected an object, got {type(data).__name__}")
    try:
        return RawRequest.from_json_record(data)
    except KeyError as exc:
        raise FormatError(path, line, f"missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise FormatError(path, line, f"bad record: {exc}") from exc


def _load_jsonl(path: str) -> LabeledCorpus:
    """One JSON object per line; optional "split" key routes records.

    Records without "split" go to train when benign-labeled, else to
    test. An attack-labeled record explicitly marked split=train is an
    error, not a silent re-route.
    """
    train: list[RawRequest] = []
    test: list[RawRequest] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw_line in enumerate(fh, 1):
            line = raw_line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from exc
            rec = _record_from_dict(data, path, lineno)
            split = data.get("split")
            benign = parse_label(rec.label)[0] == "benign"
            if split is None:
                split = "train" if benign else "test"
            if split == "train":
                if not benign:
                    raise FormatError(
                        path, lineno, f"attack-labeled record ({rec.label!r}) in train split"
                    )
                train.append(rec)
            elif split == "test":
                test.append(rec)
            else:
                raise FormatError(path, lineno, f"unknown split {split!r}")
    return LabeledCorpus(train=train, test=test, name=path)


def _load_csic_csv(path: str) -> LabeledCorpus:
    """CSV with header: method,url[,body][,label][,split].

    Labels follow the CSIC 2010 convention ("normal"/"anomalous"),
    mapped to benign / generic-attack. Quirk: rows default to the test
    split unless a split column says otherwise — evaluation data should
    never silently become training data.
    """
    train: list[RawRequest] = []
    test: list[RawRequest] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return LabeledCorpus(train=[], test=[], name=path)
        cols = {c.strip().lower() for c in reader.fieldnames}
        for required in ("method", "url"):
            if required not in cols:
                raise FormatError(path, 1, f"missing required column {required!r}")
        for row in reader:
            lineno = reader.line_num
            row = {(k or "").strip().lower(): (v or "") for k, v in row.items()}
            if not row.get("method") or not row.get("url"):
                raise FormatError(path, lineno, "empty method or url")
            raw_label = row.get("label", "").strip().lower()
            if raw_label in ("", "normal", "benign", "valid"):
                label = "benign"
            elif raw_label in ("anomalous", "anomalousttraffic", "attack"):
                label = "anomalous"
            else:
                label = row["label"].strip()
            rec = RawRequest(
                method=row["method"].upper(),
                url=row["url"],
                body=row.get("body", "").encode("utf-8"),
                label=label,
            )
            split = row.get("split", "").strip().lower()
            if not split:
                split = "test"
            if split == "train":
                if label != "benign":
                    raise FormatError(path, lineno, "attack-labeled record in train split")
                train.append(rec)
            elif split == "test":
                test.append(rec)
            else:
                raise FormatError(path, lineno, f"unknown split {split!r}")
    return LabeledCorpus(train=train, test=test, name=path)


def _load_atrdf_json(path: str) -> LabeledCorpus:
    """Single JSON document: {"train": [records], "test": [records]}.

    Line numbers in errors refer to the document when JSON parsing
    fails, and to the element index (1-based) within its array when a
    record is malformed.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise FormatError(path, 1, "top level must be an object with train/test arrays")
    splits: dict[str, list[RawRequest]] = {"train": [], "test": []}
    for split in ("train", "test"):
        items = doc.get(split, [])
        if not isinstance(items, list):
            raise FormatError(path, 1, f"{split!r} must be an array")
        for i, data in enumerate(items, 1):
            rec = _record_from_dict(data, path, i)
            if split == "train" and parse_label(rec.label)[0] != "benign":
                raise FormatError(path, i, f"attack-labeled record ({rec.label!r}) in train")
            splits[split].append(rec)
    return LabeledCorpus(train=splits["train"], test=splits["test"], name=path)


_LOADERS: dict[str, Callable[[str], LabeledCorpus]] = {
    "jsonl": _load_jsonl,
    "csic_csv": _load_csic_csv,
    "atrdf_json": _load_atrdf_json,
}


def load_dataset(path: str, format: str = "jsonl") -> LabeledCorpus:
    """Load a labeled corpus from disk. Formats: jsonl, csic_csv, atrdf_json."""
    loader = _LOADERS.get(format)
    if loader is None:
        raise ValueError(f"unknown dataset format {format!r}; know {sorted(_LOADERS)}")
    return loader(path)


def write_jsonl(corpus: LabeledCorpus, path: str) -> None:
    """Persist a corpus in the jsonl format load_dataset reads back."""
    import base64

    def record(rec: RawRequest, split: str) -> dict:
        out: dict = {"method": rec.method, "url": rec.url, "split": split}
        if rec.headers:
            out["headers"] = [[k, v] for k, v in rec.headers]
        if rec.body:
            try:
                text = rec.body.decode("utf-8")
                if text.encode("utf-8") == rec.body:
                    out["body"] = text
                else:  # pragma: no cover - defensive
                    out["body_b64"] = base64.b64encode(rec.body).decode("ascii")
            except UnicodeDecodeError:
                out["body_b64"] = base64.b64encode(rec.body).decode("ascii")
        if rec.timestamp is not None:
            out["ts"] = rec.timestamp
        if rec.label is not None:
            out["label"] = rec.label
        return out

    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus.train:
            fh.write(json.dumps(record(rec, "train"), ensure_ascii=False) + "\n")
        for rec in corpus.test:
            fh.write(json.dumps(record(rec, "test"), ensure_ascii=False) + "\n")


# --------------------------------------------------------------------------
# Payload banks


def load_payloads(tag: str) -> list[str]:
    """Read the payload bank for one attack tag.

    Banks are plain text, one payload per line; blank lines and lines
    starting with "#" are skipped. The two-character sequences \\r and
    \\n decode to real CR/LF (log forging needs them; raw ones would
    break the line format).
    """
    filename = _PAYLOAD_FILES.get(tag)
    if filename is None:
        raise ValueError(f"unknown attack tag {tag!r}; know {sorted(_PAYLOAD_FILES)}")
    text = (
        resources.files("apiward.data")
        .joinpath("payloads", filename)
        .read_text(encoding="utf-8")
    )
    payloads = []
    for line in text.splitlines():
        line = line.rstrip()
        if not line or line.startswith("#"):
            continue
        payloads.append(line.replace("\\r", "\r").replace("\\n", "\n"))
    if not payloads:
        raise ValueError(f"payload bank for {tag} is empty")
    return payloads


@dataclass
class AttackSpec:
    """How many attacks of one tag/placement to generate, from which bank."""

    tag: str
    placement: Placement = Placement.URL_EMBEDDED
    payloads: Optional[list[str]] = None  # defaults to the shipped bank
    count: int = 200

    def bank(self) -> list[str]:
        return self.payloads if self.payloads is not None else load_payloads(self.tag)


def default_attack_specs(
    placement: Placement, per_tag: int = 200, tags: tuple[str, ...] = ATTACK_TAGS
) -> list[AttackSpec]:
    return [AttackSpec(tag=t, placement=Placement(placement), count=per_tag) for t in tags]


# --------------------------------------------------------------------------
# Endpoint templates and benign traffic


@dataclass
class ContentVariant:
    """One fixed header/query/body combination for a template."""

    headers: list[tuple[str, str]] = field(default_factory=list)
    query: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""
    body_anchor: str = ""  # substring of body replaced by body-placed payloads


@dataclass
class EndpointTemplate:
    """A path shape with typed slots plus its benign content variants.

    Slot syntax inside the path: {int:N} (N-digit integer), {uuid},
    {hex:N}, {token:N} (random alphanumeric), {email}, {name} (word-like
    values from a small pool). Everything else is static.
    """

    method: str
    path: str
    variants: list[ContentVariant]

    def __post_init__(self):
        self._parts = _parse_template_path(self.path)

    @property
    def slots(self) -> list[tuple[int, str, int]]:
        """(segment index, kind, length) for each slot in the path."""
        return [
            (i, kind, n) for i, (kind, n, _) in enumerate(self._parts) if kind != "static"
        ]


_NAME_POOL = (
    "platform",
    "payments",
    "search",
    "mobile",
    "growth",
    "security",
    "insights",
    "billing",
    "support",
    "runtime",
    "storage",
    "network",
)

_EMAIL_LOCALS = ("ana.silva", "ben.okafor", "cleo.wang", "dev.patel", "eva.novak", "finn.berg")
_EMAIL_DOMAINS = ("example.com", "corp.example.org", "mail.example.net")

_USER_AGENTS = (
    "Mozilla/5.0",
    "okhttp/4.12.0",
    "python-requests/2.32.0",
)


def _parse_template_path(path: str) -> list[tuple[str, int, str]]:
    """Split a template path into (kind, length, static_text) parts."""
    parts: list[tuple[str, int, str]] = []
    for seg in path.strip("/").split("/"):
        if not seg:
            continue
        if seg.startswith("{") and seg.endswith("}"):
            inner = seg[1:-1]
            kind, _, num = inner.partition(":")
            if kind not in ("int", "uuid", "hex", "token", "email", "name"):
                raise ValueError(f"unknown slot kind {kind!r} in {path}")
            parts.append((kind, int(num) if num else 0, ""))
        else:
            parts.append(("static", 0, seg))
    if not parts:
        raise ValueError("template path must have at least one segment")
    return parts


_TOKEN_LETTERS = "ghjkmnpqrstuvwxyz"  # outside a-f so tokens never look hexadecimal
_ALNUM62 = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


def _sample_slot(kind: str, n: int, rng: random.Random) -> str:
    if kind == "int":
        n = n or 6
        return str(rng.randrange(10 ** (n - 1), 10**n))
    if kind == "uuid":
        return "%08x-%04x-%04x-%04x-%012x" % (
            rng.getrandbits(32),
            rng.getrandbits(16),
            rng.getrandbits(16),
            rng.getrandbits(16),
            rng.getrandbits(48),
        )
    if kind == "hex":
        n = n or 16
        return rng.choice("abcdef") + "".join(rng.choice("0123456789abcdef") for _ in range(n - 1))
    if kind == "token":
        n = max(n or 12, 8)
        chars = [rng.choice(_TOKEN_LETTERS), rng.choice("0123456789")]
        chars += [rng.choice(_ALNUM62) for _ in range(n - 2)]
        rng.shuffle(chars)
        return "".join(chars)
    if kind == "email":
        return f"{rng.choice(_EMAIL_LOCALS)}{rng.randrange(10, 99)}@{rng.choice(_EMAIL_DOMAINS)}"
    if kind == "name":
        return rng.choice(_NAME_POOL)
    raise ValueError(f"unknown slot kind {kind!r}")


def _fill_path(template: EndpointTemplate, rng: random.Random) -> tuple[str, list[str]]:
    """Sample every slot; returns the path and the per-segment values."""
    segs = []
    for kind, n, text in template._parts:
        segs.append(text if kind == "static" else _sample_slot(kind, n, rng))
    return "/" + "/".join(segs), segs


def _json_body(data: dict, anchor_key: str) -> tuple[bytes, str]:
    body = json.dumps(data, sort_keys=True).encode("utf-8")
    return body, str(data[anchor_key])


def _variants(
    *,
    accepts: tuple[str, ...] = ("application/json",),
    query_sets: tuple[tuple[tuple[str, str], ...], ...] = ((),),
    bodies: tuple[tuple[bytes, str], ...] = ((b"", ""),),
    count: int = 5,
) -> list[ContentVariant]:
    """Build `count` deterministic variants by cycling the given pools."""
    out = []
    for i in range(count):
        body, anchor = bodies[i % len(bodies)]
        headers = [
            ("Host", "api.example.com"),
            ("User-Agent", _USER_AGENTS[i % len(_USER_AGENTS)]),
            ("Accept", accepts[i % len(accepts)]),
        ]
        if body:
            headers.append(("Content-Type", "application/json"))
        out.append(
            ContentVariant(
                headers=headers,
                query=list(query_sets[i % len(query_sets)]),
                body=body,
                body_anchor=anchor,
            )
        )
    return out


def default_templates() -> list[EndpointTemplate]:
    """A realistic mid-sized REST API: 18 endpoint templates."""
    q_page = ((("page", "1"),), (("page", "2"), ("limit", "20")), ())
    q_sort = ((("sort", "asc"),), (("sort", "desc"), ("limit", "50")), ())
    q_search = (
        (("q", "wireless"), ("page", "1")),
        (("q", "keyboard"), ("lang", "en")),
        (("q", "charger"), ("page", "2"), ("lang", "de")),
    )
    login_bodies = tuple(
        _json_body({"username": u, "password": p, "remember": r}, "password")
        for u, p, r in (
            ("ana", "winter-moss-42", True),
            ("ben", "paper-lamp-17", False),
            ("cleo", "cedar-rain-88", True),
        )
    )
    user_bodies = tuple(
        _json_body({"display_name": n, "locale": loc, "note": note}, "note")
        for n, loc, note in (
            ("Ana Silva", "en-US", "imported from crm"),
            ("Ben Okafor", "en-GB", "self signup"),
            ("Cleo Wang", "de-DE", "invited by admin"),
        )
    )
    review_bodies = tuple(
        _json_body({"rating": r, "title": t, "comment": c}, "comment")
        for r, t, c in (
            (5, "great", "works exactly as described"),
            (3, "okay", "average build quality"),
            (4, "solid", "good value for the price"),
        )
    )
    order_bodies = tuple(
        _json_body({"status": s, "note": n}, "note")
        for s, n in (("shipped", "left warehouse"), ("pending", "awaiting stock"))
    )
    invite_bodies = tuple(
        _json_body({"invitee": e, "message": m}, "message")
        for e, m in (
            ("ana.silva@example.com", "join our team"),
            ("ben.okafor@example.com", "welcome aboard"),
        )
    )
    json_only = ("application/json",)
    mixed = ("application/json", "text/html")

    return [
        EndpointTemplate("GET", "/api/v1/users/{int:6}/profile", _variants(accepts=mixed)),
        EndpointTemplate(
            "GET", "/api/v1/users/{int:6}/orders", _variants(accepts=json_only, query_sets=q_page)
        ),
        EndpointTemplate("POST", "/api/v1/users", _variants(accepts=json_only, bodies=user_bodies)),
        EndpointTemplate("GET", "/api/v1/orders/{int:8}/items/{int:3}", _variants(accepts=json_only)),
        EndpointTemplate(
            "PUT", "/api/v1/orders/{int:8}", _variants(accepts=json_only, bodies=order_bodies)
        ),
        EndpointTemplate("GET", "/api/v1/products/{uuid}", _variants(accepts=mixed)),
        EndpointTemplate(
            "GET",
            "/api/v1/products/{uuid}/reviews",
            _variants(accepts=json_only, query_sets=q_sort),
        ),
        EndpointTemplate(
            "POST",
            "/api/v1/products/{uuid}/reviews",
            _variants(accepts=json_only, bodies=review_bodies),
        ),
        EndpointTemplate("GET", "/api/v1/sessions/{hex:16}", _variants(accepts=json_only)),
        EndpointTemplate("DELETE", "/api/v1/sessions/{hex:16}", _variants(accepts=json_only)),
        EndpointTemplate("GET", "/api/v1/teams/{name}/members", _variants(accepts=json_only)),
        EndpointTemplate(
            "POST",
            "/api/v1/teams/{name}/invites",
            _variants(accepts=json_only, bodies=invite_bodies),
        ),
        EndpointTemplate("GET", "/api/v1/subscribers/{email}", _variants(accepts=json_only)),
        EndpointTemplate("GET", "/api/v1/files/{token:12}/download", _variants(accepts=mixed)),
        EndpointTemplate(
            "POST", "/api/v1/auth/login", _variants(accepts=json_only, bodies=login_bodies)
        ),
        EndpointTemplate("GET", "/api/v1/search", _variants(accepts=mixed, query_sets=q_search)),
        EndpointTemplate("GET", "/health", _variants(accepts=json_only)),
        EndpointTemplate("GET", "/status/metrics", _variants(accepts=json_only)),
    ]


# --------------------------------------------------------------------------
# Corpus generation


def _benign_record(
    templates: list[EndpointTemplate], index: int, rng: random.Random, ts: int
) -> tuple[RawRequest, int, int]:
    """Deterministic benign record for sequence position `index`.

    The (template, variant) pair is a pure function of `index`, so any
    test prefix reuses exactly the content combinations the training
    range covered; slot values are freshly sampled.
    """
    t = index % len(templates)
    template = templates[t]
    v = (index // len(templates)) % len(template.variants)
    variant = template.variants[v]
    path, _ = _fill_path(template, rng)
    url = path
    if variant.query:
        url += "?" + "&".join(f"{k}={val}" for k, val in variant.query)
    req = RawRequest(
        method=template.method,
        url=url,
        headers=list(variant.headers),
        body=variant.body,
        timestamp=ts,
        label="benign",
    )
    return req, t, v


def _mutate_payload(payload: str, rng: random.Random, allow_padding: bool) -> str:
    """Cosmetic payload mutation: case jitter, optional space padding.

    Mutations never remove the characters that make a payload
    detectable (nothing is encoded or escaped).
    """
    if rng.random() < 0.3:
        payload = "".join(
            (c.swapcase() if c.isalpha() and rng.random() < 0.15 else c) for c in payload
        )
    if allow_padding and rng.random() < 0.2:
        payload = " " * rng.randrange(1, 3) + payload + " " * rng.randrange(0, 2)
    return payload


def _url_attack(
    templates: list[EndpointTemplate],
    spec: AttackSpec,
    payload: str,
    rng: random.Random,
    ts: int,
) -> tuple[RawRequest, dict]:
    with_slots = [t for t in templates if t.slots]
    mode = "slot" if with_slots and rng.random() < 0.5 else "query"
    if mode == "slot":
        template = with_slots[rng.randrange(len(with_slots))]
        _, segs = _fill_path(template, rng)
        slot_idx = rng.choice([i for i, _, _ in template.slots])
        segs[slot_idx] = payload
        path = "/" + "/".join(segs)
        variant = template.variants[rng.randrange(len(template.variants))]
        url = path
        if variant.query:
            url += "?" + "&".join(f"{k}={val}" for k, val in variant.query)
        info = {"mode": "slot", "template": template.path, "slot_index": slot_idx}
    else:
        template = templates[rng.randrange(len(templates))]
        path, _ = _fill_path(template, rng)
        variant = template.variants[rng.randrange(len(template.variants))]
        pairs = list(variant.query)
        key = ATTACK_QUERY_KEYS[rng.randrange(len(ATTACK_QUERY_KEYS))]
        pairs.append((key, payload))
        url = path + "?" + "&".join(f"{k}={val}" for k, val in pairs)
        info = {"mode": "query", "template": template.path, "query_key": key}
    req = RawRequest(
        method=template.method,
        url=url,
        headers=list(variant.headers),
        body=variant.body,
        timestamp=ts,
        label=f"{spec.tag}:{Placement.URL_EMBEDDED.value}",
    )
    info.update({"kind": "attack", "tag": spec.tag, "placement": "url", "payload": payload})
    return req, info


def _body_header_attack(
    templates: list[EndpointTemplate],
    spec: AttackSpec,
    payload: str,
    rng: random.Random,
    ts: int,
) -> tuple[RawRequest, dict]:
    template = templates[rng.randrange(len(templates))]
    variant = template.variants[rng.randrange(len(template.variants))]
    path, _ = _fill_path(template, rng)
    url = path
    if variant.query:
        url += "?" + "&".join(f"{k}={val}" for k, val in variant.query)
    headers = list(variant.headers)
    body = variant.body
    mode = "body" if body and variant.body_anchor and rng.random() < 0.5 else "header"
    if mode == "body":
        body = body.replace(variant.body_anchor.encode("utf-8"), payload.encode("utf-8"), 1)
        info = {"mode": "body", "template": template.path, "body_anchor": variant.body_anchor}
    else:
        h = rng.randrange(len(headers))
        headers[h] = (headers[h][0], payload)
        info = {"mode": "header", "template": template.path, "header_name": headers[h][0]}
    req = RawRequest(
        method=template.method,
        url=url,
        headers=headers,
        body=body,
        timestamp=ts,
        label=f"{spec.tag}:{Placement.BODY_HEADER_EMBEDDED.value}",
    )
    info.update({"kind": "attack", "tag": spec.tag, "placement": "body_header", "payload": payload})
    return req, info


def generate_corpus(
    schema_seed: list[EndpointTemplate],
    benign_n: int,
    attacks: list[AttackSpec],
    rng_seed: int = 1,
    benign_test_n: Optional[int] = None,
) -> LabeledCorpus:
    """Deterministic labeled corpus from endpoint templates.

    Train: `benign_n` benign records cycling template/content-variant
    combinations (full coverage needs benign_n >= templates x variants).
    Test: `benign_test_n` fresh benign records (same combination cycle,
    so their content was seen in training) plus every attack spec.
    """
    if not schema_seed:
        raise ValueError("need at least one endpoint template")
    templates = list(schema_seed)
    rng = random.Random(rng_seed)
    if benign_test_n is None:
        benign_test_n = benign_n // 10
    ts = 1_700_000_000_000

    train: list[RawRequest] = []
    for i in range(benign_n):
        req, _, _ = _benign_record(templates, i, rng, ts)
        ts += rng.randrange(1, 40)
        train.append(req)

    test: list[RawRequest] = []
    info: list[dict] = []
    for i in range(benign_test_n):
        req, t, v = _benign_record(templates, i, rng, ts)
        ts += rng.randrange(1, 40)
        test.append(req)
        info.append({"kind": "benign", "template": templates[t].path, "variant": v})

    for spec in attacks:
        placement = Placement(spec.placement)
        bank = spec.bank()
        for j in range(spec.count):
            payload = _mutate_payload(
                bank[j % len(bank)], rng, allow_padding=placement != Placement.URL_EMBEDDED
            )
            if placement == Placement.URL_EMBEDDED:
                req, rec_info = _url_attack(templates, spec, payload, rng, ts)
            else:
                req, rec_info = _body_header_attack(templates, spec, payload, rng, ts)
            ts += rng.randrange(1, 40)
            test.append(req)
            info.append(rec_info)

    order = list(range(len(test)))
    rng.shuffle(order)
    test = [test[i] for i in order]
    info = [info[i] for i in order]
    return LabeledCorpus(train=train, test=test, info=info, name=f"generated(seed={rng_seed})")


# --------------------------------------------------------------------------
# Metrics


@dataclass
class TagMetrics:
    """Confusion counts and derived rates for one tag within one pool."""

    tag: str
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    @property
    def precision(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else None

    @property
    def recall(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else None

    @property
    def f1(self) -> Optional[float]:
        p, r = self.precision, self.recall
        if p is None or r is None or (p + r) == 0:
            return None
        return 2 * p * r / (p + r)

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "tp": self.tp,
            "fn": self.fn,
            "fp": self.fp,
            "tn": self.tn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class RecordOutcome:
    """One classified test record, kept for independent re-scoring."""

    index: int
    kind: str  # benign | attack
    tag: Optional[str]
    placement: Optional[str]
    outcome: str  # accepted | anomalous
    stage: str  # none | structural | content
    reason: Optional[str] = None
    score: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "tag": self.tag,
            "placement": self.placement,
            "outcome": self.outcome,
            "stage": self.stage,
            "reason": self.reason,
            "score": self.score,
        }


def _macro(section: dict[str, TagMetrics]) -> dict:
    """Unweighted means over tags; tags with undefined values are skipped."""
    out: dict[str, Optional[float]] = {}
    for name in ("precision", "recall", "f1"):
        vals = [getattr(m, name) for m in section.values()]
        vals = [v for v in vals if v is not None]
        out[name] = sum(vals) / len(vals) if vals else None
    return out


@dataclass
class MetricsReport:
    """Benchmark output: per-stage per-tag metrics plus run telemetry."""

    structural: dict[str, TagMetrics]
    content: dict[str, TagMetrics]
    overall: dict[str, TagMetrics]
    benign_total: int
    benign_flagged: int
    counts: dict
    timings: dict
    latency: Optional[dict]
    kernel: str
    records: list[RecordOutcome]

    @property
    def macro(self) -> dict:
        return {
            "structural": _macro(self.structural),
            "content": _macro(self.content),
            "overall": _macro(self.overall),
        }

    def to_dict(self, include_records: bool = False) -> dict:
        out = {
            "structural": {t: m.to_dict() for t, m in self.structural.items()},
            "content": {t: m.to_dict() for t, m in self.content.items()},
            "overall": {t: m.to_dict() for t, m in self.overall.items()},
            "macro": self.macro,
            "benign_total": self.benign_total,
            "benign_flagged": self.benign_flagged,
            "counts": self.counts,
            "timings": self.timings,
            "latency": self.latency,
            "kernel": self.kernel,
        }
        if include_records:
            out["records"] = [r.to_dict() for r in self.records]
        return out

    def format_tables(self) -> str:
        blocks = []
        for title, section in (
            ("Structural stage (URL-embedded attacks)", self.structural),
            ("Content stage (body/header-embedded attacks)", self.content),
            ("Overall (any stage, all placements)", self.overall),
        ):
            if not section:
                continue
            rows = []
            for tag in sorted(section):
                m = section[tag]
                rows.append(
                    [tag, m.tp, m.fn, m.fp, _pct(m.precision), _pct(m.recall), _pct(m.f1)]
                )
            macro = _macro(section)
            rows.append(
                ["Macro Avg", "", "", "", _pct(macro["precision"]), _pct(macro["recall"]), _pct(macro["f1"])]
            )
            blocks.append(
                title
                + "\n"
                + _table(["Tag", "TP", "FN", "FP", "Precision", "Recall", "F1"], rows)
            )
        blocks.append(
            f"Benign: {self.benign_total} records, {self.benign_flagged} flagged"
        )
        if self.latency and self.latency.get("count"):
            lat = self.latency
            rows = [
                [
                    lat["count"],
                    _us(lat["mean"]),
                    _us(lat["std"]),
                    _us(lat["min"]),
                    _us(lat["p25"]),
                    _us(lat["median"]),
                    _us(lat["p75"]),
                    _us(lat["max"]),
                ]
            ]
            blocks.append(
                "Classification latency\n"
                + _table(["count", "mean", "std", "min", "25%", "50%", "75%", "max"], rows)
            )
        t = self.timings
        blocks.append(
            "Timings: train %.2fs, baseline %.2fs, classify %.2fs (kernel: %s)"
            % (t.get("train_s", 0.0), t.get("baseline_s", 0.0), t.get("classify_s", 0.0), self.kernel)
        )
        return "\n\n".join(blocks)


def _pct(v: Optional[float]) -> str:
    return "N/A" if v is None else f"{100.0 * v:.2f}%"


def _us(seconds: float) -> str:
    return f"{seconds * 1e6:.1f}us"


def _table(headers: list[str], rows: list[list]) -> str:
    cells = [[str(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))
    sep = "  ".join("-" * w for w in widths)
    body = "\n".join("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in cells)
    return "\n".join([line, sep, body])


# --------------------------------------------------------------------------
# Benchmark


def run_benchmark(
    corpus: LabeledCorpus,
    config: Optional[EngineConfig] = None,
    parallel: bool = False,
) -> MetricsReport:
    """Train on the train split, classify the test split, report metrics.

    Single-threaded by default so the latency summary is honest;
    `parallel=True` classifies on a thread pool and omits latency.
    """
    engine = Engine(config or EngineConfig())
    t0 = time.perf_counter()
    for rec in corpus.train:
        engine.ingest(rec)
    t1 = time.perf_counter()
    engine.baseline()
    t2 = time.perf_counter()

    verdicts: list = [None] * len(corpus.test)
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            for i, v in enumerate(pool.map(engine.ingest, corpus.test)):
                verdicts[i] = v
    else:
        for i, rec in enumerate(corpus.test):
            verdicts[i] = engine.ingest(rec)
    t3 = time.perf_counter()

    records: list[RecordOutcome] = []
    for i, (rec, verdict) in enumerate(zip(corpus.test, verdicts)):
        kind, tag, placement = parse_label(rec.label)
        records.append(
            RecordOutcome(
                index=i,
                kind=kind,
                tag=tag,
                placement=placement,
                outcome=verdict.outcome,
                stage=verdict.stage,
                reason=verdict.reasons[0].code.value if verdict.reasons else None,
                score=verdict.score,
            )
        )

    structural = compute_section(records, "url", "structural")
    content = compute_section(records, "body_header", "content")
    overall = compute_section(records, None, None)
    benign = [r for r in records if r.kind == "benign"]
    benign_flagged = sum(1 for r in benign if r.outcome == "anomalous")
    attack_n = sum(1 for r in records if r.kind == "attack")

    report = MetricsReport(
        structural=structural,
        content=content,
        overall=overall,
        benign_total=len(benign),
        benign_flagged=benign_flagged,
        counts={
            "train": len(corpus.train),
            "test": len(corpus.test),
            "test_benign": len(benign),
            "test_attacks": attack_n,
            "by_reason": dict(engine.by_reason),
        },
        timings={
            "train_s": t1 - t0,
            "baseline_s": t2 - t1,
            "classify_s": t3 - t2,
        },
        latency=None if parallel else engine.latency_summary(),
        kernel=engine.stats()["kernel"],
        records=records,
    )
    _check_metric_identities(report)
    return report


def compute_section(
    records: list[RecordOutcome], placement: Optional[str], stage: Optional[str]
) -> dict[str, TagMetrics]:
    """Per-tag confusion counts for one placement/stage pool.

    The pool for a tag is all benign records plus that tag's attacks at
    `placement` (None = all placements). A record counts as positive
    when flagged at `stage` (None = flagged at all).
    """
    benign = [r for r in records if r.kind == "benign"]

    def positive(r: RecordOutcome) -> bool:
        if r.outcome != "anomalous":
            return False
        return stage is None or r.stage == stage

    fp = sum(1 for r in benign if positive(r))
    tn = len(benign) - fp
    section: dict[str, TagMetrics] = {}
    tags = sorted(
        {r.tag for r in records if r.kind == "attack" and (placement is None or r.placement == placement)}
    )
    for tag in tags:
        attacks = [
            r
            for r in records
            if r.kind == "attack" and r.tag == tag and (placement is None or r.placement == placement)
        ]
        tp = sum(1 for r in attacks if positive(r))
        section[tag] = TagMetrics(tag=tag, tp=tp, fn=len(attacks) - tp, fp=fp, tn=tn)
    return section


def _check_metric_identities(report: MetricsReport) -> None:
    """Assert precision/recall/F1 agree with their defining ratios."""
    for section in (report.structural, report.content, report.overall):
        for m in section.values():
            if m.precision is not None:
                assert abs(m.precision - m.tp / (m.tp + m.fp)) < 1e-12
            if m.recall is not None:
                assert abs(m.recall - m.tp / (m.tp + m.fn)) < 1e-12
            p, r = m.precision, m.recall
            if m.f1 is not None:
                assert abs(m.f1 - 2 * p * r / (p + r)) < 1e-12
