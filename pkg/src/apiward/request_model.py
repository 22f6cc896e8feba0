"""Canonical request parsing and content serialization.

Turns raw HTTP request records into a normalized form (method, path
segments, query pairs) used by the structural learner, and flattens
headers/query/body into the single text layout consumed by the content
scorer.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Optional

DEFAULT_BODY_LIMIT = 4096

_HEX = "0123456789abcdefABCDEF"


class MalformedUrlError(ValueError):
    """Raised when a request path cannot be safely decoded.

    `offset` points into the original url string at the byte that could
    not be handled (bad percent-escape or control character).
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.detail = message
        self.offset = offset


@dataclass
class RawRequest:
    """A single request as it arrives from a log or live capture."""

    method: str
    url: str
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""
    timestamp: Optional[int] = None  # milliseconds since epoch
    label: Optional[str] = None  # evaluation-only ground truth

    @classmethod
    def from_json_record(cls, record: dict) -> "RawRequest":
        """Build a RawRequest from one ingest record.

        Records carry `method`, `url`, optional `headers` (object or
        array of pairs), optional `body` (utf-8 string) or `body_b64`
        (base64 for binary payloads), optional `label` and `ts`.
        """
        headers = record.get("headers") or []
        if isinstance(headers, dict):
            pairs = [(str(k), str(v)) for k, v in headers.items()]
        else:
            pairs = [(str(k), str(v)) for k, v in headers]
        if "body_b64" in record and record["body_b64"]:
            body = base64.b64decode(record["body_b64"])
        else:
            body = str(record.get("body") or "").encode("utf-8")
        return cls(
            method=str(record["method"]).upper(),
            url=str(record["url"]),
            headers=pairs,
            body=body,
            timestamp=record.get("ts"),
            label=record.get("label"),
        )


@dataclass
class ParsedRequest:
    """Normalized request: the unit everything downstream consumes."""

    method: str
    segments: list[str]
    query: list[tuple[str, str]]
    headers: list[tuple[str, str]]
    body: bytes = b""

    @property
    def path(self) -> str:
        """The normalized path this request maps to."""
        return "/" + "/".join(self.segments)


@dataclass
class SerializedContent:
    """Flattened header/query/body text for content analysis."""

    text: str
    truncated: bool = False


def _strip_scheme_authority(url: str) -> tuple[str, int]:
    """Drop a leading scheme://authority, returning (rest, base_offset)."""
    i = url.find("://")
    if i > 0 and url[:i].replace("+", "").replace("-", "").replace(".", "").isalnum():
        start = url.find("/", i + 3)
        if start < 0:
            # Authority only ("http://host" or "http://host?x=1").
            q = url.find("?", i + 3)
            if q < 0:
                return "/", len(url)
            return "/" + url[q:], q
        return url[start:], start
    return url, 0


def _decode_path(path: str, base: int) -> str:
    """Percent-decode a path exactly once, strictly.

    Escapes decode to single bytes mapped onto U+00..U+FF, so one pass
    can never re-interpret decoded characters. Invalid escapes and
    control characters (raw or decoded) raise MalformedUrlError with the
    offset of the offending position in the original url.
    """
    out: list[str] = []
    i = 0
    n = len(path)
    while i < n:
        start = i
        ch = path[i]
        if ch == "%":
            if i + 2 >= n:
                raise MalformedUrlError("truncated percent-escape", base + i)
            hi, lo = path[i + 1], path[i + 2]
            if hi not in _HEX or lo not in _HEX:
                raise MalformedUrlError("invalid percent-escape", base + i)
            ch = chr(int(hi + lo, 16))
            i += 3
        else:
            i += 1
        code = ord(ch)
        if code < 0x20 or code == 0x7F:
            raise MalformedUrlError("control character in path", base + start)
        out.append(ch)
    return "".join(out)


def _decode_query_text(text: str) -> str:
    """Lenient percent-decoding for query keys/values.

    Bad escapes stay literal and '+' is kept as-is; query content is
    analyzed by the content stage, so nothing here should ever reject a
    request outright.
    """
    if "%" not in text:
        return text
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "%" and i + 2 < n and text[i + 1] in _HEX and text[i + 2] in _HEX:
            out.append(chr(int(text[i + 1 : i + 3], 16)))
            i += 3
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _parse_query(qs: str) -> list[tuple[str, str]]:
    """Split a raw query string into ordered (key, value) pairs."""
    pairs: list[tuple[str, str]] = []
    for chunk in qs.split("&"):
        if not chunk:
            continue
        key, sep, value = chunk.partition("=")
        pairs.append((_decode_query_text(key), _decode_query_text(value)))
    return pairs


def parse_request(raw: RawRequest) -> ParsedRequest:
    """Parse a RawRequest into its canonical ParsedRequest form.

    Path normalization: repeated "/" collapse, one trailing "/" is
    stripped, percent-escapes decode exactly once. "." and ".." segments
    are kept verbatim -- resolving them would hide traversal attempts
    from validation.
    """
    if not raw.url:
        raise MalformedUrlError("empty url", 0)
    rest, base = _strip_scheme_authority(raw.url)
    frag = rest.find("#")
    if frag >= 0:
        rest = rest[:frag]
    path, sep, qs = rest.partition("?")
    if not path:
        path = "/"
    if not path.startswith("/"):
        path = "/" + path
    decoded = _decode_path(path, base)
    segments = [seg for seg in decoded.split("/") if seg]
    return ParsedRequest(
        method=raw.method.upper(),
        segments=segments,
        query=_parse_query(qs) if sep else [],
        headers=list(raw.headers),
        body=raw.body,
    )


def serialize_for_content(
    req: ParsedRequest, body_limit: int = DEFAULT_BODY_LIMIT
) -> SerializedContent:
    """Flatten headers, query params and body into one text line.

    Layout: "H:name=value ... QP:key=value ... B:<body>". Header names
    are lowercased and stable-sorted so serialization does not depend on
    arrival order; query pairs keep their order (it is part of the
    request's identity). The body is truncated at `body_limit` bytes and
    decoded byte-for-byte (latin-1) so arbitrary payloads survive.
    """
    tokens: list[str] = []
    for name, value in sorted(
        ((n.lower(), v) for n, v in req.headers), key=lambda kv: kv[0]
    ):
        tokens.append(f"H:{name}={value}")
    for key, value in req.query:
        tokens.append(f"QP:{key}={value}")
    truncated = len(req.body) > body_limit
    tokens.append("B:" + req.body[:body_limit].decode("latin-1"))
    return SerializedContent(text=" ".join(tokens), truncated=truncated)
