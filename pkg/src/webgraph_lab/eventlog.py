"""Page-load trace format: JSONL parsing, validation and serialization.

A trace file starts with a header record::

    {"record": "page", "page_url": "...", "first_party": "..."}

followed by one ``"record": "event"`` object per line.  Event payload
fields are listed in :data:`EVENT_FIELDS`.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from .urls import UnparseableUrl, registrable_domain

__all__ = [
    "EVENT_KINDS",
    "EVENT_FIELDS",
    "TraceError",
    "MalformedLine",
    "SchemaViolation",
    "DanglingReference",
    "TraceValidationError",
    "Diagnostic",
    "PageLoadEvent",
    "PageTrace",
    "parse_trace",
    "read_trace",
    "validate_trace",
    "dump_trace",
    "write_trace",
]

RESOURCE_TYPES = ("script", "image", "iframe", "xhr", "stylesheet", "other")
STORAGE_KINDS = ("cookie", "local")

# Canonical field order per kind; also fixes the serialized key order.
EVENT_FIELDS: dict[str, tuple[str, ...]] = {
    "request": ("request_id", "url", "resource_type", "initiator", "cookie_keys"),
    "response": ("request_id", "status", "set_storage"),
    "redirect": ("request_id", "new_request_id", "to_url"),
    "script_source": ("script_id", "url", "parent_element", "is_eval"),
    "element_created": ("element_id", "tag", "creator"),
    "element_modified": ("element_id", "script_id", "attribute"),
    "storage_set": ("actor", "storage", "key", "value"),
    "storage_get": ("actor", "storage", "key", "value"),
}
EVENT_KINDS = tuple(EVENT_FIELDS)


class TraceError(ValueError):
    """Base class for trace parsing failures."""


class MalformedLine(TraceError):
    def __init__(self, line_no: int, detail: str = ""):
        super().__init__(f"line {line_no}: malformed JSON {detail}".rstrip())
        self.line_no = line_no


class SchemaViolation(TraceError):
    def __init__(self, line_no: int, field_name: str, detail: str = ""):
        msg = f"line {line_no}: bad or missing field {field_name!r}"
        super().__init__(f"{msg} ({detail})" if detail else msg)
        self.line_no = line_no
        self.field = field_name


class DanglingReference(TraceError):
    def __init__(self, line_no: int, ref_id: str):
        super().__init__(f"line {line_no}: reference to undeclared id {ref_id!r}")
        self.line_no = line_no
        self.id = ref_id


class TraceValidationError(TraceError):
    def __init__(self, diagnostics: list["Diagnostic"]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Diagnostic:
    line_no: int
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.rule} {self.detail}".rstrip()


@dataclass
class PageLoadEvent:
    ts: int
    kind: str
    payload: dict[str, Any]
    page_id: str = ""
    line_no: int = 0

    def __getitem__(self, key: str) -> Any:
        return self.payload[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.payload.get(key, default)

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"record": "event", "kind": self.kind, "ts": self.ts}
        for name in EVENT_FIELDS[self.kind]:
            rec[name] = self.payload[name]
        return rec


@dataclass
class PageTrace:
    page_url: str
    first_party: str
    events: list[PageLoadEvent] = field(default_factory=list)

    @property
    def page_id(self) -> str:
        return self.page_url

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PageTrace):
            return NotImplemented
        return (
            self.page_url == other.page_url
            and self.first_party == other.first_party
            and [e.to_record() for e in self.events] == [e.to_record() for e in other.events]
        )


# --- schema checks -------------------------------------------------------

def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _req_str(rec: dict, name: str, line_no: int, nullable: bool = False) -> None:
    if name not in rec:
        raise SchemaViolation(line_no, name, "missing")
    v = rec[name]
    if v is None and nullable:
        return
    if not isinstance(v, str) or (not nullable and v == ""):
        raise SchemaViolation(line_no, name, "expected non-empty string")


def _req_enum(rec: dict, name: str, allowed: Iterable[str], line_no: int) -> None:
    if rec.get(name) not in tuple(allowed):
        raise SchemaViolation(line_no, name, f"expected one of {sorted(allowed)}")


def _check_ref(obj: Any, name: str, kinds: tuple[str, ...], line_no: int, id_nullable: bool) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(line_no, name, "expected object")
    if obj.get("kind") not in kinds:
        raise SchemaViolation(line_no, f"{name}.kind", f"expected one of {list(kinds)}")
    if "id" not in obj:
        raise SchemaViolation(line_no, f"{name}.id", "missing")
    ref = obj["id"]
    if ref is None:
        if not id_nullable or obj["kind"] != "parser":
            raise SchemaViolation(line_no, f"{name}.id", "null id only allowed for parser")
    elif not isinstance(ref, str) or not ref:
        raise SchemaViolation(line_no, f"{name}.id", "expected string or null")
    elif obj["kind"] == "parser":
        raise SchemaViolation(line_no, f"{name}.id", "parser initiator takes null id")


def _check_event_schema(rec: dict, line_no: int) -> PageLoadEvent:
    kind = rec.get("kind")
    if kind not in EVENT_FIELDS:
        raise SchemaViolation(line_no, "kind", f"unknown event kind {kind!r}")
    if not _is_int(rec.get("ts")):
        raise SchemaViolation(line_no, "ts", "expected integer")
    for name in EVENT_FIELDS[kind]:
        if name not in rec:
            raise SchemaViolation(line_no, name, "missing")
    extra = set(rec) - set(EVENT_FIELDS[kind]) - {"record", "kind", "ts"}
    if extra:
        raise SchemaViolation(line_no, sorted(extra)[0], "unexpected field")

    if kind == "request":
        _req_str(rec, "request_id", line_no)
        _req_str(rec, "url", line_no)
        _req_enum(rec, "resource_type", RESOURCE_TYPES, line_no)
        _check_ref(rec["initiator"], "initiator", ("parser", "script", "element"), line_no, True)
        keys = rec["cookie_keys"]
        if not isinstance(keys, list) or not all(isinstance(k, str) and k for k in keys):
            raise SchemaViolation(line_no, "cookie_keys", "expected list of strings")
    elif kind == "response":
        _req_str(rec, "request_id", line_no)
        if not _is_int(rec["status"]):
            raise SchemaViolation(line_no, "status", "expected integer")
        items = rec["set_storage"]
        if not isinstance(items, list):
            raise SchemaViolation(line_no, "set_storage", "expected list")
        for item in items:
            if not isinstance(item, dict) or set(item) != {"storage", "key", "value"}:
                raise SchemaViolation(line_no, "set_storage", "expected {storage,key,value}")
            _req_enum(item, "storage", STORAGE_KINDS, line_no)
            _req_str(item, "key", line_no)
            if not isinstance(item["value"], str):
                raise SchemaViolation(line_no, "set_storage.value", "expected string")
    elif kind == "redirect":
        _req_str(rec, "request_id", line_no)
        _req_str(rec, "new_request_id", line_no)
        _req_str(rec, "to_url", line_no)
    elif kind == "script_source":
        _req_str(rec, "script_id", line_no)
        _req_str(rec, "url", line_no, nullable=True)
        _req_str(rec, "parent_element", line_no, nullable=True)
        if not isinstance(rec["is_eval"], bool):
            raise SchemaViolation(line_no, "is_eval", "expected boolean")
    elif kind == "element_created":
        _req_str(rec, "element_id", line_no)
        _req_str(rec, "tag", line_no)
        _check_ref(rec["creator"], "creator", ("parser", "script"), line_no, True)
    elif kind == "element_modified":
        _req_str(rec, "element_id", line_no)
        _req_str(rec, "script_id", line_no)
        _req_str(rec, "attribute", line_no)
    else:  # storage_set / storage_get
        _check_ref(rec["actor"], "actor", ("script", "request"), line_no, False)
        _req_enum(rec, "storage", STORAGE_KINDS, line_no)
        _req_str(rec, "key", line_no)
        if not isinstance(rec["value"], str):
            raise SchemaViolation(line_no, "value", "expected string")

    payload = {name: rec[name] for name in EVENT_FIELDS[kind]}
    return PageLoadEvent(ts=rec["ts"], kind=kind, payload=payload, line_no=line_no)


def _load_line(line: str, line_no: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(line_no, f"({exc.msg})") from None
    if not isinstance(rec, dict):
        raise MalformedLine(line_no, "(not an object)")
    return rec


# --- public API ----------------------------------------------------------

def parse_trace(data: bytes | str | Iterable[str], *, validate: bool = True) -> PageTrace:
    """Parse a JSONL trace.

    Raises :class:`MalformedLine`, :class:`SchemaViolation` or
    :class:`DanglingReference`.  With ``validate=True`` any other integrity
    diagnostic (duplicate ids, timestamps going backwards, first-party
    mismatch) raises :class:`TraceValidationError`.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines() if isinstance(data, str) else data

    trace: PageTrace | None = None
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        rec = _load_line(line, line_no)
        if trace is None:
            if rec.get("record") != "page":
                raise SchemaViolation(line_no, "record", "first line must be the page header")
            _req_str(rec, "page_url", line_no)
            _req_str(rec, "first_party", line_no)
            trace = PageTrace(page_url=rec["page_url"], first_party=rec["first_party"])
            continue
        if rec.get("record") != "event":
            raise SchemaViolation(line_no, "record", "expected 'event'")
        event = _check_event_schema(rec, line_no)
        event.page_id = trace.page_url
        trace.events.append(event)
    if trace is None:
        raise SchemaViolation(1, "record", "empty input, header missing")

    if validate:
        diags = validate_trace(trace)
        for d in diags:
            if d.rule == "DanglingReference":
                raise DanglingReference(d.line_no, d.detail)
        if diags:
            raise TraceValidationError(diags)
    return trace


def read_trace(path, *, validate: bool = True) -> PageTrace:
    with open(path, "rb") as fh:
        return parse_trace(fh.read(), validate=validate)


def validate_trace(trace: PageTrace, suffixes=None) -> list[Diagnostic]:
    """Check referential integrity and ordering; one diagnostic per violation."""
    out: list[Diagnostic] = []
    try:
        if registrable_domain(trace.page_url, suffixes) != trace.first_party.lower():
            out.append(Diagnostic(1, "FirstPartyMismatch", trace.first_party))
    except UnparseableUrl:
        out.append(Diagnostic(1, "UnparseablePageUrl", trace.page_url))

    requests: set[str] = set()
    elements: set[str] = set()
    scripts: set[str] = set()
    last_ts: int | None = None

    def dangling(ev: PageLoadEvent, ref: str) -> None:
        out.append(Diagnostic(ev.line_no, "DanglingReference", ref))

    def declare(ev: PageLoadEvent, pool: set[str], ident: str) -> None:
        if ident in pool:
            out.append(Diagnostic(ev.line_no, "DuplicateId", ident))
        pool.add(ident)

    def check_ref(ev: PageLoadEvent, ref: dict) -> None:
        kind, ident = ref["kind"], ref["id"]
        pool = {"script": scripts, "element": elements, "request": requests}.get(kind)
        if pool is not None and ident not in pool:
            dangling(ev, ident)

    for ev in trace.events:
        if last_ts is not None and ev.ts < last_ts:
            out.append(Diagnostic(ev.line_no, "NonMonotonicTimestamp", f"{ev.ts} < {last_ts}"))
        last_ts = ev.ts if last_ts is None else max(last_ts, ev.ts)
        p = ev.payload
        k = ev.kind
        if k == "request":
            check_ref(ev, p["initiator"])
            declare(ev, requests, p["request_id"])
        elif k == "response":
            if p["request_id"] not in requests:
                dangling(ev, p["request_id"])
        elif k == "redirect":
            if p["request_id"] not in requests:
                dangling(ev, p["request_id"])
            declare(ev, requests, p["new_request_id"])
        elif k == "script_source":
            if p["parent_element"] is not None and p["parent_element"] not in elements:
                dangling(ev, p["parent_element"])
            declare(ev, scripts, p["script_id"])
        elif k == "element_created":
            check_ref(ev, p["creator"])
            declare(ev, elements, p["element_id"])
        elif k == "element_modified":
            if p["element_id"] not in elements:
                dangling(ev, p["element_id"])
            if p["script_id"] not in scripts:
                dangling(ev, p["script_id"])
        else:
            check_ref(ev, p["actor"])
    return out


def dump_trace(trace: PageTrace) -> str:
    """Serialize to JSONL; ``parse_trace(dump_trace(t)) == t``."""
    buf = io.StringIO()
    header = {"record": "page", "page_url": trace.page_url, "first_party": trace.first_party}
    buf.write(json.dumps(header, separators=(",", ":")) + "\n")
    for ev in trace.events:
        buf.write(json.dumps(ev.to_record(), separators=(",", ":")) + "\n")
    return buf.getvalue()


def write_trace(trace: PageTrace, path) -> None:
    from .artifacts import atomic_write_text

    atomic_write_text(path, dump_trace(trace))
