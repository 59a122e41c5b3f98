import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webgraph_lab.corpus import CorpusSpec, generate_page
from webgraph_lab.eventlog import (
    DanglingReference,
    MalformedLine,
    PageLoadEvent,
    PageTrace,
    SchemaViolation,
    TraceValidationError,
    dump_trace,
    parse_trace,
    validate_trace,
)

from .conftest import SYNC_TRACE

HEADER = '{"record":"page","page_url":"http://example.com/","first_party":"example.com"}'


def test_header_only():
    trace = parse_trace(HEADER + "\n")
    assert trace.events == []
    assert trace.first_party == "example.com"


def test_sync_fixture_counts(sync_trace):
    kinds = [e.kind for e in sync_trace.events]
    assert kinds.count("request") + kinds.count("redirect") == 5
    assert kinds.count("redirect") == 1
    assert kinds.count("script_source") == 2
    assert kinds.count("storage_get") == 1
    sets = kinds.count("storage_set") + sum(
        len(e["set_storage"]) for e in sync_trace.events if e.kind == "response"
    )
    assert sets >= 1
    assert validate_trace(sync_trace) == []


def test_dangling_response():
    text = HEADER + '\n{"record":"event","kind":"response","ts":1,"request_id":"r9","status":200,"set_storage":[]}\n'
    with pytest.raises(DanglingReference) as exc:
        parse_trace(text)
    assert exc.value.line_no == 2
    assert exc.value.id == "r9"


def test_malformed_line():
    with pytest.raises(MalformedLine) as exc:
        parse_trace(HEADER + "\n{not json\n")
    assert exc.value.line_no == 2


@pytest.mark.parametrize(
    "line, field",
    [
        ('{"record":"event","kind":"request","ts":1,"request_id":"r1","url":"http://a.com/",'
         '"resource_type":"video","initiator":{"kind":"parser","id":null},"cookie_keys":[]}', "resource_type"),
        ('{"record":"event","kind":"request","ts":"1","request_id":"r1","url":"http://a.com/",'
         '"resource_type":"image","initiator":{"kind":"parser","id":null},"cookie_keys":[]}', "ts"),
        ('{"record":"event","kind":"request","ts":1,"request_id":"r1",'
         '"resource_type":"image","initiator":{"kind":"parser","id":null},"cookie_keys":[]}', "url"),
        ('{"record":"event","kind":"request","ts":1,"request_id":"r1","url":"http://a.com/","extra":1,'
         '"resource_type":"image","initiator":{"kind":"parser","id":null},"cookie_keys":[]}', "extra"),
    ],
)
def test_schema_violation(line, field):
    with pytest.raises(SchemaViolation) as exc:
        parse_trace(HEADER + "\n" + line + "\n")
    assert exc.value.field == field
    assert exc.value.line_no == 2


def _event(ts, kind, **payload):
    return PageLoadEvent(ts, kind, payload)


def _request(ts, rid):
    return _event(ts, "request", request_id=rid, url="http://a.com/x", resource_type="image",
                  initiator={"kind": "parser", "id": None}, cookie_keys=[])


def test_duplicate_id_diagnostic():
    trace = PageTrace("http://example.com/", "example.com", [_request(1, "r1"), _request(2, "r1")])
    rules = [d.rule for d in validate_trace(trace)]
    assert rules == ["DuplicateId"]


def test_non_monotonic_timestamp():
    trace = PageTrace("http://example.com/", "example.com", [_request(5, "r1"), _request(2, "r2")])
    assert [d.rule for d in validate_trace(trace)] == ["NonMonotonicTimestamp"]


def test_first_party_mismatch_is_reported():
    trace = PageTrace("http://www.example.com/", "other.com", [])
    assert [d.rule for d in validate_trace(trace)] == ["FirstPartyMismatch"]
    with pytest.raises(TraceValidationError):
        parse_trace('{"record":"page","page_url":"http://www.example.com/","first_party":"other.com"}\n')


def test_round_trip_fixture(sync_trace):
    again = parse_trace(dump_trace(sync_trace))
    assert again == sync_trace
    assert dump_trace(again) == dump_trace(sync_trace)


def test_fixture_file_round_trip_is_byte_stable(sync_trace):
    # every record, key order included, survives a second serialization
    records = [json.loads(line) for line in dump_trace(sync_trace).splitlines()]
    assert records[0]["record"] == "page"
    assert len(records) == len(SYNC_TRACE.read_text().splitlines())


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=0, max_value=50))
def test_generated_traces_round_trip(seed, index):
    trace, _ = generate_page(CorpusSpec(n_pages=1, seed=seed), index)
    assert validate_trace(trace) == []
    assert parse_trace(dump_trace(trace)) == trace
