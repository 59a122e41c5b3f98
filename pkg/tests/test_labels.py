import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from webgraph_lab.corpus import CorpusSpec, corpus_rules, generate_pages
from webgraph_lab.graph import build_graph
from webgraph_lab.labels import (
    ATS,
    DOMAIN_ANCHOR,
    NON_ATS,
    SUBSTRING,
    SUBSTRING_THIRD_PARTY,
    FilterRule,
    InvalidRule,
    format_rules,
    label_from_truth,
    label_graph,
    labels_csv,
    match_url,
    parse_labels_csv,
    parse_rules,
)
from webgraph_lab.urls import UnparseableUrl

from .conftest import ROOT


def test_parse_examples():
    assert parse_rules("||tracker1.com^") == (FilterRule(DOMAIN_ANCHOR, "tracker1.com"),)
    assert parse_rules("! comment\n\n") == ()
    assert parse_rules("/sync$third-party") == (FilterRule(SUBSTRING_THIRD_PARTY, "/sync"),)
    assert parse_rules("/pixel.gif") == (FilterRule(SUBSTRING, "/pixel.gif"),)


@pytest.mark.parametrize("text, line", [("@@||a.com^", 1), ("ok\n||bad host^", 2), ("x$image", 1), ("||a.com", 1)])
def test_invalid_rules(text, line):
    with pytest.raises(InvalidRule) as exc:
        parse_rules(text)
    assert exc.value.line_no == line


def test_format_round_trip():
    text = "||tracker1.com^\n/sync$third-party\n/beacon\n"
    assert format_rules(parse_rules(text)) == text


def test_match_examples():
    rules = parse_rules("||tracker1.com^")
    assert match_url(rules, "http://sub.tracker1.com/a", True)
    assert match_url(rules, "http://sub.tracker1.com/a", False)
    assert not match_url(rules, "http://nottracker1.com/a", True)
    gated = parse_rules("/sync$third-party")
    assert not match_url(gated, "http://tracker2.com/sync", False)
    assert match_url(gated, "http://tracker2.com/sync", True)
    assert not match_url((), "http://anything.com/", True)
    with pytest.raises(UnparseableUrl):
        match_url(rules, "not a url", True)


def test_fixture_labels(sync_graph):
    rules = parse_rules("||tracker1.com^\n||tracker2.com^\n||tracker3.com^\n")
    labels = label_graph(sync_graph, rules)
    assert len(labels) == 5
    assert all(l.label == ATS for l in labels)
    assert {l.source for l in labels} <= {"rule:0", "rule:1", "rule:2"}
    assert all(l.label == NON_ATS and l.source == "none" for l in label_graph(sync_graph, ()))


def test_unparseable_url_becomes_non_ats(sync_graph):
    g = sync_graph.copy()
    target = g.network_nodes()[0]
    target.attrs["url"] = "garbage"
    labels = {l.node_id: l for l in label_graph(g, parse_rules("||tracker1.com^"))}
    assert labels[target.id].label == NON_ATS
    assert labels[target.id].source == "unparseable"
    assert labels[target.id].diagnostic
    assert ROOT not in labels


def test_labels_csv_round_trip(sync_graph):
    labels = label_graph(sync_graph, parse_rules("||tracker2.com^"))
    assert parse_labels_csv(labels_csv(labels)) == {l.node_id: l.label for l in labels}


def test_generator_rules_reproduce_ground_truth():
    spec = CorpusSpec(n_pages=30, seed=4)
    rules = tuple(corpus_rules(spec))
    for _, trace, truth in generate_pages(spec):
        g = build_graph(trace)
        by_rule = {l.node_id: l.label for l in label_graph(g, rules)}
        by_truth = {l.node_id: l.label for l in label_from_truth(g, truth.labels)}
        assert by_rule == by_truth


_rule_text = st.one_of(
    st.sampled_from(["tracker1.com", "tracker2.com", "cdn.example.com", "a.co.uk"]).map(lambda d: f"||{d}^"),
    st.sampled_from(["/sync", "track", "?uid=", ".js"]).map(lambda s: s),
    st.sampled_from(["/sync", "pixel", "id="]).map(lambda s: f"{s}$third-party"),
)
_urls = st.sampled_from([
    "http://tracker1.com/track.js",
    "http://sub.tracker2.com/sync?uid=1",
    "http://cdn.example.com/app.js",
    "http://www.example.com/pixel.gif?id=2",
    "http://other.org/page",
])


@settings(max_examples=200, deadline=None)
@given(st.lists(_rule_text, max_size=6), _rule_text, _urls, st.booleans())
def test_adding_a_rule_never_unlabels(rule_lines, extra, url, third):
    rules = parse_rules("\n".join(rule_lines))
    more = parse_rules("\n".join([*rule_lines, extra]))
    assert match_url(more, url, third) >= match_url(rules, url, third)


@settings(max_examples=200, deadline=None)
@given(st.lists(_rule_text, max_size=6), _urls, st.booleans(), st.randoms(use_true_random=False))
def test_rule_order_independence(rule_lines, url, third, rnd: random.Random):
    shuffled = list(rule_lines)
    rnd.shuffle(shuffled)
    assert match_url(parse_rules("\n".join(rule_lines)), url, third) == match_url(
        parse_rules("\n".join(shuffled)), url, third
    )
