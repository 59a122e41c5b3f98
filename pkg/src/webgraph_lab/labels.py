"""Ground-truth labels for request nodes from a small filter-rule grammar.

Three rule forms are understood:

    ||tracker.com^          host is tracker.com or a subdomain of it
    /pixel                  substring anywhere in the URL
    /sync$third-party       substring, only for third-party requests

Blank lines and lines starting with ``!`` are ignored.  Exception rules
(``@@``) are rejected rather than silently dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .artifacts import csv_text
from .graph import NETWORK, PageGraph
from .urls import SuffixList, UnparseableUrl, hostname, is_third_party

ATS = "ATS"
NON_ATS = "NonATS"
LABELS = (ATS, NON_ATS)

DOMAIN_ANCHOR = "domain_anchor"
SUBSTRING = "substring"
SUBSTRING_THIRD_PARTY = "substring_third_party"

_HOST_SUFFIX = re.compile(r"^(?!-)[a-z0-9-]+(?<!-)(\.(?!-)[a-z0-9-]+(?<!-))*$")


class InvalidRule(ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


@dataclass(frozen=True)
class FilterRule:
    kind: str
    pattern: str

    def matches(self, url: str, third_party: bool) -> bool:
        if self.kind == DOMAIN_ANCHOR:
            host = hostname(url).lower()
            return host == self.pattern or host.endswith("." + self.pattern)
        if self.kind == SUBSTRING_THIRD_PARTY and not third_party:
            return False
        return self.pattern in url

    def to_text(self) -> str:
        if self.kind == DOMAIN_ANCHOR:
            return f"||{self.pattern}^"
        if self.kind == SUBSTRING_THIRD_PARTY:
            return f"{self.pattern}$third-party"
        return self.pattern


RuleSet = tuple[FilterRule, ...]


def parse_rule(line: str, line_no: int = 1) -> FilterRule:
    text = line.strip()
    if text.startswith("@@"):
        raise InvalidRule(line_no, "exception rules are not supported")
    if text.startswith("||"):
        if not text.endswith("^"):
            raise InvalidRule(line_no, "domain anchor must end with '^'")
        domain = text[2:-1].lower()
        if not _HOST_SUFFIX.match(domain):
            raise InvalidRule(line_no, f"not a hostname: {domain!r}")
        return FilterRule(DOMAIN_ANCHOR, domain)
    if "$" in text:
        pattern, _, option = text.rpartition("$")
        if option != "third-party":
            raise InvalidRule(line_no, f"unsupported option {option!r}")
        if not pattern:
            raise InvalidRule(line_no, "empty pattern")
        return FilterRule(SUBSTRING_THIRD_PARTY, pattern)
    return FilterRule(SUBSTRING, text)


def parse_rules(text: str) -> RuleSet:
    rules = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("!"):
            continue
        rules.append(parse_rule(stripped, line_no))
    return tuple(rules)


def read_rules(path) -> RuleSet:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read())


def format_rules(rules: Iterable[FilterRule]) -> str:
    return "".join(r.to_text() + "\n" for r in rules)


def match_url(rules: Iterable[FilterRule], url: str, is_third_party: bool) -> bool:
    """True when any rule matches.  Raises UnparseableUrl for bad input."""
    hostname(url)  # validates
    return any(r.matches(url, is_third_party) for r in rules)


@dataclass(frozen=True)
class LabeledNode:
    node_id: int
    label: str
    source: str
    diagnostic: str = ""


def label_graph(graph: PageGraph, rules: RuleSet, suffixes: SuffixList | None = None) -> list[LabeledNode]:
    """One label per Network node.  Unparseable URLs become NonATS with a diagnostic."""
    out = []
    for node in graph.nodes:
        if node.kind != NETWORK:
            continue
        url = node.attrs.get("url")
        try:
            third = is_third_party(url, graph.first_party, suffixes)
            hit = next((i for i, r in enumerate(rules) if r.matches(url, third)), None)
        except UnparseableUrl as exc:
            out.append(LabeledNode(node.id, NON_ATS, "unparseable", str(exc)))
            continue
        if hit is None:
            out.append(LabeledNode(node.id, NON_ATS, "none"))
        else:
            out.append(LabeledNode(node.id, ATS, f"rule:{hit}"))
    return out


def label_from_truth(graph: PageGraph, truth: dict[str, str]) -> list[LabeledNode]:
    """Labels taken from generator ground truth, keyed by request id."""
    out = []
    for node in graph.nodes:
        if node.kind != NETWORK:
            continue
        label = truth.get(node.attrs.get("request_id"))
        if label is None:
            out.append(LabeledNode(node.id, NON_ATS, "generator", "request id missing from ground truth"))
        else:
            out.append(LabeledNode(node.id, label, "generator"))
    return out


def labels_csv(labels: Iterable[LabeledNode]) -> str:
    return csv_text(["node_id", "label", "source"], [(l.node_id, l.label, l.source) for l in labels])


def parse_labels_csv(text: str) -> dict[int, str]:
    import csv
    import io

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:2] != ["node_id", "label"]:
        raise ValueError("labels CSV must start with node_id,label")
    out = {}
    for rec in reader:
        if rec[1] not in LABELS:
            raise ValueError(f"unknown label {rec[1]!r}")
        out[int(rec[0])] = rec[1]
    return out
