"""Cross-layer page graph with information-flow edges.

Nodes are HTML elements, network requests, scripts and storage entries.
Structural edges record who created, modified or requested what; flow edges
(``SharedValue`` and ``CommonStorageAccess``) record identifier sharing.
"""

from __future__ import annotations

import base64
import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .eventlog import PageTrace
from .urls import UnparseableUrl, url_tokens

__all__ = [
    "HTML",
    "NETWORK",
    "SCRIPT",
    "STORAGE",
    "EDGE_KINDS",
    "FLOW_EDGE_KINDS",
    "TRANSFORMS",
    "GraphConfig",
    "Node",
    "Edge",
    "PageGraph",
    "ValueMatchIndex",
    "build_graph",
    "match_values",
    "transform_value",
    "flow_subgraph",
    "check_edge_domains",
]

HTML, NETWORK, SCRIPT, STORAGE = "Html", "Network", "Script", "Storage"
NODE_KINDS = (HTML, NETWORK, SCRIPT, STORAGE)

CREATES = "Creates"
MODIFIES = "Modifies"
INITIATES = "InitiatesRequest"
REDIRECT = "Redirect"
STORAGE_SET = "StorageSet"
STORAGE_GET = "StorageGet"
SHARED_VALUE = "SharedValue"
COMMON_ACCESS = "CommonStorageAccess"
EDGE_KINDS = (CREATES, MODIFIES, INITIATES, REDIRECT, STORAGE_SET, STORAGE_GET, SHARED_VALUE, COMMON_ACCESS)
FLOW_EDGE_KINDS = frozenset({SHARED_VALUE, COMMON_ACCESS})

TRANSFORMS = ("identity", "base64", "md5", "sha1")


def transform_value(value: str, transform: str) -> str:
    raw = value.encode("utf-8")
    if transform == "identity":
        return value
    if transform == "base64":
        return base64.b64encode(raw).decode("ascii")
    if transform == "md5":
        return hashlib.md5(raw).hexdigest()
    if transform == "sha1":
        return hashlib.sha1(raw).hexdigest()
    raise ValueError(f"unknown transform {transform!r}")


@dataclass(frozen=True)
class GraphConfig:
    min_value_len: int = 8
    transforms: tuple[str, ...] = TRANSFORMS


@dataclass
class Node:
    id: int
    kind: str
    attrs: dict
    ts: int = 0

    @property
    def url(self) -> str | None:
        return self.attrs.get("url")


class Edge(NamedTuple):
    src: int
    dst: int
    kind: str
    flow: bool
    # SharedValue: match transform; CommonStorageAccess: id of the shared storage node.
    label: str = ""


@dataclass
class PageGraph:
    page_url: str
    first_party: str
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    config: GraphConfig = field(default_factory=GraphConfig)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def network_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == NETWORK]

    def copy(self) -> "PageGraph":
        nodes = [Node(n.id, n.kind, _copy_attrs(n.attrs), n.ts) for n in self.nodes]
        return PageGraph(self.page_url, self.first_party, nodes, list(self.edges), self.config)

    def storage_values(self) -> list[tuple[int, str]]:
        return [(n.id, v) for n in self.nodes if n.kind == STORAGE for v in n.attrs["values"]]

    def network_urls(self) -> list[tuple[int, str]]:
        return [(n.id, n.attrs["url"]) for n in self.nodes if n.kind == NETWORK]

    def rematch_values(self) -> "PageGraph":
        """Recompute SharedValue edges in place after URL or value edits."""
        kept = [e for e in self.edges if e.kind != SHARED_VALUE]
        kept.extend(match_values(self.storage_values(), self.network_urls(), self.config))
        self.edges = kept
        return self

    def add_node(self, kind: str, attrs: dict, ts: int = 0) -> Node:
        node = Node(len(self.nodes), kind, attrs, ts)
        self.nodes.append(node)
        return node

    # --- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "page": {
                "page_url": self.page_url,
                "first_party": self.first_party,
                "min_value_len": self.config.min_value_len,
                "transforms": list(self.config.transforms),
            },
            "nodes": [{"id": n.id, "kind": n.kind, "ts": n.ts, "attrs": n.attrs} for n in self.nodes],
            "edges": [
                {"src": e.src, "dst": e.dst, "kind": e.kind, "flow": e.flow, "label": e.label}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PageGraph":
        page = data["page"]
        cfg = GraphConfig(page.get("min_value_len", 8), tuple(page.get("transforms", TRANSFORMS)))
        nodes = [Node(n["id"], n["kind"], n["attrs"], n.get("ts", 0)) for n in data["nodes"]]
        if [n.id for n in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..n-1 in order")
        edges = [Edge(e["src"], e["dst"], e["kind"], e["flow"], e.get("label", "")) for e in data["edges"]]
        return cls(page["page_url"], page["first_party"], nodes, edges, cfg)


def _copy_attrs(attrs: dict) -> dict:
    out = dict(attrs)
    if "values" in out:
        out["values"] = list(out["values"])
    return out


class ValueMatchIndex:
    """Transformed storage value -> [(storage node, transform)]."""

    def __init__(self, storage_values: Iterable[tuple[int, str]], config: GraphConfig):
        self.min_value_len = config.min_value_len
        self.entries: dict[str, list[tuple[int, str]]] = {}
        for node_id, value in storage_values:
            if len(value) < config.min_value_len:
                continue
            for t in config.transforms:
                bucket = self.entries.setdefault(transform_value(value, t), [])
                if (node_id, t) not in bucket:
                    bucket.append((node_id, t))

    def lookup(self, token: str) -> list[tuple[int, str]]:
        return self.entries.get(token, [])


def match_values(
    storage_values: Iterable[tuple[int, str]],
    urls: Iterable[tuple[int, str]],
    config: GraphConfig = GraphConfig(),
) -> list[Edge]:
    """SharedValue edges for every storage value found in a URL token.

    Each match adds storage -> network.  Network nodes carrying the same
    (value, transform) are linked pairwise, lower id (earlier) to higher.
    The result is deduplicated and sorted.
    """
    storage_values = list(storage_values)
    index = ValueMatchIndex(storage_values, config)
    if not index.entries:
        return []
    edges: set[Edge] = set()
    carriers: dict[tuple[str, str], set[int]] = {}
    for net_id, url in urls:
        try:
            tokens = set(url_tokens(url))
        except UnparseableUrl:
            continue
        for tok in tokens:
            for storage_id, t in index.lookup(tok):
                edges.add(Edge(storage_id, net_id, SHARED_VALUE, True, t))
                carriers.setdefault((tok, t), set()).add(net_id)
    for (_tok, t), nets in carriers.items():
        for a, b in itertools.combinations(sorted(nets), 2):
            edges.add(Edge(a, b, SHARED_VALUE, True, t))
    return sorted(edges)


def build_graph(trace: PageTrace, config: GraphConfig = GraphConfig()) -> PageGraph:
    """Compose the page graph from a validated trace.

    An empty trace yields an empty graph.  Otherwise node 0 is the document
    root (``Html`` tag ``#document``) which parents parser-created elements
    and parser-initiated requests.
    """
    g = PageGraph(trace.page_url, trace.first_party, config=config)
    if not trace.events:
        return g

    root = g.add_node(HTML, {"tag": "#document", "element_id": None}, trace.events[0].ts)
    elements: dict[str, int] = {}
    scripts: dict[str, int] = {}
    requests: dict[str, int] = {}
    storage: dict[tuple[str, str], int] = {}
    # storage node -> accessing non-storage nodes, in first-access order
    accessors: dict[int, list[int]] = {}

    def add_edge(src: int, dst: int, kind: str) -> None:
        if src != dst:
            g.edges.append(Edge(src, dst, kind, False))

    def storage_node(kind: str, key: str, ts: int) -> int:
        sk = (kind, key)
        if sk not in storage:
            storage[sk] = g.add_node(STORAGE, {"storage": kind, "key": key, "values": []}, ts).id
        return storage[sk]

    def record_value(node_id: int, value: str) -> None:
        values = g.nodes[node_id].attrs["values"]
        if value not in values:
            values.append(value)

    def access(actor: int, sid: int) -> None:
        acc = accessors.setdefault(sid, [])
        if actor not in acc:
            acc.append(actor)

    def resolve(ref: dict) -> int:
        kind, ident = ref["kind"], ref["id"]
        if kind == "parser":
            return root.id
        return {"script": scripts, "element": elements, "request": requests}[kind][ident]

    for ev in trace.events:
        p = ev.payload
        if ev.kind == "element_created":
            node = g.add_node(HTML, {"tag": p["tag"].lower(), "element_id": p["element_id"]}, ev.ts)
            elements[p["element_id"]] = node.id
            add_edge(resolve(p["creator"]), node.id, CREATES)
        elif ev.kind == "element_modified":
            add_edge(scripts[p["script_id"]], elements[p["element_id"]], MODIFIES)
        elif ev.kind == "script_source":
            node = g.add_node(
                SCRIPT, {"url": p["url"], "is_eval": p["is_eval"], "script_id": p["script_id"]}, ev.ts
            )
            scripts[p["script_id"]] = node.id
            if p["parent_element"] is not None:
                add_edge(elements[p["parent_element"]], node.id, CREATES)
        elif ev.kind == "request":
            node = g.add_node(
                NETWORK,
                {"url": p["url"], "resource_type": p["resource_type"], "request_id": p["request_id"], "status": None},
                ev.ts,
            )
            requests[p["request_id"]] = node.id
            add_edge(resolve(p["initiator"]), node.id, INITIATES)
            for key in p["cookie_keys"]:
                sid = storage_node("cookie", key, ev.ts)
                add_edge(sid, node.id, STORAGE_GET)
                access(node.id, sid)
        elif ev.kind == "response":
            nid = requests[p["request_id"]]
            g.nodes[nid].attrs["status"] = p["status"]
            for item in p["set_storage"]:
                sid = storage_node(item["storage"], item["key"], ev.ts)
                record_value(sid, item["value"])
                add_edge(nid, sid, STORAGE_SET)
                access(nid, sid)
        elif ev.kind == "redirect":
            src = requests[p["request_id"]]
            node = g.add_node(
                NETWORK,
                {
                    "url": p["to_url"],
                    "resource_type": g.nodes[src].attrs["resource_type"],
                    "request_id": p["new_request_id"],
                    "status": None,
                },
                ev.ts,
            )
            requests[p["new_request_id"]] = node.id
            add_edge(src, node.id, REDIRECT)
        else:  # storage_set / storage_get
            actor = resolve(p["actor"])
            sid = storage_node(p["storage"], p["key"], ev.ts)
            record_value(sid, p["value"])
            if ev.kind == "storage_set":
                add_edge(actor, sid, STORAGE_SET)
            else:
                add_edge(sid, actor, STORAGE_GET)
            access(actor, sid)

    common = set()
    for sid, actors in accessors.items():
        for a, b in itertools.combinations(sorted(actors), 2):
            common.add(Edge(a, b, COMMON_ACCESS, True, str(sid)))
    g.edges.extend(sorted(common))
    g.edges.extend(match_values(g.storage_values(), g.network_urls(), config))
    return g


def flow_subgraph(graph: PageGraph) -> PageGraph:
    """View with only SharedValue and CommonStorageAccess edges; all nodes kept."""
    return PageGraph(
        graph.page_url,
        graph.first_party,
        graph.nodes,
        [e for e in graph.edges if e.kind in FLOW_EDGE_KINDS],
        graph.config,
    )


_ALLOWED = {
    CREATES: ({HTML, SCRIPT}, {HTML, SCRIPT}),
    MODIFIES: ({SCRIPT}, {HTML}),
    INITIATES: ({HTML, SCRIPT, NETWORK}, {NETWORK}),
    REDIRECT: ({NETWORK}, {NETWORK}),
    STORAGE_SET: ({SCRIPT, NETWORK}, {STORAGE}),
    STORAGE_GET: ({STORAGE}, {SCRIPT, NETWORK}),
    SHARED_VALUE: ({NETWORK, STORAGE}, {NETWORK}),
    COMMON_ACCESS: ({HTML, SCRIPT, NETWORK}, {HTML, SCRIPT, NETWORK}),
}


def check_edge_domains(graph: PageGraph) -> list[str]:
    """Exhaustive scan for edges violating endpoint-kind rules or self-loops."""
    problems = []
    n = len(graph.nodes)
    for e in graph.edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            problems.append(f"dangling endpoint {e}")
            continue
        if e.src == e.dst:
            problems.append(f"self-loop {e}")
        srcs, dsts = _ALLOWED[e.kind]
        if graph.nodes[e.src].kind not in srcs or graph.nodes[e.dst].kind not in dsts:
            problems.append(f"bad endpoint kinds {e}")
        if e.flow != (e.kind in FLOW_EDGE_KINDS):
            problems.append(f"flow flag mismatch {e}")
    return problems
