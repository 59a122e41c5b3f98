"""Per-request feature vectors: content, structural and flow features.

Five feature sets are defined.  ``adgraph_*`` sets are computed on the
AdGraph-style view of the page graph (no storage layer, no redirect edges);
``webgraph_*`` sets use every structural edge and, for the flow variants,
the information-flow subgraph as well.

Ascendant attributes are not enumerated anywhere canonical; here they are
the ancestor counts per node kind plus two flags (an ancestor writes to
storage, an ancestor is an eval script).
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence
from urllib.parse import parse_qsl, unquote

import numpy as np

from . import kernels
from .artifacts import csv_text
from .graph import (
    COMMON_ACCESS,
    FLOW_EDGE_KINDS,
    HTML,
    INITIATES,
    MODIFIES,
    NETWORK,
    REDIRECT,
    SCRIPT,
    SHARED_VALUE,
    STORAGE,
    STORAGE_GET,
    STORAGE_SET,
    PageGraph,
)
from .urls import SuffixList, UnparseableUrl, is_subdomain_of, parse_url, registrable_domain

RESOURCE_TYPES = ("script", "image", "iframe", "xhr", "stylesheet", "other")

CONTENT = (
    *(f"req_type_{t}" for t in RESOURCE_TYPES),
    "ad_keyword",
    "screen_dimensions",
    "valid_query_string",
    "url_length",
    "third_party",
    "first_party_subdomain",
    "base_domain_in_query",
    "semicolon_in_query",
)

_GRAPH_SIZE = ("graph_nodes", "graph_edges", "graph_nodes_per_edge")
_DEGREE = ("in_degree", "out_degree", "in_out_degree", "avg_degree_connectivity")
_CENTRALITY = ("closeness_centrality", "eccentricity")
_ANCESTRY = (
    "asc_html",
    "asc_network",
    "asc_script",
    "asc_storage",
    "asc_sets_storage",
    "asc_is_eval",
    "descendant_of_script",
    "parent_is_eval",
)
_ADGRAPH_ONLY = (
    "node_siblings",
    "parent_siblings",
    "node_modifications",
    "parent_modifications",
    "parent_is_html",
    "parent_is_script",
    "parent_is_network",
    "parent_is_iframe",
    "parent_in_degree",
    "parent_out_degree",
    "parent_in_out_degree",
    "parent_avg_degree_connectivity",
    "sibling_html",
    "sibling_network",
    "sibling_script",
)

STRUCTURAL_WEBGRAPH = _GRAPH_SIZE + _DEGREE + _CENTRALITY + _ANCESTRY
STRUCTURAL_ADGRAPH = _GRAPH_SIZE + _DEGREE + _ADGRAPH_ONLY + _ANCESTRY

FLOW = (
    "cookie_sets",
    "cookie_gets",
    "local_sets",
    "local_gets",
    "requests_sent",
    "requests_received",
    "redirects_sent",
    "redirects_received",
    "redirect_depth",
    "common_storage_access",
    "shared_value_in",
    "shared_value_out",
    "shared_info_ancestors",
    "flow_graph_nodes",
    "flow_graph_edges",
    "flow_graph_nodes_per_edge",
    "flow_in_degree",
    "flow_out_degree",
    "flow_in_out_degree",
    "flow_avg_degree_connectivity",
    "flow_closeness_centrality",
    "flow_eccentricity",
)

FEATURE_SETS: dict[str, tuple[str, ...]] = {
    "adgraph_full": STRUCTURAL_ADGRAPH + CONTENT,
    "adgraph_structural": STRUCTURAL_ADGRAPH,
    "webgraph_full": STRUCTURAL_WEBGRAPH + FLOW + CONTENT,
    "webgraph_noflow": STRUCTURAL_WEBGRAPH,
    "webgraph_flowonly": STRUCTURAL_WEBGRAPH + FLOW,
}

CATEGORY: dict[str, str] = {
    **{n: "Content" for n in CONTENT},
    **{n: "Structure" for n in STRUCTURAL_ADGRAPH + STRUCTURAL_WEBGRAPH},
    **{n: "Flow" for n in FLOW},
}

_DIMENSIONS = re.compile(r"\d{2,4}x\d{2,4}")
_WORD_SPLIT = re.compile(r"[^a-z0-9]+")


class FeatureSetMismatch(ValueError):
    pass


def load_keywords(path=None) -> tuple[str, ...]:
    if path is None:
        text = resources.files("webgraph_lab").joinpath("data/ad_keywords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    words = []
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.append(line)
    return tuple(words)


@dataclass(frozen=True)
class FeatureConfig:
    keywords: tuple[str, ...] = field(default_factory=load_keywords)
    suffixes: SuffixList | None = None


def feature_names(feature_set: str) -> tuple[str, ...]:
    try:
        return FEATURE_SETS[feature_set]
    except KeyError:
        raise ValueError(f"unknown feature set {feature_set!r}; choose from {sorted(FEATURE_SETS)}") from None


@dataclass
class FeatureVector:
    node_id: int
    feature_set: str
    names: tuple[str, ...]
    values: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


@dataclass
class FeatureMatrix:
    feature_set: str
    names: tuple[str, ...]
    node_ids: list[int]
    values: np.ndarray
    diagnostics: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.node_ids)

    def vector(self, i: int) -> FeatureVector:
        return FeatureVector(self.node_ids[i], self.feature_set, self.names, self.values[i])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, labels: dict[int, str] | None = None) -> str:
        header = ["node_id", "label", *self.names]
        rows = []
        for i, nid in enumerate(self.node_ids):
            label = labels.get(nid) if labels else None
            rows.append([nid, label, *self.values[i].tolist()])
        return csv_text(header, rows)


# --- graph views ---------------------------------------------------------

class _View:
    """Directed multigraph over a node subset plus cached undirected stats."""

    def __init__(self, n: int, active: np.ndarray, edges: list[tuple[int, int, str]]):
        self.n = n
        self.active = active
        self.edges = edges
        self.in_deg = np.zeros(n)
        self.out_deg = np.zeros(n)
        self.preds: list[list[int]] = [[] for _ in range(n)]
        self.succs: list[list[int]] = [[] for _ in range(n)]
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for s, d, _k in edges:
            self.out_deg[s] += 1
            self.in_deg[d] += 1
            self.preds[d].append(s)
            self.succs[s].append(d)
            if s != d:
                nbrs[s].add(d)
                nbrs[d].add(s)
        self.neighbors = [sorted(x) for x in nbrs]
        self.simple_deg = np.array([len(x) for x in self.neighbors], dtype=float)
        self.avg_nbr_deg = np.array(
            [self.simple_deg[x].mean() if x else 0.0 for x in self.neighbors], dtype=float
        )
        self.storage_writers = {s for s, _d, k in edges if k == STORAGE_SET}
        self.modifications = np.zeros(n)
        for _s, d, k in edges:
            if k == MODIFIES:
                self.modifications[d] += 1
        self._centrality: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def centrality(self) -> tuple[np.ndarray, np.ndarray]:
        if self._centrality is None:
            indptr = np.zeros(self.n + 1, dtype=np.int32)
            indptr[1:] = np.cumsum([len(x) for x in self.neighbors])
            flat = [v for x in self.neighbors for v in x]
            indices = np.asarray(flat, dtype=np.int32)
            self._centrality = kernels.bfs_centrality(self.n, indptr, indices)
        return self._centrality

    def ancestors(self, v: int) -> set[int]:
        seen: set[int] = set()
        queue = deque(self.preds[v])
        while queue:
            u = queue.popleft()
            if u in seen or u == v:
                continue
            seen.add(u)
            queue.extend(self.preds[u])
        return seen


def structural_view(graph: PageGraph, variant: str) -> _View:
    """``webgraph``: all nodes, all non-flow edges.  ``adgraph``: also drops
    storage nodes and redirect edges."""
    n = graph.n_nodes
    if variant == "adgraph":
        active = np.array([nd.kind != STORAGE for nd in graph.nodes], dtype=bool)
        edges = [
            (e.src, e.dst, e.kind)
            for e in graph.edges
            if not e.flow and e.kind != REDIRECT and active[e.src] and active[e.dst]
        ]
    elif variant == "webgraph":
        active = np.ones(n, dtype=bool)
        edges = [(e.src, e.dst, e.kind) for e in graph.edges if not e.flow]
    else:
        raise ValueError(variant)
    return _View(n, active, edges)


def flow_view(graph: PageGraph) -> _View:
    edges = [(e.src, e.dst, e.kind) for e in graph.edges if e.kind in FLOW_EDGE_KINDS]
    active = np.zeros(graph.n_nodes, dtype=bool)
    for s, d, _ in edges:
        active[s] = active[d] = True
    return _View(graph.n_nodes, active, edges)


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


# --- feature groups ------------------------------------------------------

def content_features(node, graph: PageGraph, config: FeatureConfig, diagnostics: list[str] | None = None) -> dict:
    out = {name: 0.0 for name in CONTENT}
    url = node.attrs["url"]
    try:
        parts = parse_url(url)
        reg = registrable_domain(url, config.suffixes)
    except UnparseableUrl:
        if diagnostics is not None:
            diagnostics.append(f"node {node.id}: unparseable URL {url!r}")
        return out
    rtype = node.attrs.get("resource_type", "other")
    out[f"req_type_{rtype if rtype in RESOURCE_TYPES else 'other'}"] = 1.0
    words = set(_WORD_SPLIT.split(url.lower()))
    out["ad_keyword"] = float(any(k in words for k in config.keywords))
    query = parts.query
    values = [unquote(v) for _, _, v in (p.partition("=") for p in query.split("&") if p)]
    out["screen_dimensions"] = float(any(_DIMENSIONS.search(v) for v in values))
    if query:
        try:
            parse_qsl(query, keep_blank_values=True, strict_parsing=True)
            out["valid_query_string"] = 1.0
        except ValueError:
            pass
    out["url_length"] = float(len(url))
    fp = graph.first_party.lower()
    out["third_party"] = float(reg != fp)
    out["first_party_subdomain"] = float(is_subdomain_of(url, fp, config.suffixes))
    out["base_domain_in_query"] = float(bool(fp) and fp in unquote(query).lower())
    out["semicolon_in_query"] = float(";" in query)
    return out


def _structural_for(v: int, graph: PageGraph, view: _View, variant: str) -> dict:
    nodes = graph.nodes
    n_act = view.n_active
    out = {
        "graph_nodes": float(n_act),
        "graph_edges": float(len(view.edges)),
        "graph_nodes_per_edge": _ratio(n_act, len(view.edges)),
        "in_degree": view.in_deg[v],
        "out_degree": view.out_deg[v],
        "in_out_degree": view.in_deg[v] + view.out_deg[v],
        "avg_degree_connectivity": view.avg_nbr_deg[v],
    }
    if variant == "webgraph":
        clo, ecc = view.centrality()
        out["closeness_centrality"] = clo[v]
        out["eccentricity"] = ecc[v]

    anc = view.ancestors(v)
    kinds = [nodes[a].kind for a in anc]
    out["asc_html"] = float(kinds.count(HTML))
    out["asc_network"] = float(kinds.count(NETWORK))
    out["asc_script"] = float(kinds.count(SCRIPT))
    out["asc_storage"] = float(kinds.count(STORAGE))
    out["asc_sets_storage"] = float(bool(anc & view.storage_writers))
    out["asc_is_eval"] = float(any(nodes[a].kind == SCRIPT and nodes[a].attrs.get("is_eval") for a in anc))
    out["descendant_of_script"] = float(out["asc_script"] > 0)
    parents = sorted(set(view.preds[v]))
    out["parent_is_eval"] = float(any(nodes[p].kind == SCRIPT and nodes[p].attrs.get("is_eval") for p in parents))

    if variant == "adgraph":
        out["node_modifications"] = view.modifications[v]
        siblings = {c for p in parents for c in view.succs[p]} - {v}
        out["node_siblings"] = float(len(siblings))
        sib_kinds = [nodes[s].kind for s in siblings]
        out["sibling_html"] = float(sib_kinds.count(HTML))
        out["sibling_network"] = float(sib_kinds.count(NETWORK))
        out["sibling_script"] = float(sib_kinds.count(SCRIPT))
        if parents:
            p = parents[0]
            pk = nodes[p].kind
            grand = sorted(set(view.preds[p]))
            out["parent_siblings"] = float(len({c for g in grand for c in view.succs[g]} - {p}))
            out["parent_modifications"] = view.modifications[p]
            out["parent_is_html"] = float(pk == HTML)
            out["parent_is_script"] = float(pk == SCRIPT)
            out["parent_is_network"] = float(pk == NETWORK)
            out["parent_is_iframe"] = float(pk == HTML and nodes[p].attrs.get("tag") == "iframe")
            out["parent_in_degree"] = view.in_deg[p]
            out["parent_out_degree"] = view.out_deg[p]
            out["parent_in_out_degree"] = view.in_deg[p] + view.out_deg[p]
            out["parent_avg_degree_connectivity"] = view.avg_nbr_deg[p]
        else:
            for name in (
                "parent_siblings", "parent_modifications", "parent_is_html", "parent_is_script",
                "parent_is_network", "parent_is_iframe", "parent_in_degree", "parent_out_degree",
                "parent_in_out_degree", "parent_avg_degree_connectivity",
            ):
                out[name] = 0.0
    return out


def structural_features(node, graph: PageGraph, variant: str = "webgraph", view: _View | None = None) -> dict:
    view = view or structural_view(graph, variant)
    return _structural_for(node.id, graph, view, variant)


class _FlowContext:
    """Per-graph flow counters, computed once for every node."""

    def __init__(self, graph: PageGraph):
        n = graph.n_nodes
        nodes = graph.nodes
        self.view = flow_view(graph)
        self.counts = {name: np.zeros(n) for name in FLOW[:12]}
        c = self.counts
        redirect_back: dict[int, int] = {}
        # flow ancestry: SharedValue is directed, CommonStorageAccess symmetric
        self.flow_preds: list[list[int]] = [[] for _ in range(n)]
        for e in graph.edges:
            k = e.kind
            if k == STORAGE_SET:
                c["cookie_sets" if nodes[e.dst].attrs["storage"] == "cookie" else "local_sets"][e.src] += 1
            elif k == STORAGE_GET:
                c["cookie_gets" if nodes[e.src].attrs["storage"] == "cookie" else "local_gets"][e.dst] += 1
            elif k == INITIATES or k == REDIRECT:
                if nodes[e.dst].kind == NETWORK:
                    c["requests_sent"][e.src] += 1
                c["requests_received"][e.dst] += 1
                if k == REDIRECT:
                    c["redirects_sent"][e.src] += 1
                    c["redirects_received"][e.dst] += 1
                    redirect_back[e.dst] = e.src
            elif k == COMMON_ACCESS:
                c["common_storage_access"][e.src] += 1
                c["common_storage_access"][e.dst] += 1
                self.flow_preds[e.dst].append(e.src)
                self.flow_preds[e.src].append(e.dst)
            elif k == SHARED_VALUE:
                c["shared_value_out"][e.src] += 1
                c["shared_value_in"][e.dst] += 1
                self.flow_preds[e.dst].append(e.src)
        self.redirect_back = redirect_back

    def redirect_depth(self, v: int) -> int:
        depth, seen = 0, {v}
        while v in self.redirect_back and self.redirect_back[v] not in seen:
            v = self.redirect_back[v]
            seen.add(v)
            depth += 1
        return depth

    def ancestors(self, v: int) -> set[int]:
        seen: set[int] = set()
        queue = deque(self.flow_preds[v])
        while queue:
            u = queue.popleft()
            if u in seen or u == v:
                continue
            seen.add(u)
            queue.extend(self.flow_preds[u])
        return seen


def flow_features(node, graph: PageGraph, ctx: _FlowContext | None = None) -> dict:
    ctx = ctx or _FlowContext(graph)
    v = node.id
    out = {name: float(arr[v]) for name, arr in ctx.counts.items()}
    out["redirect_depth"] = float(ctx.redirect_depth(v))
    out["shared_info_ancestors"] = float(len(ctx.ancestors(v)))
    fv = ctx.view
    out["flow_graph_nodes"] = float(fv.n_active)
    out["flow_graph_edges"] = float(len(fv.edges))
    out["flow_graph_nodes_per_edge"] = _ratio(fv.n_active, len(fv.edges))
    out["flow_in_degree"] = fv.in_deg[v]
    out["flow_out_degree"] = fv.out_deg[v]
    out["flow_in_out_degree"] = fv.in_deg[v] + fv.out_deg[v]
    out["flow_avg_degree_connectivity"] = fv.avg_nbr_deg[v]
    clo, ecc = fv.centrality()
    out["flow_closeness_centrality"] = clo[v]
    out["flow_eccentricity"] = ecc[v]
    return out


def extract_matrix(graph: PageGraph, feature_set: str, config: FeatureConfig | None = None) -> FeatureMatrix:
    """One row per Network node, ordered by node id."""
    names = feature_names(feature_set)
    config = config or FeatureConfig()
    targets = [n for n in graph.nodes if n.kind == NETWORK]
    values = np.zeros((len(targets), len(names)), dtype=np.float64)
    diagnostics: list[str] = []
    if not targets:
        return FeatureMatrix(feature_set, names, [], values, diagnostics)

    variant = "adgraph" if feature_set.startswith("adgraph") else "webgraph"
    sview = structural_view(graph, variant)
    want_flow = FLOW[0] in names
    want_content = CONTENT[0] in names
    fctx = _FlowContext(graph) if want_flow else None
    col = {name: i for i, name in enumerate(names)}
    for row, node in enumerate(targets):
        feats = _structural_for(node.id, graph, sview, variant)
        if want_flow:
            feats.update(flow_features(node, graph, fctx))
        if want_content:
            feats.update(content_features(node, graph, config, diagnostics))
        for name, val in feats.items():
            values[row, col[name]] = val
    return FeatureMatrix(feature_set, names, [n.id for n in targets], values, diagnostics)


def matrix_from_csv(text: str, feature_set: str) -> tuple[FeatureMatrix, dict[int, str]]:
    import csv
    import io

    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    names = tuple(header[2:])
    if names != feature_names(feature_set):
        raise FeatureSetMismatch(f"CSV columns do not match feature set {feature_set}")
    ids, labels, rows = [], {}, []
    for rec in reader:
        nid = int(rec[0])
        ids.append(nid)
        if rec[1]:
            labels[nid] = rec[1]
        rows.append([float(x) for x in rec[2:]])
    values = np.asarray(rows, dtype=np.float64).reshape(len(ids), len(names))
    return FeatureMatrix(feature_set, names, ids, values), labels


def check_vector(names: Sequence[str], expected: Sequence[str]) -> None:
    if tuple(names) != tuple(expected):
        raise FeatureSetMismatch("vector feature names do not match the model's feature set")
