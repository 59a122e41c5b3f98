"""Independent reference implementations used by several test modules."""

from __future__ import annotations

import base64
import hashlib
import itertools
import math
import re
from urllib.parse import unquote

import networkx as nx

_URL = re.compile(r"^https?://[^/?#]+(?P<path>[^?#]*)(?:\?(?P<query>[^#]*))?")

REFERENCE_TRANSFORMS = {
    "identity": lambda v: v,
    "base64": lambda v: base64.b64encode(v.encode()).decode(),
    "md5": lambda v: hashlib.md5(v.encode()).hexdigest(),
    "sha1": lambda v: hashlib.sha1(v.encode()).hexdigest(),
}


def oracle_tokens(url: str) -> set[str]:
    m = _URL.match(url)
    if not m:
        return set()
    toks = {unquote(seg) for seg in m.group("path").split("/") if seg}
    for piece in (m.group("query") or "").split("&"):
        if not piece:
            continue
        toks.add(unquote(piece.split("=", 1)[1]) if "=" in piece else unquote(piece))
    return {t for t in toks if t}


def oracle_match(storage_values, urls, min_len=8, transforms=tuple(REFERENCE_TRANSFORMS)):
    """Double loop over (value, transform, url): the reference for match_values."""
    edges = set()
    carriers: dict[tuple[str, str], set[int]] = {}
    for sid, value in storage_values:
        if len(value) < min_len:
            continue
        for t in transforms:
            tv = REFERENCE_TRANSFORMS[t](value)
            for nid, url in urls:
                if tv in oracle_tokens(url):
                    edges.add((sid, nid, t))
                    carriers.setdefault((tv, t), set()).add(nid)
    for (_tv, t), nids in carriers.items():
        for a, b in itertools.combinations(sorted(nids), 2):
            edges.add((a, b, t))
    return edges


def entropy_bits(labels) -> float:
    n = len(labels)
    if n == 0:
        return 0.0
    p = sum(1 for l in labels if l) / n
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def oracle_info_gain(values, labels, threshold) -> float:
    left = [l for v, l in zip(values, labels) if v <= threshold]
    right = [l for v, l in zip(values, labels) if v > threshold]
    n = len(labels)
    return entropy_bits(labels) - len(left) / n * entropy_bits(left) - len(right) / n * entropy_bits(right)


def undirected_simple(graph, edge_filter) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(graph.n_nodes))
    for e in graph.edges:
        if edge_filter(e) and e.src != e.dst:
            g.add_edge(e.src, e.dst)
    return g


def component_centrality(g: nx.Graph) -> tuple[dict, dict]:
    """Closeness (component-normalised, isolated = 0) and eccentricity per component."""
    closeness, ecc = {}, {}
    for comp in nx.connected_components(g):
        sub = g.subgraph(comp)
        if len(comp) == 1:
            (v,) = comp
            closeness[v], ecc[v] = 0.0, 0
            continue
        closeness.update(nx.closeness_centrality(sub, wf_improved=False))
        ecc.update(nx.eccentricity(sub))
    return closeness, ecc


def reverse_reachable(n, preds_of, v) -> set[int]:
    """DFS over predecessor lists, excluding the start node."""
    seen, stack = set(), list(preds_of(v))
    while stack:
        u = stack.pop()
        if u == v or u in seen:
            continue
        seen.add(u)
        stack.extend(preds_of(u))
    return seen


def exhaustive_greedy_check(graph, model, seed, max_iter=4):
    """Run the greedy attack with l_T = |T| and recount every candidate's
    desired-minus-undesired score independently at each iteration.

    Returns (report, iterations checked, number of candidates seen).
    """
    from webgraph_lab.attack import adversary_scope, apply_mutation, choose_adversary, greedy_attack
    from webgraph_lab.features import extract_matrix
    from webgraph_lab.model import predict_labels

    def labels_of(g):
        m = extract_matrix(g, model.feature_set)
        return dict(zip(m.node_ids, predict_labels(model, m))) if len(m) else {}

    pre = labels_of(graph)
    adversary = choose_adversary(graph, pre)
    if adversary is None:
        return None, 0, 0
    adv = adversary_scope(graph, adversary).requests(graph)
    n0 = graph.n_nodes
    seen = {"iterations": 0, "candidates": 0}

    def hook(it, before, candidates, deltas, best_i):
        recount = []
        for m in candidates:
            post = labels_of(apply_mutation(before, m))
            desired = sum(1 for i in adv if pre.get(i) == "ATS" and post[i] == "NonATS")
            undesired = sum(1 for i, l in pre.items() if l == "NonATS" and post[i] == "ATS")
            undesired += sum(1 for i, l in post.items() if i >= n0 and l == "ATS")
            recount.append(desired - undesired)
        assert recount == deltas, (it, recount, deltas)
        assert best_i == recount.index(max(recount)), (it, best_i, recount)
        seen["iterations"] += 1
        seen["candidates"] += len(candidates)

    report = greedy_attack(graph, model, adversary, max_iter=max_iter, l_t=10**6, seed=seed, on_iteration=hook)
    return report, seen["iterations"], seen["candidates"]
