"""Evasion attacks against a trained classifier.

Two attacks are provided:

* a content attack that rewrites the URLs of an adversary's ATS-classified
  requests (random domain/subdomain/query changes, optionally moving them
  onto a first-party subdomain), and
* a greedy structure attack that repeatedly tries resource additions,
  redirect re-routing and identifier obfuscation, and commits whichever
  candidate maximises desired minus undesired label switches.

Switches are always measured against predictions on the unmodified graph.
"""

from __future__ import annotations

import csv
import io
import math
import string
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence
from urllib.parse import urlunsplit

import numpy as np

from .features import FeatureConfig, extract_matrix
from .graph import (
    CREATES,
    HTML,
    INITIATES,
    MODIFIES,
    NETWORK,
    REDIRECT,
    SCRIPT,
    SHARED_VALUE,
    STORAGE,
    STORAGE_SET,
    Edge,
    PageGraph,
    transform_value,
)
from .labels import ATS, NON_ATS
from .model import TreeEnsembleModel, predict_labels
from .urls import SuffixList, UnparseableUrl, parse_url, registrable_domain, rewrite_url_tokens

CONTENT_POLICIES = frozenset({"domain", "subdomain", "both", "query_count", "query_names", "query_values"})
NO_ADVERSARY_ATS = "NoAdversaryAts"
NO_CANDIDATES = "NoCandidates"

_ALNUM = string.ascii_lowercase + string.digits
_CONTROL_EDGES = frozenset({CREATES, MODIFIES, INITIATES, REDIRECT})


def _token(rng: np.random.Generator, n: int = 8) -> str:
    return "".join(_ALNUM[i] for i in rng.integers(0, len(_ALNUM), size=n))


def _netloc(host: str, port: int | None) -> str:
    return f"{host}:{port}" if port else host


# --- content mutations ---------------------------------------------------

def mutate_url_content(
    url: str, policy: Iterable[str], rng: np.random.Generator, suffixes: SuffixList | None = None
) -> str:
    """Replace the URL parts named in ``policy`` with random tokens.

    Host policies: ``domain`` swaps the registrable domain, ``subdomain``
    swaps (or adds) the labels in front of it, ``both`` replaces the whole
    host.  Query policies: ``query_count`` appends one to three random
    parameters, ``query_names`` renames every parameter, ``query_values``
    replaces every value.  The path is never touched.
    """
    policy = set(policy)
    unknown = policy - CONTENT_POLICIES
    if unknown:
        raise ValueError(f"unknown content policy {sorted(unknown)}")
    parts = parse_url(url)
    host = parts.hostname
    base = registrable_domain(host, suffixes)
    sub = host[: -len(base)].rstrip(".") if host != base else ""
    suffix = base.split(".", 1)[1] if "." in base else "com"

    if "both" in policy or ("domain" in policy and "subdomain" in policy):
        host = f"{_token(rng)}.{_token(rng)}.{suffix}"
    elif "domain" in policy:
        new_base = f"{_token(rng)}.{suffix}"
        host = f"{sub}.{new_base}" if sub else new_base
    elif "subdomain" in policy:
        host = f"{_token(rng)}.{base}"

    pieces = [p for p in parts.query.split("&") if p] if parts.query else []
    if "query_names" in policy or "query_values" in policy:
        rewritten = []
        for piece in pieces:
            name, eq, value = piece.partition("=")
            if "query_names" in policy:
                name = _token(rng, 6)
            if "query_values" in policy:
                value, eq = _token(rng, 10), "="
            rewritten.append(f"{name}{eq}{value}")
        pieces = rewritten
    if "query_count" in policy:
        for _ in range(int(rng.integers(1, 4))):
            pieces.append(f"{_token(rng, 6)}={_token(rng, 6)}")
    return urlunsplit((parts.scheme, _netloc(host, parts.port), parts.path, "&".join(pieces), parts.fragment))


def collude_first_party(url: str, first_party: str, rng: np.random.Generator) -> str:
    """Serve the URL from a random subdomain of the first party."""
    parts = parse_url(url)
    host = f"{_token(rng)}.{first_party.lower()}"
    return urlunsplit((parts.scheme, _netloc(host, parts.port), parts.path, parts.query, parts.fragment))


# --- metrics -------------------------------------------------------------

@dataclass
class SwitchMetrics:
    ats_adv: int
    non_ats_adv: int
    ats_web: int
    non_ats_web: int
    desired: int
    undesired: int
    neutral: int
    careless: bool = False
    flags: list[str] = field(default_factory=list)

    def _rate(self, num: int, den: int, name: str) -> float | None:
        if den == 0:
            flag = f"ZeroDenominator:{name}"
            if flag not in self.flags:
                self.flags.append(flag)
            return None
        return 100.0 * num / den

    @property
    def success_rate(self) -> float | None:
        return self._rate(self.desired, self.ats_adv, "success_rate")

    @property
    def collateral_damage(self) -> float | None:
        den = self.non_ats_adv if self.careless else self.non_ats_adv + self.non_ats_web
        return self._rate(self.undesired, den, "collateral_damage")

    @property
    def other_changes(self) -> float | None:
        return self._rate(self.neutral, self.ats_web, "other_changes")

    @property
    def delta(self) -> int:
        return self.desired - self.undesired

    def to_dict(self) -> dict:
        rates = {
            "success_rate": self.success_rate,
            "collateral_damage": self.collateral_damage,
            "other_changes": self.other_changes,
        }
        return {
            "ATS_Adv": self.ats_adv,
            "NonATS_Adv": self.non_ats_adv,
            "ATS_Web": self.ats_web,
            "NonATS_Web": self.non_ats_web,
            "desired": self.desired,
            "undesired": self.undesired,
            "neutral": self.neutral,
            "careless": self.careless,
            **rates,
            "flags": sorted(self.flags),
        }


def metrics_from_counts(
    ats_adv: int,
    non_ats_adv: int,
    ats_web: int,
    non_ats_web: int,
    desired: int,
    undesired: int,
    neutral: int,
    careless: bool = False,
) -> SwitchMetrics:
    return SwitchMetrics(ats_adv, non_ats_adv, ats_web, non_ats_web, desired, undesired, neutral, careless)


def compute_metrics(
    pre: dict[int, str],
    post: dict[int, str],
    adversary: Iterable[int],
    careless: bool = False,
) -> SwitchMetrics:
    """Switch counts between two prediction maps.

    ``pre`` covers the original request nodes; ``post`` may also contain
    nodes added by the attack.  Added nodes are adversary-owned: they join
    the NonATS_Adv denominator and count as undesired if predicted ATS.
    In careless mode only adversary switches count as undesired.
    """
    adv = set(adversary)
    ats_adv = non_ats_adv = ats_web = non_ats_web = 0
    desired = undesired = neutral = 0
    for nid, before in pre.items():
        after = post.get(nid, before)
        mine = nid in adv
        if before == ATS:
            if mine:
                ats_adv += 1
                desired += after == NON_ATS
            else:
                ats_web += 1
                neutral += after == NON_ATS
        else:
            if mine:
                non_ats_adv += 1
            else:
                non_ats_web += 1
            if after == ATS and (mine or not careless):
                undesired += 1
    for nid, after in post.items():
        if nid in pre:
            continue
        non_ats_adv += 1
        undesired += after == ATS
    return SwitchMetrics(ats_adv, non_ats_adv, ats_web, non_ats_web, desired, undesired, neutral, careless)


# --- adversary -----------------------------------------------------------

def _node_domain(node, suffixes) -> str | None:
    url = node.attrs.get("url")
    if not url:
        return None
    try:
        return registrable_domain(url, suffixes)
    except UnparseableUrl:
        return None


def choose_adversary(
    graph: PageGraph, predictions: dict[int, str], suffixes: SuffixList | None = None
) -> str | None:
    """Third party with the most ATS-predicted requests (ties: alphabetical)."""
    counts: dict[str, int] = {}
    for node in graph.network_nodes():
        if predictions.get(node.id) != ATS:
            continue
        dom = _node_domain(node, suffixes)
        if dom and dom != graph.first_party:
            counts[dom] = counts.get(dom, 0) + 1
    if not counts:
        return None
    return min(counts, key=lambda d: (-counts[d], d))


@dataclass
class AdversaryScope:
    """Nodes an adversary controls.

    ``owned`` are requests and scripts served from the adversary domain;
    ``nodes`` adds everything they create, modify, initiate or redirect to,
    plus storage they write.
    """

    domain: str
    owned: set[int]
    nodes: set[int]

    def requests(self, graph: PageGraph) -> set[int]:
        return {i for i in self.nodes if graph.nodes[i].kind == NETWORK}

    def owned_requests(self, graph: PageGraph) -> set[int]:
        return {i for i in self.owned if graph.nodes[i].kind == NETWORK}


def adversary_scope(graph: PageGraph, domain: str, suffixes: SuffixList | None = None) -> AdversaryScope:
    owned = {
        n.id for n in graph.nodes if n.kind in (NETWORK, SCRIPT) and _node_domain(n, suffixes) == domain
    }
    children: dict[int, list[int]] = {}
    writes: dict[int, list[int]] = {}
    for e in graph.edges:
        if e.kind in _CONTROL_EDGES:
            children.setdefault(e.src, []).append(e.dst)
        elif e.kind == STORAGE_SET:
            writes.setdefault(e.src, []).append(e.dst)
    seen = set(owned)
    stack = sorted(owned)
    while stack:
        v = stack.pop()
        for w in children.get(v, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    for v in list(seen):
        seen.update(writes.get(v, ()))
    return AdversaryScope(domain, owned, seen)


# --- content attack ------------------------------------------------------

@dataclass
class AttackReport:
    kind: str
    adversary: str | None
    metrics: SwitchMetrics
    n_nodes_before: int
    n_nodes_after: int
    mutated: list[int] = field(default_factory=list)
    trajectory: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    page: str = ""

    @property
    def growth_pct(self) -> float:
        if self.n_nodes_before == 0:
            return 0.0
        return 100.0 * (self.n_nodes_after - self.n_nodes_before) / self.n_nodes_before

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "page": self.page,
            "adversary": self.adversary,
            "metrics": self.metrics.to_dict(),
            "n_nodes_before": self.n_nodes_before,
            "n_nodes_after": self.n_nodes_after,
            "growth_pct": self.growth_pct,
            "mutated": list(self.mutated),
            "flags": sorted(set(self.flags) | set(self.metrics.flags)),
            "trajectory": self.trajectory,
        }

    def trajectory_csv(self) -> str:
        cols = ["iteration", "mutation", "delta", "desired", "undesired", "neutral",
                "success_rate", "collateral_damage", "other_changes", "n_nodes"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.trajectory:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in cols])
        return buf.getvalue()


def predict_graph(
    graph: PageGraph, model: TreeEnsembleModel, config: FeatureConfig | None = None
) -> dict[int, str]:
    matrix = extract_matrix(graph, model.feature_set, config)
    if not len(matrix):
        return {}
    return dict(zip(matrix.node_ids, predict_labels(model, matrix)))


def _empty_report(kind, graph, adversary, careless, pre, scope_requests, flag) -> AttackReport:
    metrics = compute_metrics(pre, pre, scope_requests, careless)
    return AttackReport(kind, adversary, metrics, graph.n_nodes, graph.n_nodes, flags=[flag], page=graph.page_url)


def run_content_attack(
    graph: PageGraph,
    model: TreeEnsembleModel,
    adversary: str | None,
    policy: Iterable[str],
    rng: np.random.Generator,
    collusion: bool = False,
    careless: bool = False,
    config: FeatureConfig | None = None,
) -> AttackReport:
    """Rewrite the adversary's ATS-predicted URLs and reclassify the page.

    ``adversary=None`` picks the third party with the most ATS predictions.
    The model is fixed; only the inference-time graph changes.
    """
    config = config or FeatureConfig()
    policy = tuple(sorted(policy))
    pre = predict_graph(graph, model, config)
    if adversary is None:
        adversary = choose_adversary(graph, pre, config.suffixes)
    if adversary is None:
        return _empty_report("content", graph, None, careless, pre, (), NO_ADVERSARY_ATS)
    scope = adversary_scope(graph, adversary, config.suffixes)
    adv_requests = scope.requests(graph)
    targets = sorted(i for i in scope.owned_requests(graph) if pre.get(i) == ATS)
    if not targets:
        return _empty_report("content", graph, adversary, careless, pre, adv_requests, NO_ADVERSARY_ATS)

    mutated = graph.copy()
    for nid in targets:
        attrs = mutated.nodes[nid].attrs
        url = attrs["url"]
        if policy:
            url = mutate_url_content(url, policy, rng, config.suffixes)
        if collusion:
            url = collude_first_party(url, graph.first_party, rng)
        attrs["url"] = url
    mutated.rematch_values()
    post = predict_graph(mutated, model, config)
    metrics = compute_metrics(pre, post, adv_requests, careless)
    return AttackReport(
        "content", adversary, metrics, graph.n_nodes, mutated.n_nodes, mutated=targets, page=graph.page_url
    )


# --- structure mutations -------------------------------------------------

class InvalidMutation(ValueError):
    pass


@dataclass(frozen=True)
class AddResource:
    parent: int
    resource_type: str
    url: str
    kind: str = "AddResource"


@dataclass(frozen=True)
class Reroute:
    chain: tuple[int, ...]
    scripts: tuple[int, ...]
    kind: str = "Reroute"


@dataclass(frozen=True)
class Obfuscate:
    storage: int
    kind: str = "Obfuscate"


Mutation = AddResource | Reroute | Obfuscate


def obfuscate_value(value: str) -> str:
    """Reverse then hex-encode: not any of the detector's transforms."""
    return value[::-1].encode("utf-8").hex()


def redirect_chains(graph: PageGraph) -> list[tuple[int, ...]]:
    """Maximal Redirect paths, each starting at a request that was not redirected to."""
    nxt: dict[int, int] = {}
    has_prev = set()
    for e in graph.edges:
        if e.kind == REDIRECT:
            nxt[e.src] = e.dst
            has_prev.add(e.dst)
    chains = []
    for start in sorted(nxt):
        if start in has_prev:
            continue
        chain = [start]
        while chain[-1] in nxt and nxt[chain[-1]] not in chain:
            chain.append(nxt[chain[-1]])
        chains.append(tuple(chain))
    return chains


def _shared_storage(graph: PageGraph) -> set[int]:
    return {e.src for e in graph.edges if e.kind == SHARED_VALUE and graph.nodes[e.src].kind == STORAGE}


_ADD_PARENT_KINDS = (HTML, SCRIPT, NETWORK)


def candidate_mutations(
    graph: PageGraph,
    scope: AdversaryScope,
    sample: Iterable[int] | None = None,
    collusion: bool = False,
    allow_add: bool = True,
    seed: int = 0,
    iteration: int = 0,
) -> list[Mutation]:
    """Canonically ordered candidates: additions, re-routes, obfuscations.

    ``sample`` restricts the nodes considered (defaults to the whole scope).
    Under collusion, additions may hang off any node in the sample, which
    the caller then draws from the whole graph.  Random details (new URLs,
    which scripts take over a chain) come from a per-candidate stream keyed
    by (seed, iteration, candidate index).
    """
    sample = sorted(scope.nodes if sample is None else sample)
    in_sample = set(sample)
    specs: list[tuple] = []
    if allow_add:
        for v in sample:
            node = graph.nodes[v]
            if node.kind in _ADD_PARENT_KINDS and (collusion or v in scope.nodes):
                rtype = "xhr" if node.kind == SCRIPT else "image"
                specs.append(("add", v, rtype))
    scripts = sorted(i for i in scope.nodes if graph.nodes[i].kind == SCRIPT)
    if scripts:
        for chain in redirect_chains(graph):
            if len(chain) >= 2 and in_sample.intersection(chain):
                specs.append(("reroute", chain))
    shared = _shared_storage(graph)
    for v in sample:
        if graph.nodes[v].kind == STORAGE and v in scope.nodes and v in shared:
            specs.append(("obf", v))

    out: list[Mutation] = []
    for idx, spec in enumerate(specs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, iteration, idx]))
        if spec[0] == "add":
            url = f"http://{scope.domain}/{_token(rng)}"
            out.append(AddResource(spec[1], spec[2], url))
        elif spec[0] == "reroute":
            chain = spec[1]
            picks = tuple(int(scripts[i]) for i in rng.integers(0, len(scripts), size=len(chain) - 1))
            out.append(Reroute(chain, picks))
        else:
            out.append(Obfuscate(spec[1]))
    return out


def apply_mutation(graph: PageGraph, m: Mutation) -> PageGraph:
    """Return a mutated copy.  Nodes are never removed."""
    g = graph.copy()
    n = g.n_nodes
    if isinstance(m, AddResource):
        if not 0 <= m.parent < n or g.nodes[m.parent].kind not in _ADD_PARENT_KINDS:
            raise InvalidMutation(f"bad parent {m.parent}")
        try:
            parse_url(m.url)
        except UnparseableUrl as exc:
            raise InvalidMutation(str(exc)) from None
        ts = max((nd.ts for nd in g.nodes), default=0) + 1
        node = g.add_node(
            NETWORK,
            {"url": m.url, "resource_type": m.resource_type, "request_id": f"added-{n}", "status": 200},
            ts,
        )
        g.edges.append(Edge(m.parent, node.id, INITIATES, False))
        g.rematch_values()
    elif isinstance(m, Reroute):
        chain = m.chain
        if len(chain) < 2 or len(m.scripts) != len(chain) - 1:
            raise InvalidMutation("re-route needs a chain of two or more requests and one script per hop")
        links = {(a, b) for a, b in zip(chain, chain[1:])}
        present = {(e.src, e.dst) for e in g.edges if e.kind == REDIRECT}
        if not links <= present:
            raise InvalidMutation(f"chain {chain} is not a redirect chain")
        for s in m.scripts:
            if not 0 <= s < n or g.nodes[s].kind != SCRIPT:
                raise InvalidMutation(f"node {s} is not a script")
        g.edges = [e for e in g.edges if not (e.kind == REDIRECT and (e.src, e.dst) in links)]
        for s, target in zip(m.scripts, chain[1:]):
            g.edges.append(Edge(s, target, INITIATES, False))
    elif isinstance(m, Obfuscate):
        if not 0 <= m.storage < n or g.nodes[m.storage].kind != STORAGE:
            raise InvalidMutation(f"node {m.storage} is not a storage node")
        mapping = {}
        for value in g.nodes[m.storage].attrs["values"]:
            if len(value) < g.config.min_value_len:
                continue
            for t in g.config.transforms:
                mapping[transform_value(value, t)] = obfuscate_value(value)
        for node in g.nodes:
            if node.kind == NETWORK:
                try:
                    node.attrs["url"] = rewrite_url_tokens(node.attrs["url"], mapping)
                except UnparseableUrl:
                    continue
        g.rematch_values()
    else:
        raise InvalidMutation(f"unknown mutation {m!r}")
    return g


# --- greedy structure attack ---------------------------------------------

IterationHook = Callable[[int, PageGraph, list, list, int], None]


def default_l_t(scope_size: int) -> int:
    return min(scope_size, 10)


def greedy_attack(
    graph: PageGraph,
    model: TreeEnsembleModel,
    adversary: str | None = None,
    max_iter: int = 20,
    growth_cap: float = 0.2,
    l_t: int | None = None,
    seed: int = 0,
    collusion: bool = False,
    careless: bool = False,
    config: FeatureConfig | None = None,
    on_iteration: IterationHook | None = None,
) -> AttackReport:
    """Greedy random graph mutation.

    Each iteration samples ``l_t`` controlled nodes, evaluates every
    candidate on a private copy and commits the one with the largest
    desired-minus-undesired count, even when that count is not positive.
    Equal counts go to the earliest candidate.  Additions are skipped once
    one more node would exceed ``floor((1 + growth_cap) * n0)``.  Nodes
    added by committed mutations join the controlled set.
    """
    config = config or FeatureConfig()
    pre = predict_graph(graph, model, config)
    if adversary is None:
        adversary = choose_adversary(graph, pre, config.suffixes)
    if adversary is None:
        return _empty_report("structure", graph, None, careless, pre, (), NO_ADVERSARY_ATS)
    scope = adversary_scope(graph, adversary, config.suffixes)
    adv_requests = scope.requests(graph)
    if not any(pre.get(i) == ATS for i in adv_requests):
        return _empty_report("structure", graph, adversary, careless, pre, adv_requests, NO_ADVERSARY_ATS)

    n0 = graph.n_nodes
    node_cap = math.floor((1.0 + growth_cap) * n0 + 1e-9)
    current = graph
    metrics = compute_metrics(pre, pre, adv_requests, careless)
    trajectory: list[dict] = []
    flags: list[str] = []
    for it in range(max_iter):
        if metrics.desired == metrics.ats_adv and metrics.undesired == 0:
            break
        rng = np.random.default_rng(np.random.SeedSequence([seed, it]))
        pool = sorted(range(current.n_nodes)) if collusion else sorted(scope.nodes)
        size = min(l_t if l_t is not None else default_l_t(len(pool)), len(pool))
        sample = sorted(int(x) for x in rng.choice(pool, size=size, replace=False)) if size else []
        candidates = candidate_mutations(
            current, scope, sample, collusion, current.n_nodes + 1 <= node_cap, seed, it
        )
        if not candidates:
            flags.append(NO_CANDIDATES)
            break
        best_i, best_delta, best = -1, None, None
        deltas = []
        for i, m in enumerate(candidates):
            g2 = apply_mutation(current, m)
            post = predict_graph(g2, model, config)
            cand = compute_metrics(pre, post, adv_requests | set(range(n0, g2.n_nodes)), careless)
            deltas.append(cand.delta)
            if best_delta is None or cand.delta > best_delta:
                best_i, best_delta, best = i, cand.delta, (g2, cand)
        if on_iteration is not None:
            on_iteration(it, current, candidates, deltas, best_i)
        current, metrics = best
        chosen = candidates[best_i]
        if isinstance(chosen, AddResource):
            new_id = current.n_nodes - 1
            scope.nodes.add(new_id)
            adv_requests = adv_requests | {new_id}
        trajectory.append(
            {
                "iteration": it,
                "mutation": chosen.kind,
                "delta": best_delta,
                "desired": metrics.desired,
                "undesired": metrics.undesired,
                "neutral": metrics.neutral,
                "success_rate": metrics.success_rate,
                "collateral_damage": metrics.collateral_damage,
                "other_changes": metrics.other_changes,
                "n_nodes": current.n_nodes,
            }
        )
    return AttackReport(
        "structure",
        adversary,
        metrics,
        n0,
        current.n_nodes,
        mutated=sorted(range(n0, current.n_nodes)),
        trajectory=trajectory,
        flags=flags,
        page=graph.page_url,
    )


# --- page selection ------------------------------------------------------

def select_pages(
    sizes: dict, per_bin: int, bins: int = 5, max_nodes: int = 250, seed: int = 0
) -> list:
    """Sample up to ``per_bin`` pages from each of ``bins`` equal-width size bins.

    Pages above ``max_nodes`` are excluded before binning.
    """
    eligible = sorted((k for k, v in sizes.items() if 0 < v <= max_nodes), key=lambda k: (sizes[k], str(k)))
    if not eligible:
        return []
    lo, hi = sizes[eligible[0]], sizes[eligible[-1]]
    width = (hi - lo) / bins if hi > lo else 1.0
    groups: list[list] = [[] for _ in range(bins)]
    for k in eligible:
        b = min(int((sizes[k] - lo) / width), bins - 1)
        groups[b].append(k)
    rng = np.random.default_rng(seed)
    chosen = []
    for group in groups:
        if len(group) <= per_bin:
            chosen.extend(group)
        else:
            idx = sorted(rng.choice(len(group), size=per_bin, replace=False))
            chosen.extend(group[i] for i in idx)
    return chosen


def summarize_reports(reports: Sequence[dict]) -> tuple[list[str], list[list]]:
    """Rows for a success-vs-collateral table, one per report."""
    header = ["page", "kind", "adversary", "success_rate", "collateral_damage", "other_changes",
              "desired", "undesired", "neutral", "ATS_Adv", "growth_pct", "flags"]
    rows = []
    for rep in reports:
        m = rep["metrics"]
        rows.append([
            rep.get("page", ""), rep["kind"], rep["adversary"], m["success_rate"], m["collateral_damage"],
            m["other_changes"], m["desired"], m["undesired"], m["neutral"], m["ATS_Adv"],
            rep.get("growth_pct", 0.0), ";".join(rep.get("flags", [])),
        ])
    return header, rows
