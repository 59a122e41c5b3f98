from __future__ import annotations

from pathlib import Path

import pytest

from webgraph_lab.corpus import CorpusSpec, generate_pages
from webgraph_lab.eventlog import read_trace
from webgraph_lab.features import extract_matrix
from webgraph_lab.graph import GraphConfig, build_graph
from webgraph_lab.model import Hyperparams, PageData, stack_pages, train

DATA = Path(__file__).parent / "data"
SYNC_TRACE = DATA / "sync_trace.jsonl"

# Node ids in the graph built from the cookie-sync fixture.
ROOT, R1_TRACKJS, S2, R2_IFRAME, COOKIE_T2, R3_SYNC, R4_REDIRECT, COOKIE_T1, S11, R5_XHR = (
    0, 2, 3, 5, 6, 8, 9, 10, 12, 13,
)


@pytest.fixture(scope="session")
def sync_trace():
    return read_trace(SYNC_TRACE)


@pytest.fixture
def sync_graph(sync_trace):
    return build_graph(sync_trace, GraphConfig(min_value_len=5))


def corpus_pages(spec: CorpusSpec):
    graphs, labels = [], []
    for _, trace, truth in generate_pages(spec):
        g = build_graph(trace)
        graphs.append(g)
        labels.append([truth.labels[n.attrs["request_id"]] for n in g.network_nodes()])
    return graphs, labels


def page_data(graphs, labels, feature_set):
    return [PageData(i, extract_matrix(g, feature_set), labels[i]) for i, g in enumerate(graphs)]


@pytest.fixture(scope="session")
def small_corpus():
    return corpus_pages(CorpusSpec(n_pages=24, seed=11))


@pytest.fixture(scope="session")
def small_models(small_corpus):
    """webgraph_full and adgraph_full models trained on the small corpus."""
    graphs, labels = small_corpus
    models = {}
    for fs in ("webgraph_full", "adgraph_full"):
        X, y = stack_pages(page_data(graphs, labels, fs))
        models[fs] = train(X, y, Hyperparams(n_trees=15), seed=5, feature_set=fs)
    return models
