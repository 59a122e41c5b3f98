"""Compare the compiled kernels with the numpy/pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are fed identical inputs and their outputs are checked for
agreement before timing.
"""

import argparse
import timeit

import numpy as np

from webgraph_lab import kernels
from webgraph_lab.corpus import CorpusSpec, generate_pages
from webgraph_lab.features import extract_matrix
from webgraph_lab.graph import build_graph
from webgraph_lab.model import Hyperparams, train


def _inputs(seed: int = 0):
    spec = CorpusSpec(n_pages=40, seed=seed)
    graphs, X, y = [], [], []
    for _, trace, truth in generate_pages(spec):
        g = build_graph(trace)
        graphs.append(g)
        m = extract_matrix(g, "webgraph_full")
        X.append(m.values)
        y.extend(truth.labels[g.nodes[i].attrs["request_id"]] for i in m.node_ids)
    X = np.vstack(X)
    model = train(X, y, Hyperparams(n_trees=50), seed, "webgraph_full")

    rng = np.random.default_rng(seed)
    k, m = 8, 4000
    xs = np.sort(rng.integers(0, 40, size=(k, m)).astype(np.float64), axis=1)
    ys = (rng.random((k, m)) < 0.4).astype(np.float64)
    ws = rng.integers(0, 3, size=(k, m)).astype(np.float64)

    return model, X, (xs, ys, ws), max(graphs, key=lambda g: g.n_nodes)


def _csr(graph):
    n = graph.n_nodes
    adj = [set() for _ in range(n)]
    for e in graph.edges:
        if e.src != e.dst:
            adj[e.src].add(e.dst)
            adj[e.dst].add(e.src)
    indptr = np.zeros(n + 1, dtype=np.int32)
    indices = []
    for v in range(n):
        nb = sorted(adj[v])
        indices.extend(nb)
        indptr[v + 1] = indptr[v] + len(nb)
    return n, indptr, np.asarray(indices, dtype=np.int32)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if kernels.compiled_backend is None:
        print("compiled backend unavailable; only the fallback can be timed")
    model, X, scan, graph = _inputs()
    flat = model.flat()
    n, indptr, indices = _csr(graph)

    cases = {
        "split_scan": lambda b: b.split_scan(*scan),
        "bfs_centrality": lambda b: b.bfs_centrality(n, indptr, indices),
        "forest_predict": lambda b: b.forest_predict(*flat, X),
        "forest_contributions": lambda b: b.forest_contributions(*flat, X, X.shape[1]),
    }
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("compiled", kernels.compiled_backend))

    print(f"rows={X.shape[0]} trees={len(model.trees)} graph_nodes={n}")
    print(f"{'kernel':<22}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        outs = [fn(b) for _, b in backends]
        if len(outs) == 2:
            a, c = outs
            a = a if isinstance(a, tuple) else (a,)
            c = c if isinstance(c, tuple) else (c,)
            for u, v in zip(a, c):
                np.testing.assert_allclose(u, v, rtol=0, atol=1e-12)
        times = [min(timeit.repeat(lambda b=b: fn(b), number=1, repeat=args.repeat)) for _, b in backends]
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 and times[1] > 0 else ""
        print(f"{name:<22}" + "".join(f"{t * 1e3:>12.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
