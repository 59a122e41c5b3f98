"""Command-line pipeline: gen, build, features, label, train, eval, attacks, report.

Every subcommand writes into ``--out`` and drops the resolved configuration
there as ``config.json``.  Options come from defaults, then ``--config``
(a JSON object keyed by option name), then explicit flags.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .artifacts import atomic_write_text, csv_text, dumps_json, write_json
from .attack import (
    CONTENT_POLICIES,
    greedy_attack,
    run_content_attack,
    select_pages,
    summarize_reports,
)
from .corpus import CorpusSpec, generate_corpus
from .eventlog import TraceError, read_trace
from .features import FEATURE_SETS, FeatureSetMismatch, extract_matrix, matrix_from_csv
from .graph import GraphConfig, PageGraph, build_graph, check_edge_domains
from .labels import InvalidRule, label_from_truth, label_graph, labels_csv, parse_labels_csv, read_rules
from .model import (
    Hyperparams,
    PageData,
    SingleClassTraining,
    TooFewPages,
    TreeEnsembleModel,
    cross_validate,
    feature_importance,
    fold_seed,
    kfold_split,
    stack_pages,
    train,
)
from .urls import UnparseableUrl

log = logging.getLogger("webgraph_lab")

_PAGE_FILE = re.compile(r"^page_(\d+)\.(json|jsonl|csv)$")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class InvariantViolation(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2
        raise UsageError(f"{self.prog}: {message}")


# --- helpers -------------------------------------------------------------

def _page_files(directory: Path, ext: str) -> list[tuple[int, Path]]:
    out = []
    for entry in os.listdir(directory):
        m = _PAGE_FILE.match(entry)
        if m and m.group(2) == ext:
            out.append((int(m.group(1)), directory / entry))
    return sorted(out)


def _need_dir(value: str | None, flag: str) -> Path:
    if not value:
        raise UsageError(f"missing required option {flag}")
    path = Path(value)
    if not path.is_dir():
        raise UsageError(f"{flag}: no such directory: {value}")
    return path


def _need_file(value: str | None, flag: str) -> Path:
    if not value:
        raise UsageError(f"missing required option {flag}")
    path = Path(value)
    if not path.is_file():
        raise UsageError(f"{flag}: no such file: {value}")
    return path


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _load_graph(path: Path) -> PageGraph:
    with open(path, encoding="utf-8") as fh:
        return PageGraph.from_dict(json.load(fh))


def _load_graphs(directory: Path) -> dict[int, PageGraph]:
    return {i: _load_graph(p) for i, p in _page_files(directory, "json")}


def _load_labels(directory: Path) -> dict[int, dict[int, str]]:
    return {i: parse_labels_csv(p.read_text("utf-8")) for i, p in _page_files(directory, "csv")}


def _load_pages(features_dir: Path, labels_dir: Path, feature_set: str) -> list[PageData]:
    labels = _load_labels(labels_dir)
    pages = []
    for i, path in _page_files(features_dir, "csv"):
        matrix, _ = matrix_from_csv(path.read_text("utf-8"), feature_set)
        page_labels = labels.get(i)
        if page_labels is None:
            raise DataError(f"no labels for page {i}")
        try:
            ys = [page_labels[nid] for nid in matrix.node_ids]
        except KeyError as exc:
            raise DataError(f"page {i}: node {exc.args[0]} has no label") from None
        pages.append(PageData(i, matrix, ys))
    if not pages:
        raise DataError(f"no feature files in {features_dir}")
    return pages


def _hyperparams(cfg: dict) -> Hyperparams:
    fps = cfg["features_per_split"]
    if isinstance(fps, str) and fps.isdigit():
        fps = int(fps)
    return Hyperparams(
        n_trees=cfg["n_trees"],
        max_depth=cfg["max_depth"],
        min_samples_split=cfg["min_samples_split"],
        features_per_split=fps,
    )


# --- per-page workers (top level so they pickle) --------------------------

def _build_one(args: tuple) -> tuple[int, str]:
    idx, path, min_value_len = args
    trace = read_trace(path)
    graph = build_graph(trace, GraphConfig(min_value_len=min_value_len))
    problems = check_edge_domains(graph)
    if problems:
        raise InvariantViolation(f"page {idx}: {problems[0]}")
    return idx, dumps_json(graph.to_dict())


def _features_one(args: tuple) -> tuple[int, str]:
    idx, path, feature_set = args
    return idx, extract_matrix(_load_graph(path), feature_set).to_csv()


def _label_one(args: tuple) -> tuple[int, str]:
    idx, path, rules_path = args
    return idx, labels_csv(label_graph(_load_graph(path), read_rules(rules_path)))


def _content_one(args: tuple) -> tuple[int, dict]:
    idx, path, model_text, policy, collusion, careless, seed = args
    model = TreeEnsembleModel.loads(model_text)
    rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
    report = run_content_attack(_load_graph(path), model, None, policy, rng, collusion, careless)
    return idx, report.to_dict()


def _structure_one(args: tuple) -> tuple[int, dict, str]:
    idx, path, model_text, cfg = args
    model = TreeEnsembleModel.loads(model_text)
    graph = _load_graph(path)
    report = greedy_attack(
        graph,
        model,
        max_iter=cfg["max_iter"],
        growth_cap=cfg["growth_cap"],
        l_t=cfg["l_t"],
        seed=fold_seed(cfg["seed"], idx),
        collusion=cfg["collusion"],
        careless=cfg["careless"],
    )
    if report.n_nodes_after > int((1 + cfg["growth_cap"]) * report.n_nodes_before + 1e-9):
        raise InvariantViolation(f"page {idx}: growth cap exceeded")
    return idx, report.to_dict(), report.trajectory_csv()


# --- subcommands ---------------------------------------------------------

def cmd_gen(cfg: dict, out: Path) -> None:
    spec_fields = dict(cfg.get("spec") or {})
    spec_fields["n_pages"] = cfg["pages"]
    spec_fields["seed"] = cfg["seed"]
    try:
        spec = CorpusSpec.from_dict(spec_fields)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad corpus spec: {exc}") from None
    manifest = generate_corpus(spec, out)
    log.info("generated %d pages in %s", manifest["n_pages"], out)


def cmd_build(cfg: dict, out: Path) -> None:
    corpus = _need_dir(cfg["corpus"], "--corpus")
    files = _page_files(corpus / "pages", "jsonl") if (corpus / "pages").is_dir() else _page_files(corpus, "jsonl")
    if not files:
        raise DataError(f"no page_<i>.jsonl traces under {corpus}")
    for idx, text in _map(_build_one, [(i, p, cfg["min_value_len"]) for i, p in files], cfg["jobs"]):
        atomic_write_text(out / f"page_{idx}.json", text)


def cmd_features(cfg: dict, out: Path) -> None:
    graphs = _need_dir(cfg["graphs"], "--graphs")
    fs = cfg["feature_set"]
    for idx, text in _map(_features_one, [(i, p, fs) for i, p in _page_files(graphs, "json")], cfg["jobs"]):
        atomic_write_text(out / f"page_{idx}.csv", text)


def cmd_label(cfg: dict, out: Path) -> None:
    graphs = _need_dir(cfg["graphs"], "--graphs")
    if cfg.get("truth"):
        truth_path = _need_file(cfg["truth"], "--truth")
        truth: dict[int, dict[str, str]] = {}
        import csv

        with open(truth_path, encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                truth.setdefault(int(rec["page"]), {})[rec["request_id"]] = rec["label"]
        for idx, path in _page_files(graphs, "json"):
            labels = label_from_truth(_load_graph(path), truth.get(idx, {}))
            atomic_write_text(out / f"page_{idx}.csv", labels_csv(labels))
        return
    rules = _need_file(cfg["rules"], "--rules")
    read_rules(rules)  # fail fast on a bad rule file
    items = [(i, p, str(rules)) for i, p in _page_files(graphs, "json")]
    for idx, text in _map(_label_one, items, cfg["jobs"]):
        atomic_write_text(out / f"page_{idx}.csv", text)


def _importance_csv(report) -> str:
    return csv_text(["rank", "feature", "category", "info_gain_pct", "std"], report.csv_rows())


def cmd_train(cfg: dict, out: Path) -> None:
    pages = _load_pages(_need_dir(cfg["features"], "--features"), _need_dir(cfg["labels"], "--labels"),
                        cfg["feature_set"])
    X, y = stack_pages(pages)
    model = train(X, y, _hyperparams(cfg), cfg["seed"], cfg["feature_set"])
    atomic_write_text(out / "model.json", model.dumps())
    imp = feature_importance(model)
    write_json(out / "importance.json", imp.to_dict())
    atomic_write_text(out / "importance.csv", _importance_csv(imp))


def cmd_eval(cfg: dict, out: Path) -> None:
    pages = _load_pages(_need_dir(cfg["features"], "--features"), _need_dir(cfg["labels"], "--labels"),
                        cfg["feature_set"])
    report = cross_validate(pages, cfg["feature_set"], _hyperparams(cfg), cfg["k"], cfg["seed"])
    for key, val in report.importance.to_dict().items():
        if key == "per_model_sums":
            for s in val:
                if abs(s - 100.0) > 1e-6 and s != 0.0:
                    raise InvariantViolation(f"importances sum to {s}")
    write_json(out / "eval_report.json", report.to_dict())
    rows = [
        (f.fold, len(f.test_pages), f.tp, f.fp, f.tn, f.fn, f.accuracy, f.precision, f.recall)
        for f in report.folds
    ]
    atomic_write_text(
        out / "folds.csv",
        csv_text(["fold", "n_pages", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall"], rows),
    )
    atomic_write_text(out / "importance.csv", _importance_csv(report.importance))


def _attack_models(cfg: dict, graphs: dict[int, PageGraph]) -> dict[int, str]:
    """Model text per page: one fixed model, or one per fold trained on the other folds."""
    if cfg.get("model"):
        text = _need_file(cfg["model"], "--model").read_text("utf-8")
        TreeEnsembleModel.loads(text)  # validate before fanning out
        return {i: text for i in graphs}
    pages = _load_pages(_need_dir(cfg["features"], "--features or --model"),
                        _need_dir(cfg["labels"], "--labels"), cfg["feature_set"])
    by_id = {p.page_id: p for p in pages}
    folds = kfold_split(sorted(by_id), cfg["k"], cfg["seed"])
    texts = {}
    for i, test in enumerate(folds):
        test_set = set(test)
        X, y = stack_pages([by_id[p] for p in sorted(by_id) if p not in test_set])
        text = train(X, y, _hyperparams(cfg), fold_seed(cfg["seed"], i), cfg["feature_set"]).dumps()
        for p in test:
            texts[p] = text
    return texts


def _write_attack_summary(out: Path, reports: list[dict]) -> None:
    totals = {k: 0 for k in ("ATS_Adv", "NonATS_Adv", "ATS_Web", "NonATS_Web", "desired", "undesired", "neutral")}
    for rep in reports:
        for k in totals:
            totals[k] += rep["metrics"][k]

    def pct(a: int, b: int):
        return 100.0 * a / b if b else None

    careless = bool(reports) and reports[0]["metrics"]["careless"]
    coll_den = totals["NonATS_Adv"] + (0 if careless else totals["NonATS_Web"])
    summary = {
        "pages": len(reports),
        "pages_with_adversary_ats": sum(1 for r in reports if r["metrics"]["ATS_Adv"] > 0),
        "totals": totals,
        "success_rate": pct(totals["desired"], totals["ATS_Adv"]),
        "collateral_damage": pct(totals["undesired"], coll_den),
        "other_changes": pct(totals["neutral"], totals["ATS_Web"]),
    }
    write_json(out / "summary.json", summary)
    header, rows = summarize_reports(reports)
    atomic_write_text(out / "success_collateral.csv", csv_text(header, rows))


def cmd_attack_content(cfg: dict, out: Path) -> None:
    graphs = _load_graphs(_need_dir(cfg["graphs"], "--graphs"))
    policy = tuple(p for p in cfg["policy"].split(",") if p)
    bad = set(policy) - CONTENT_POLICIES
    if bad:
        raise UsageError(f"--policy: unknown entries {sorted(bad)}")
    models = _attack_models(cfg, graphs)
    items = [
        (i, Path(cfg["graphs"]) / f"page_{i}.json", models[i], policy, cfg["collusion"], cfg["careless"], cfg["seed"])
        for i in sorted(graphs) if i in models
    ]
    (out / "reports").mkdir(exist_ok=True)
    reports = []
    for idx, rep in _map(_content_one, items, cfg["jobs"]):
        write_json(out / "reports" / f"page_{idx}.json", rep)
        reports.append(rep)
    _write_attack_summary(out, reports)


def cmd_attack_structure(cfg: dict, out: Path) -> None:
    graphs = _load_graphs(_need_dir(cfg["graphs"], "--graphs"))
    models = _attack_models(cfg, graphs)
    sizes = {i: g.n_nodes for i, g in graphs.items() if i in models}
    chosen = select_pages(sizes, cfg["per_bin"], cfg["bins"], cfg["max_nodes"], cfg["seed"])
    items = [(i, Path(cfg["graphs"]) / f"page_{i}.json", models[i], cfg) for i in sorted(chosen)]
    (out / "reports").mkdir(exist_ok=True)
    (out / "trajectories").mkdir(exist_ok=True)
    reports = []
    for idx, rep, traj in _map(_structure_one, items, cfg["jobs"]):
        write_json(out / "reports" / f"page_{idx}.json", rep)
        atomic_write_text(out / "trajectories" / f"page_{idx}.csv", traj)
        reports.append(rep)
    _write_attack_summary(out, reports)


def cmd_report(cfg: dict, out: Path) -> None:
    dirs = cfg["reports"] or []
    if not dirs:
        raise UsageError("missing required option --reports")
    reports = []
    for d in dirs:
        path = _need_dir(d, "--reports")
        if (path / "reports").is_dir():
            path = path / "reports"
        for _, f in _page_files(path, "json"):
            with open(f, encoding="utf-8") as fh:
                rep = json.load(fh)
            if "metrics" not in rep:
                raise DataError(f"{f} is not an attack report")
            rep.setdefault("source", str(d))
            reports.append(rep)
    header, rows = summarize_reports(reports)
    sources = [r["source"] for r in reports]
    atomic_write_text(out / "success_collateral.csv", csv_text(["source", *header], [[s, *r] for s, r in zip(sources, rows)]))
    by_kind: dict[str, list[float]] = {}
    for rep in reports:
        s = rep["metrics"]["success_rate"]
        if s is not None:
            by_kind.setdefault(f"{rep['source']}:{rep['kind']}", []).append(s)
    write_json(out / "report.json", {
        "reports": len(reports),
        "mean_success_rate": {k: float(np.mean(v)) for k, v in sorted(by_kind.items())},
    })


# --- argument parsing ----------------------------------------------------

COMMON_DEFAULTS: dict[str, Any] = {"seed": 0, "jobs": 1}
MODEL_DEFAULTS: dict[str, Any] = {
    "n_trees": 100, "max_depth": 20, "min_samples_split": 2, "features_per_split": "sqrt",
}

COMMANDS: dict[str, tuple[Callable, dict[str, Any]]] = {
    "gen": (cmd_gen, {"pages": 100, "spec": None}),
    "build": (cmd_build, {"corpus": None, "min_value_len": 8}),
    "features": (cmd_features, {"graphs": None, "feature_set": "webgraph_full"}),
    "label": (cmd_label, {"graphs": None, "rules": None, "truth": None}),
    "train": (cmd_train, {"features": None, "labels": None, "feature_set": "webgraph_full", **MODEL_DEFAULTS}),
    "eval": (cmd_eval, {"features": None, "labels": None, "feature_set": "webgraph_full", "k": 10, **MODEL_DEFAULTS}),
    "attack-content": (cmd_attack_content, {
        "graphs": None, "model": None, "features": None, "labels": None, "feature_set": "webgraph_full",
        "k": 5, "policy": "domain", "collusion": False, "careless": False, **MODEL_DEFAULTS,
    }),
    "attack-structure": (cmd_attack_structure, {
        "graphs": None, "model": None, "features": None, "labels": None, "feature_set": "webgraph_full",
        "k": 5, "collusion": False, "careless": False, "growth_cap": 0.2, "max_iter": 20, "l_t": None,
        "bins": 5, "per_bin": 2, "max_nodes": 250, **MODEL_DEFAULTS,
    }),
    "report": (cmd_report, {"reports": None}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="webgraph-lab", description="Page-graph ATS detection and evasion pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file of option values")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", help="output directory")

    def model_opts(p: argparse.ArgumentParser) -> None:
        p.add_argument("--n-trees", type=int)
        p.add_argument("--max-depth", type=int)
        p.add_argument("--min-samples-split", type=int)
        p.add_argument("--features-per-split")

    def feature_set(p: argparse.ArgumentParser) -> None:
        p.add_argument("--feature-set", choices=sorted(FEATURE_SETS))

    def attack_opts(p: argparse.ArgumentParser) -> None:
        p.add_argument("--graphs")
        p.add_argument("--model", help="trained model.json; omit to train one model per fold")
        p.add_argument("--features", help="feature CSVs for per-fold training")
        p.add_argument("--labels", help="label CSVs for per-fold training")
        p.add_argument("--k", type=int)
        p.add_argument("--collusion", action="store_true", default=None)
        p.add_argument("--careless", action="store_true", default=None)
        feature_set(p)
        model_opts(p)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--pages", type=int)

    p = sub.add_parser("build", help="build page graphs from traces")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--min-value-len", type=int)

    p = sub.add_parser("features", help="extract feature CSVs")
    common(p)
    p.add_argument("--graphs")
    feature_set(p)

    p = sub.add_parser("label", help="label request nodes")
    common(p)
    p.add_argument("--graphs")
    p.add_argument("--rules", help="filter rules file")
    p.add_argument("--truth", help="generator labels.csv instead of rules")

    for name in ("train", "eval"):
        p = sub.add_parser(name, help="train a model" if name == "train" else "k-fold cross-validation")
        common(p)
        p.add_argument("--features")
        p.add_argument("--labels")
        feature_set(p)
        model_opts(p)
        if name == "eval":
            p.add_argument("--k", type=int)

    p = sub.add_parser("attack-content", help="URL content mutation attack")
    common(p)
    attack_opts(p)
    p.add_argument("--policy", help=f"comma list from {sorted(CONTENT_POLICIES)}")

    p = sub.add_parser("attack-structure", help="greedy graph mutation attack")
    common(p)
    attack_opts(p)
    p.add_argument("--growth-cap", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--l-t", type=int, help="controlled-node sample size (default min(|T|, 10))")
    p.add_argument("--bins", type=int)
    p.add_argument("--per-bin", type=int)
    p.add_argument("--max-nodes", type=int)

    p = sub.add_parser("report", help="merge attack reports into plot-ready CSV")
    common(p)
    p.add_argument("--reports", action="append", help="attack output directory (repeatable)")
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    defaults = {**COMMON_DEFAULTS, **COMMANDS[args.command][1]}
    cfg = dict(defaults)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"--config: no such file: {args.config}")
        try:
            loaded = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config: invalid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("--config must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        loaded.pop("command", None)
        unknown = set(loaded) - set(defaults) - {"out"}
        if unknown:
            raise UsageError(f"--config: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    explicit = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    cfg.update(explicit)
    if cfg.get("jobs", 1) < 1:
        raise UsageError("--jobs must be at least 1")
    if "k" in cfg and cfg["k"] < 2:
        raise UsageError("--k must be at least 2")
    if "growth_cap" in cfg and cfg["growth_cap"] < 0:
        raise UsageError("--growth-cap must be nonnegative")
    if cfg.get("feature_set") is not None and cfg["feature_set"] not in FEATURE_SETS:
        raise UsageError(f"--feature-set: unknown set {cfg['feature_set']!r}")
    cfg["command"] = args.command
    return cfg


def _configure_logging() -> None:
    level = os.environ.get("WEBGRAPH_LAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def run(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (see --help)")
        cfg = resolve_config(args)
        if not cfg.get("out"):
            raise UsageError("missing required option --out")
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "config.json", cfg)
        COMMANDS[args.command][0](cfg, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except (DataError, TraceError, UnparseableUrl, InvalidRule, FeatureSetMismatch, SingleClassTraining,
            TooFewPages, json.JSONDecodeError, KeyError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
