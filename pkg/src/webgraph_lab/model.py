"""Random-forest style ATS classifier built from entropy-gain decision trees.

Trees are grown on bootstrap samples (drawn as per-row counts, which act as
sample weights) and pick each split from a random subset of the features
that are not constant at that node.  Split candidates sit at midpoints
between consecutive distinct values.  Equal gains go to the lowest feature
index, then the lowest threshold, so a fixed seed fixes the model.

The hot loops (split scanning, forest traversal) live in ``kernels``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .features import CATEGORY, FeatureMatrix, FeatureSetMismatch, check_vector, feature_names
from .labels import ATS, NON_ATS

GAIN_EPS = 1e-12


class SingleClassTraining(ValueError):
    pass


class TooFewPages(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int = 20
    min_samples_split: int = 2
    # "sqrt", "all", or an explicit count
    features_per_split: str | int = "sqrt"
    bootstrap: bool = True

    def n_split_features(self, n_features: int) -> int:
        f = self.features_per_split
        if f == "sqrt":
            k = int(math.sqrt(n_features))
        elif f == "all":
            k = n_features
        else:
            k = int(f)
        return max(1, min(k, n_features))

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


def entropy(pos: float, total: float) -> float:
    if total <= 0 or pos <= 0 or pos >= total:
        return 0.0
    p = pos / total
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def info_gain(values, labels, threshold: float, weights=None) -> float:
    """Entropy drop (bits) from splitting at ``values <= threshold``.

    ``labels`` are truthy for ATS.
    """
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels, dtype=bool).astype(np.float64)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    if x.size == 0:
        raise ValueError("info_gain needs at least one sample")
    tot = w.sum()
    left = x <= threshold
    wl, wr = w[left].sum(), w[~left].sum()
    pl, pr = (w * y)[left].sum(), (w * y)[~left].sum()
    gain = entropy(pl + pr, tot) - (wl / tot) * entropy(pl, wl) - (wr / tot) * entropy(pr, wr)
    return max(gain, 0.0)


# --- trees ---------------------------------------------------------------

@dataclass
class Tree:
    """Flat binary tree; ``feature[i] < 0`` marks a leaf.

    ``value`` is the weighted ATS fraction at each node, ``samples`` the
    weighted sample count, ``gain`` the weighted impurity decrease of the split.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    samples: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)

    def _add(self, value: float, samples: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.samples.append(samples)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def __len__(self) -> int:
        return len(self.feature)

    def depth(self, i: int = 0) -> int:
        if self.feature[i] < 0:
            return 0
        return 1 + max(self.depth(self.left[i]), self.depth(self.right[i]))

    def to_nested(self, i: int = 0) -> dict:
        p = self.value[i]
        node = {"samples": self.samples[i], "value": [1.0 - p, p]}
        if self.feature[i] >= 0:
            node.update(
                feature=self.feature[i],
                threshold=self.threshold[i],
                left=self.to_nested(self.left[i]),
                right=self.to_nested(self.right[i]),
            )
        return node

    @classmethod
    def from_nested(cls, data: dict) -> "Tree":
        tree = cls()

        def visit(node: dict) -> int:
            i = tree._add(float(node["value"][1]), float(node["samples"]))
            if "feature" in node:
                tree.feature[i] = int(node["feature"])
                tree.threshold[i] = float(node["threshold"])
                left = visit(node["left"])
                right = visit(node["right"])
                tree.left[i], tree.right[i] = left, right
                s = tree.samples
                tree.gain[i] = (
                    s[i] * entropy(tree.value[i] * s[i], s[i])
                    - s[left] * entropy(tree.value[left] * s[left], s[left])
                    - s[right] * entropy(tree.value[right] * s[right], s[right])
                )
            return i

        visit(data)
        return tree


def _grow_tree(X: np.ndarray, y: np.ndarray, w: np.ndarray, hp: Hyperparams, rng: np.random.Generator) -> Tree:
    tree = Tree()
    n_features = X.shape[1]
    k = hp.n_split_features(n_features)
    root_rows = np.flatnonzero(w > 0)
    root = tree._add(0.0, 0.0)
    stack = [(root, root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        wr = w[rows]
        tot = float(wr.sum())
        pos = float((wr * y[rows]).sum())
        tree.value[node] = pos / tot
        tree.samples[node] = tot
        if depth >= hp.max_depth or tot < hp.min_samples_split or pos <= 0 or pos >= tot:
            continue
        sub = X[rows]
        varying = np.flatnonzero(sub.max(axis=0) > sub.min(axis=0))
        if varying.size == 0:
            continue
        if varying.size > k:
            chosen = np.sort(rng.choice(varying, size=k, replace=False))
        else:
            chosen = varying
        cols = sub[:, chosen].T
        order = np.argsort(cols, axis=1, kind="stable")
        xs = np.ascontiguousarray(np.take_along_axis(cols, order, axis=1))
        ys = np.ascontiguousarray(y[rows][order])
        ws = np.ascontiguousarray(wr[order])
        gains, thresholds = kernels.split_scan(xs, ys, ws)
        best = gains.max() if gains.size else -np.inf
        if not best > GAIN_EPS:
            continue
        r, c = np.argwhere(gains >= best - GAIN_EPS)[0]
        f = int(chosen[r])
        thr = float(thresholds[r, c])
        go_left = sub[:, f] <= thr
        left = tree._add(0.0, 0.0)
        right = tree._add(0.0, 0.0)
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = left
        tree.right[node] = right
        tree.gain[node] = tot * float(gains[r, c])
        # right pushed first so the left subtree is numbered first
        stack.append((right, rows[~go_left], depth + 1))
        stack.append((left, rows[go_left], depth + 1))
    return _renumber(tree)


def _renumber(tree: Tree) -> Tree:
    """Preorder numbering, independent of the build stack's visiting order."""
    return Tree.from_nested(tree.to_nested())


# --- ensemble ------------------------------------------------------------

@dataclass
class TreeEnsembleModel:
    feature_set: str
    names: tuple[str, ...]
    hyperparams: Hyperparams
    seed: int
    class_counts: dict[str, int]
    trees: list[Tree]
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.names)

    def flat(self) -> tuple:
        """(feature, threshold, left, right, value, roots) arrays for the kernels."""
        if self._flat is None:
            feature, threshold, left, right, value, roots = [], [], [], [], [], []
            for tree in self.trees:
                base = len(feature)
                roots.append(base)
                feature.extend(tree.feature)
                threshold.extend(tree.threshold)
                left.extend(l + base if l >= 0 else -1 for l in tree.left)
                right.extend(r + base if r >= 0 else -1 for r in tree.right)
                value.extend(tree.value)
            self._flat = (
                np.asarray(feature, dtype=np.int32),
                np.asarray(threshold, dtype=np.float64),
                np.asarray(left, dtype=np.int32),
                np.asarray(right, dtype=np.int32),
                np.asarray(value, dtype=np.float64),
                np.asarray(roots, dtype=np.int32),
            )
        return self._flat

    def to_dict(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "names": list(self.names),
            "hyperparams": asdict(self.hyperparams),
            "seed": self.seed,
            "class_counts": dict(sorted(self.class_counts.items())),
            "trees": [t.to_nested() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_dict(cls, data: dict) -> "TreeEnsembleModel":
        names = tuple(data["names"])
        if names != feature_names(data["feature_set"]):
            raise FeatureSetMismatch("model feature names do not match its feature set")
        model = cls(
            data["feature_set"],
            names,
            Hyperparams.from_dict(data["hyperparams"]),
            int(data["seed"]),
            {k: int(v) for k, v in data["class_counts"].items()},
            [Tree.from_nested(t) for t in data["trees"]],
        )
        model.validate()
        return model

    @classmethod
    def loads(cls, text: str) -> "TreeEnsembleModel":
        return cls.from_dict(json.loads(text))

    def validate(self) -> None:
        for tree in self.trees:
            for i, f in enumerate(tree.feature):
                if f >= self.n_features:
                    raise ValueError(f"split feature {f} out of range")
                if not 0.0 <= tree.value[i] <= 1.0:
                    raise ValueError("leaf probability outside [0, 1]")
            if tree.depth() > self.hyperparams.max_depth:
                raise ValueError("tree deeper than max_depth")


def _as_xy(matrix, labels) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(getattr(matrix, "values", matrix), dtype=np.float64)
    y = np.array([1.0 if (l == ATS or l is True or l == 1) else 0.0 for l in labels])
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("matrix rows and labels disagree")
    return X, y


def train(
    matrix: FeatureMatrix | np.ndarray,
    labels: Sequence,
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 0,
    feature_set: str | None = None,
) -> TreeEnsembleModel:
    """Fit an ensemble.  ``labels`` are "ATS"/"NonATS" strings (or 1/0)."""
    X, y = _as_xy(matrix, labels)
    if feature_set is None:
        feature_set = matrix.feature_set
    names = feature_names(feature_set)
    if X.shape[1] != len(names):
        raise FeatureSetMismatch(f"matrix has {X.shape[1]} columns, {feature_set} needs {len(names)}")
    n_pos = int(y.sum())
    if X.shape[0] < 2 or n_pos == 0 or n_pos == X.shape[0]:
        raise SingleClassTraining("training needs at least two samples and both classes")
    trees = []
    n = X.shape[0]
    for t in range(hyperparams.n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        if hyperparams.bootstrap:
            w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        else:
            w = np.ones(n)
        trees.append(_grow_tree(X, y, w, hyperparams, rng))
    counts = {ATS: n_pos, NON_ATS: n - n_pos}
    return TreeEnsembleModel(feature_set, names, hyperparams, seed, counts, trees)


def _check(model: TreeEnsembleModel, X, names) -> np.ndarray:
    if names is not None:
        check_vector(names, model.names)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise FeatureSetMismatch(f"vector has {X.shape[1]} features, model expects {model.n_features}")
    return X


def predict_scores(model: TreeEnsembleModel, matrix) -> np.ndarray:
    X = _check(model, getattr(matrix, "values", matrix), getattr(matrix, "names", None))
    feature, threshold, left, right, value, roots = model.flat()
    return kernels.forest_predict(feature, threshold, left, right, value, roots, X)


def predict_labels(model: TreeEnsembleModel, matrix) -> list[str]:
    return [ATS if s >= 0.5 else NON_ATS for s in predict_scores(model, matrix)]


def predict(model: TreeEnsembleModel, vector) -> tuple[str, float]:
    """(label, score) for a single FeatureVector or raw array."""
    score = float(predict_scores(model, vector)[0])
    return (ATS if score >= 0.5 else NON_ATS), score


@dataclass
class Explanation:
    names: tuple[str, ...]
    bias: float
    contributions: np.ndarray
    score: float

    def top(self, n: int = 5) -> list[tuple[str, float]]:
        order = sorted(range(len(self.names)), key=lambda i: (-abs(self.contributions[i]), i))
        return [(self.names[i], float(self.contributions[i])) for i in order[:n]]


def explain_prediction(model: TreeEnsembleModel, vector) -> Explanation:
    """Split the score into a bias term and per-feature path contributions."""
    X = _check(model, getattr(vector, "values", vector), getattr(vector, "names", None))
    feature, threshold, left, right, value, roots = model.flat()
    bias, contrib = kernels.forest_contributions(feature, threshold, left, right, value, roots, X, model.n_features)
    score = float(kernels.forest_predict(feature, threshold, left, right, value, roots, X)[0])
    return Explanation(model.names, float(bias[0]), contrib[0], score)


def explain_matrix(model: TreeEnsembleModel, matrix) -> tuple[np.ndarray, np.ndarray]:
    X = _check(model, getattr(matrix, "values", matrix), getattr(matrix, "names", None))
    feature, threshold, left, right, value, roots = model.flat()
    return kernels.forest_contributions(feature, threshold, left, right, value, roots, X, model.n_features)


# --- importance ----------------------------------------------------------

def model_importance(model: TreeEnsembleModel) -> np.ndarray:
    """Per-feature weighted entropy decrease as percentages summing to 100.

    Each tree's decreases are normalised to sum 1 before averaging, so large
    bootstrap trees do not dominate.  A model whose trees never split gets
    all zeros.
    """
    total = np.zeros(model.n_features)
    for tree in model.trees:
        imp = np.zeros(model.n_features)
        for i, f in enumerate(tree.feature):
            if f >= 0:
                imp[f] += tree.gain[i]
        s = imp.sum()
        if s > 0:
            total += imp / s
    s = total.sum()
    return total * (100.0 / s) if s > 0 else total


@dataclass
class ImportanceReport:
    names: tuple[str, ...]
    per_model: np.ndarray  # (n_models, n_features) percentages

    @property
    def mean(self) -> np.ndarray:
        return self.per_model.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        if self.per_model.shape[0] < 2:
            return np.zeros(len(self.names))
        return self.per_model.std(axis=0, ddof=1)

    def ranked(self) -> list[tuple[str, str, float, float]]:
        mean, std = self.mean, self.std
        order = sorted(range(len(self.names)), key=lambda i: (-mean[i], self.names[i]))
        return [(self.names[i], CATEGORY[self.names[i]], float(mean[i]), float(std[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "features": [
                {"feature": n, "category": c, "info_gain_pct": m, "std": s} for n, c, m, s in self.ranked()
            ],
            "per_model_sums": [float(x) for x in self.per_model.sum(axis=1)],
        }

    def csv_rows(self) -> list[tuple]:
        return [(rank + 1, n, c, m, s) for rank, (n, c, m, s) in enumerate(self.ranked())]


def feature_importance(models: TreeEnsembleModel | Sequence[TreeEnsembleModel]) -> ImportanceReport:
    if isinstance(models, TreeEnsembleModel):
        models = [models]
    if not models:
        raise ValueError("no models")
    names = models[0].names
    return ImportanceReport(names, np.vstack([model_importance(m) for m in models]))


# --- cross-validation ----------------------------------------------------

def kfold_split(page_ids: Sequence, k: int, seed: int = 0) -> list[list]:
    """Shuffle pages and cut them into ``k`` folds whose sizes differ by at most one."""
    pages = sorted(page_ids)
    if len(set(pages)) != len(pages):
        raise ValueError("duplicate page ids")
    if k < 1 or k > len(pages):
        raise TooFewPages(f"cannot split {len(pages)} pages into {k} folds")
    perm = np.random.default_rng(seed).permutation(len(pages))
    return [sorted(pages[i] for i in chunk) for chunk in np.array_split(perm, k)]


def _pct(num: int, den: int) -> float | None:
    return 100.0 * num / den if den else None


@dataclass
class FoldResult:
    fold: int
    test_pages: list
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float | None:
        return _pct(self.tp + self.tn, self.total)

    @property
    def precision(self) -> float | None:
        return _pct(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return _pct(self.tp, self.tp + self.fn)

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "test_pages": list(self.test_pages),
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
        }


def _mean_std(xs: list[float | None]) -> tuple[float | None, float | None]:
    vals = [x for x in xs if x is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


@dataclass
class EvalReport:
    feature_set: str
    k: int
    seed: int
    folds: list[FoldResult]
    importance: ImportanceReport | None = None
    models: list[TreeEnsembleModel] = field(default_factory=list, repr=False)

    def confusion(self) -> dict[str, int]:
        return {key: sum(getattr(f, key) for f in self.folds) for key in ("tp", "fp", "tn", "fn")}

    def summary(self) -> dict[str, dict]:
        out = {}
        for metric in ("accuracy", "precision", "recall"):
            mean, std = _mean_std([getattr(f, metric) for f in self.folds])
            out[metric] = {"mean": mean, "std": std}
        return out

    def to_dict(self) -> dict:
        data = {
            "feature_set": self.feature_set,
            "k": self.k,
            "seed": self.seed,
            "confusion": self.confusion(),
            "summary": self.summary(),
            "folds": [f.to_dict() for f in self.folds],
        }
        if self.importance is not None:
            data["importance"] = self.importance.to_dict()
        return data


@dataclass
class PageData:
    page_id: object
    matrix: FeatureMatrix
    labels: list[str]


def stack_pages(pages: Sequence[PageData]) -> tuple[np.ndarray, list[str]]:
    if not pages:
        return np.zeros((0, 0)), []
    X = np.vstack([p.matrix.values for p in pages])
    y = [l for p in pages for l in p.labels]
    return X, y


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def cross_validate(
    pages: Sequence[PageData],
    feature_set: str,
    hyperparams: Hyperparams = Hyperparams(),
    k: int = 10,
    seed: int = 0,
    keep_models: bool = False,
) -> EvalReport:
    """Page-disjoint k-fold evaluation with ATS as the positive class."""
    by_id = {p.page_id: p for p in pages}
    if len(by_id) != len(pages):
        raise ValueError("duplicate page ids")
    for p in pages:
        if p.matrix.feature_set != feature_set:
            raise FeatureSetMismatch(f"page {p.page_id} has feature set {p.matrix.feature_set}")
    folds = kfold_split(list(by_id), k, seed)
    results, models = [], []
    for i, test_ids in enumerate(folds):
        test_set = set(test_ids)
        train_pages = [by_id[pid] for pid in sorted(by_id) if pid not in test_set]
        X, y = stack_pages(train_pages)
        model = train(X, y, hyperparams, fold_seed(seed, i), feature_set)
        tp = fp = tn = fn = 0
        for pid in test_ids:
            page = by_id[pid]
            if not len(page.matrix):
                continue
            for pred, truth in zip(predict_labels(model, page.matrix.values), page.labels):
                if truth == ATS:
                    tp += pred == ATS
                    fn += pred != ATS
                else:
                    fp += pred == ATS
                    tn += pred != ATS
        results.append(FoldResult(i, list(test_ids), tp, fp, tn, fn))
        models.append(model)
    report = EvalReport(feature_set, k, seed, results, feature_importance(models))
    if keep_models:
        report.models = models
    return report
