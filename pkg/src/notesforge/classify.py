"""Cash-out classifiers, evaluation metrics, stratified cross-validation and
feature importance.

Three model families share one :class:`Dataset`: L2-regularised logistic
regression trained by full-batch gradient descent, a CART classification tree
(Gini) and gradient-boosted regression trees under logistic loss. Tree
growth is level-wise over features presorted once per training call.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .features import FeatureRow

__all__ = [
    "Dataset",
    "LogisticModel",
    "TreeModel",
    "GbtModel",
    "ConstantModel",
    "ModelSpec",
    "EvalReport",
    "CVReport",
    "logistic_objective",
    "train_logistic",
    "train_tree",
    "train_gbt",
    "train",
    "predict_proba",
    "confusion",
    "weighted_f1",
    "roc_curve",
    "auc",
    "metrics",
    "stratified_kfold",
    "cross_validate",
    "feature_importance",
    "top_k_source_share",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "write_report",
    "write_importance",
]


# --------------------------------------------------------------------------
# data


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    client_ids: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        n = self.y.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise ValueError(f"X must be {n} x p, got shape {self.X.shape}")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names length does not match X")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        if len(self.client_ids) != n:
            raise ValueError("client_ids length does not match labels")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix has non-finite entries")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")

    @classmethod
    def from_rows(cls, rows: Sequence[FeatureRow]) -> "Dataset":
        names = list(rows[0].features) if rows else []
        X = np.array([[r.features[n] for n in names] for r in rows], dtype=np.float64).reshape(len(rows), len(names))
        return cls(X, np.array([r.label for r in rows], dtype=np.int64), names, [r.client_id for r in rows])

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], list(self.feature_names), [self.client_ids[i] for i in idx])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _class_weights(y: np.ndarray, mode: str | None) -> np.ndarray:
    if mode is None or mode == "none":
        return np.ones(y.shape[0])
    if mode != "balanced":
        raise ValueError(f"unknown class_weight {mode!r}")
    n1 = int(y.sum())
    n0 = y.shape[0] - n1
    if n0 == 0 or n1 == 0:
        return np.ones(y.shape[0])
    return np.where(y == 1, y.shape[0] / (2.0 * n1), y.shape[0] / (2.0 * n0))


# --------------------------------------------------------------------------
# models


@dataclass
class LogisticModel:
    feature_names: list[str]
    weights: np.ndarray  # on standardised features
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    loss_history: list[float] = field(default_factory=list, repr=False)
    kind: str = "logistic"

    def decision(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.scale) @ self.weights + self.intercept


@dataclass
class TreeModel:
    """Flat node arrays. ``feature[i] == -1`` marks a leaf; rows with
    ``x[feature] <= threshold`` go to ``left``."""

    feature_names: list[str]
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray
    kind: str = "tree"

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def output(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_index(X)]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


@dataclass
class GbtModel:
    feature_names: list[str]
    trees: list[TreeModel]
    learning_rate: float
    initial_logit: float
    loss_history: list[float] = field(default_factory=list, repr=False)
    kind: str = "gbt"

    def decision(self, X: np.ndarray) -> np.ndarray:
        f = np.full(X.shape[0], self.initial_logit)
        for t in self.trees:
            f += self.learning_rate * t.output(X)
        return f


@dataclass
class ConstantModel:
    """Scores every row with the training base rate."""

    feature_names: list[str]
    rate: float
    kind: str = "constant"


Model = LogisticModel | TreeModel | GbtModel | ConstantModel


# --------------------------------------------------------------------------
# logistic regression


def logistic_objective(w: np.ndarray, b: float, Xs: np.ndarray, y: np.ndarray, l2: float, sample_weight=None):
    """Mean (weighted) negative log-likelihood plus ``l2 / 2 * |w|^2``; returns (loss, grad_w, grad_b)."""
    sw = np.ones(y.shape[0]) if sample_weight is None else sample_weight
    z = Xs @ w + b
    # log(1 + e^z) - y z, computed stably
    nll = np.logaddexp(0.0, z) - y * z
    tot = sw.sum()
    loss = float(np.dot(sw, nll) / tot + 0.5 * l2 * np.dot(w, w))
    r = sw * (_sigmoid(z) - y) / tot
    return loss, Xs.T @ r + l2 * w, float(r.sum())


def train_logistic(
    data: Dataset,
    l2: float = 1e-3,
    epochs: int = 500,
    lr: float = 0.1,
    seed: int = 0,
    class_weight: str | None = None,
) -> LogisticModel:
    """Full-batch gradient descent on standardised features.

    The intercept starts at the logit of the (weighted) base rate, which is
    already the optimum when there are no features.
    """
    y = data.y.astype(np.float64)
    if y.size == 0 or y.min() == y.max():
        raise ValueError("logistic regression needs both classes in the training data")
    sw = _class_weights(data.y, class_weight)
    mean = data.X.mean(axis=0)
    scale = data.X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (data.X - mean) / scale
    w = np.zeros(data.n_features)
    b = _logit(float(np.dot(sw, y) / sw.sum()))
    history = []
    for _ in range(epochs):
        loss, gw, gb = logistic_objective(w, b, Xs, y, l2, sw)
        history.append(loss)
        w = w - lr * gw
        b = b - lr * gb
    history.append(logistic_objective(w, b, Xs, y, l2, sw)[0])
    return LogisticModel(list(data.feature_names), w, float(b), mean, scale, history)


# --------------------------------------------------------------------------
# trees

GINI, VARIANCE = 0, 1


@njit(cache=True)
def _impurity_score(crit, w, s):
    # Quantity whose decrease is the split gain: n * gini, or -s^2/n for variance.
    if w <= 0.0:
        return 0.0
    if crit == 0:
        return 2.0 * s * (w - s) / w
    return -s * s / w


@njit(cache=True)
def _best_splits(X, order, node_of, target, weight, n_nodes, min_leaf, crit):
    """Exact best split for every active node at one depth.

    ``order[j]`` lists the training rows sorted by feature j. Candidate
    thresholds are midpoints between consecutive distinct values. Features
    and thresholds are visited in increasing order and only a strictly
    better gain replaces the incumbent, so ties keep the lowest feature and
    the lowest threshold.
    """
    n, p = X.shape
    tot_w = np.zeros(n_nodes)
    tot_s = np.zeros(n_nodes)
    tot_n = np.zeros(n_nodes, dtype=np.int64)
    for r in range(n):
        nd = node_of[r]
        if nd >= 0:
            tot_w[nd] += weight[r]
            tot_s[nd] += weight[r] * target[r]
            tot_n[nd] += 1
    parent = np.empty(n_nodes)
    for nd in range(n_nodes):
        parent[nd] = _impurity_score(crit, tot_w[nd], tot_s[nd])
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    lw = np.zeros(n_nodes)
    ls = np.zeros(n_nodes)
    ln = np.zeros(n_nodes, dtype=np.int64)
    last = np.zeros(n_nodes)
    for j in range(p):
        lw[:] = 0.0
        ls[:] = 0.0
        ln[:] = 0
        for q in range(n):
            r = order[j, q]
            nd = node_of[r]
            if nd < 0:
                continue
            x = X[r, j]
            if ln[nd] > 0 and x > last[nd]:
                nl = ln[nd]
                nr = tot_n[nd] - nl
                if nl >= min_leaf and nr >= min_leaf:
                    g = parent[nd] - _impurity_score(crit, lw[nd], ls[nd]) - _impurity_score(
                        crit, tot_w[nd] - lw[nd], tot_s[nd] - ls[nd]
                    )
                    if g > best_gain[nd] + 1e-12 * max(1.0, abs(best_gain[nd])):
                        best_gain[nd] = g
                        best_feat[nd] = j
                        thr = 0.5 * (last[nd] + x)
                        if thr >= x:
                            thr = last[nd]
                        best_thr[nd] = thr
            lw[nd] += weight[r]
            ls[nd] += weight[r] * target[r]
            ln[nd] += 1
            last[nd] = x
    return best_feat, best_thr, best_gain, tot_w, tot_s, tot_n


def _presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _grow(
    X: np.ndarray,
    order: np.ndarray,
    target: np.ndarray,
    weight: np.ndarray,
    max_depth: int,
    min_leaf: int,
    crit: int,
    leaf_value,
    feature_names: list[str],
    kind: str,
) -> TreeModel:
    """Level-wise tree growth. ``leaf_value(rows)`` gives the value stored at a leaf."""
    n = X.shape[0]
    feature, threshold, left, right, value, gain, counts = [], [], [], [], [], [], []

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0), (gain, 0.0), (counts, 0)):
            arr.append(v)
        return len(feature) - 1

    root = new_node()
    node_of = np.zeros(n, dtype=np.int64)  # level-local index, -1 once in a finished leaf
    level_nodes = [root]
    for depth in range(max_depth + 1):
        m = len(level_nodes)
        if depth == max_depth:
            bf = np.full(m, -1, dtype=np.int64)
            bt = bg = np.zeros(m)
        else:
            bf, bt, bg, _, _, _ = _best_splits(X, order, node_of, target, weight, m, min_leaf, crit)
        members = [[] for _ in range(m)]
        for r in np.flatnonzero(node_of >= 0):
            members[node_of[r]].append(r)
        next_nodes = []
        new_of = np.full(n, -1, dtype=np.int64)
        for li, nd in enumerate(level_nodes):
            rows = np.asarray(members[li], dtype=np.int64)
            counts[nd] = rows.size
            if bf[li] < 0:
                value[nd] = leaf_value(rows)
                continue
            feature[nd], threshold[nd], gain[nd] = int(bf[li]), float(bt[li]), float(bg[li])
            go_left = X[rows, bf[li]] <= bt[li]
            for side, sel in ((left, go_left), (right, ~go_left)):
                child = new_node()
                side[nd] = child
                new_of[rows[sel]] = len(next_nodes)
                next_nodes.append(child)
        if not next_nodes:
            break
        node_of, level_nodes = new_of, next_nodes
    return TreeModel(
        list(feature_names),
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
        np.array(gain),
        np.array(counts, dtype=np.int64),
        kind,
    )


def train_tree(
    data: Dataset, max_depth: int = 6, min_leaf: int = 20, seed: int = 0, class_weight: str | None = None
) -> TreeModel:
    """CART with Gini impurity; leaf value is the (weighted) class-1 fraction."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    y = data.y.astype(np.float64)
    sw = _class_weights(data.y, class_weight)

    def leaf(rows):
        if rows.size == 0:
            return 0.0
        return float(np.dot(sw[rows], y[rows]) / sw[rows].sum())

    return _grow(data.X, _presort(data.X), y, sw, max_depth, min_leaf, GINI, leaf, data.feature_names, "tree")


def train_gbt(
    data: Dataset,
    rounds: int = 200,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    min_leaf: int = 20,
    seed: int = 0,
    class_weight: str | None = None,
    leaf_l2: float = 1.0,
) -> GbtModel:
    """Gradient boosting under logistic loss.

    Each round fits a variance-criterion regression tree to the residuals
    y - p and sets each leaf to the Newton step sum(r) / (sum(p (1 - p)) + leaf_l2).
    The ``leaf_l2`` ridge term keeps leaves holding few positives from
    taking huge steps; ``leaf_l2 = 0`` gives the plain Newton step.
    ``rounds = 0`` gives a model that predicts the base rate.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    y = data.y.astype(np.float64)
    sw = _class_weights(data.y, class_weight)
    base = float(np.dot(sw, y) / sw.sum()) if y.size else 0.0
    if not 0.0 < base < 1.0:
        raise ValueError("gradient boosting needs both classes in the training data")
    f0 = _logit(base)
    F = np.full(y.shape[0], f0)
    order = _presort(data.X)
    trees, history = [], []

    def loss(F):
        return float(np.dot(sw, np.logaddexp(0.0, F) - y * F) / sw.sum())

    history.append(loss(F))
    for _ in range(rounds):
        p = _sigmoid(F)
        resid = y - p
        hess = sw * p * (1.0 - p)

        def leaf(rows, resid=resid, hess=hess):
            den = hess[rows].sum() + leaf_l2
            return float(np.dot(sw[rows], resid[rows]) / den) if den > 1e-12 else 0.0

        tree = _grow(data.X, order, resid, sw, max_depth, min_leaf, VARIANCE, leaf, data.feature_names, "regression")
        F = F + learning_rate * tree.output(data.X)
        trees.append(tree)
        history.append(loss(F))
    return GbtModel(list(data.feature_names), trees, float(learning_rate), f0, history)


def _train_constant(data: Dataset) -> ConstantModel:
    return ConstantModel(list(data.feature_names), float(data.y.mean()) if len(data) else 0.0)


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "gbt"
    l2: float = 1e-3
    epochs: int = 500
    lr: float = 0.1
    max_depth: int | None = None  # tree 6, gbt 3
    min_leaf: int = 20
    rounds: int = 200
    learning_rate: float = 0.1
    leaf_l2: float = 1.0
    class_weight: str | None = None

    def __post_init__(self):
        if self.kind not in ("logistic", "tree", "gbt", "constant"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def depth(self) -> int:
        if self.max_depth is not None:
            return self.max_depth
        return 6 if self.kind == "tree" else 3


def train(data: Dataset, spec: ModelSpec, seed: int = 0) -> Model:
    if spec.kind == "logistic":
        return train_logistic(data, spec.l2, spec.epochs, spec.lr, seed, spec.class_weight)
    if spec.kind == "tree":
        return train_tree(data, spec.depth, spec.min_leaf, seed, spec.class_weight)
    if spec.kind == "gbt":
        return train_gbt(data, spec.rounds, spec.learning_rate, spec.depth, spec.min_leaf, seed, spec.class_weight, spec.leaf_l2)
    return _train_constant(data)


def predict_proba(model: Model, X) -> np.ndarray | float:
    """Class-1 probability for one feature vector (returns a float) or a matrix of rows."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    p = len(model.feature_names)
    if X2.ndim != 2 or X2.shape[1] != p:
        raise ValueError(f"expected {p} features, got shape {X.shape}")
    if isinstance(model, LogisticModel):
        out = _sigmoid(model.decision(X2))
    elif isinstance(model, GbtModel):
        out = _sigmoid(model.decision(X2))
    elif isinstance(model, TreeModel):
        out = model.output(X2)
    else:
        out = np.full(X2.shape[0], model.rate)
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# metrics


def confusion(scores, labels, threshold: float = 0.5) -> dict[str, int]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pred = s >= threshold
    pos = y == 1
    return {
        "TP": int(np.sum(pred & pos)),
        "TN": int(np.sum(~pred & ~pos)),
        "FP": int(np.sum(pred & ~pos)),
        "FN": int(np.sum(~pred & pos)),
    }


def _f1(tp: int, fp: int, fn: int) -> float:
    den = tp + 0.5 * (fp + fn)
    return tp / den if den > 0 else 0.0


def weighted_f1(counts: dict[str, int]) -> float:
    """Per-class F1 averaged with class-support weights (class 0 treats TN as its hits)."""
    tp, tn, fp, fn = counts["TP"], counts["TN"], counts["FP"], counts["FN"]
    n1, n0 = tp + fn, tn + fp
    if n0 + n1 == 0:
        return 0.0
    return (n1 * _f1(tp, fp, fn) + n0 * _f1(tn, fn, fp)) / (n0 + n1)


def roc_curve(scores, labels) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) points from (0, 0) to (1, 1), one per distinct score."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n1 = int(np.sum(y == 1))
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tps = np.cumsum(y == 1)
    fps = np.cumsum(y != 1)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    pts = [(0.0, 0.0, math.inf)]
    pts.extend((fps[i] / n0, tps[i] / n1, float(s[i])) for i in last)
    return [(float(a), float(b), c) for a, b, c in pts]


def auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve (ties grouped, i.e. mid-rank)."""
    pts = np.array([(a, b) for a, b, _ in roc_curve(scores, labels)])
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


@dataclass
class EvalReport:
    accuracy: float
    weighted_f1: float
    auc: float | None
    confusion: dict[str, int]
    roc: list[tuple[float, float, float]] = field(default_factory=list, repr=False)

    def to_dict(self, with_roc: bool = False) -> dict:
        d = {"accuracy": self.accuracy, "weighted_f1": self.weighted_f1, "auc": self.auc, "confusion": dict(self.confusion)}
        if with_roc:
            d["roc"] = [list(p) for p in self.roc]
        return d


def metrics(scores, labels, threshold: float = 0.5) -> EvalReport:
    """Accuracy, support-weighted F1, confusion counts and ROC/AUC.

    With a single class present AUC and ROC are left empty (``None`` / []).
    """
    c = confusion(scores, labels, threshold)
    n = sum(c.values())
    acc = (c["TP"] + c["TN"]) / n if n else 0.0
    y = np.asarray(labels)
    if np.any(y == 1) and np.any(y != 1):
        roc = roc_curve(scores, labels)
        pts = np.array([(a, b) for a, b, _ in roc])
        area = float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))
    else:
        roc, area = [], None
    return EvalReport(acc, weighted_f1(c), area, c, roc)


# --------------------------------------------------------------------------
# cross-validation


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index per row: each class is shuffled, then dealt round-robin.

    The second class starts dealing where the first stopped, which keeps the
    overall fold sizes within one of each other.
    """
    y = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < k:
            raise ValueError(f"class {c} has {idx.size} samples, fewer than k={k}")
        idx = rng.permutation(idx)
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return folds


@dataclass
class CVReport:
    spec: ModelSpec
    k: int
    seed: int
    folds: list[dict]
    mean_train: dict[str, float]
    mean_test: dict[str, float]
    representative_fold: int
    roc: list[tuple[float, float, float]] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "model": asdict(self.spec),
            "k": self.k,
            "seed": self.seed,
            "mean_train": self.mean_train,
            "mean_test": self.mean_test,
            "representative_fold": self.representative_fold,
            "folds": self.folds,
        }


def _mean_metrics(reports: list[EvalReport]) -> dict[str, float]:
    out = {
        "accuracy": float(np.mean([r.accuracy for r in reports])),
        "weighted_f1": float(np.mean([r.weighted_f1 for r in reports])),
    }
    aucs = [r.auc for r in reports if r.auc is not None]
    out["auc"] = float(np.mean(aucs)) if aucs else None
    return out


def cross_validate(data: Dataset, spec: ModelSpec, k: int = 5, seed: int = 0, threshold: float = 0.5) -> CVReport:
    """Train on k-1 folds, test on the held-out fold, for every fold in order.

    The retained ROC comes from the fold whose test AUC is closest to the mean
    test AUC (lowest fold index on ties).
    """
    folds = stratified_kfold(data.y, k, seed)
    per_fold, train_reps, test_reps = [], [], []
    for f in range(k):
        tr, te = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
        dtr, dte = data.subset(tr), data.subset(te)
        model = train(dtr, spec, seed)
        rtr = metrics(predict_proba(model, dtr.X), dtr.y, threshold)
        rte = metrics(predict_proba(model, dte.X), dte.y, threshold)
        train_reps.append(rtr)
        test_reps.append(rte)
        per_fold.append(
            {"fold": f, "n_train": int(tr.size), "n_test": int(te.size), "train": rtr.to_dict(), "test": rte.to_dict()}
        )
    mean_test = _mean_metrics(test_reps)
    if mean_test["auc"] is not None:
        rep = min(
            (f for f in range(k) if test_reps[f].auc is not None),
            key=lambda f: (abs(test_reps[f].auc - mean_test["auc"]), f),
        )
    else:
        rep = 0
    return CVReport(spec, k, seed, per_fold, _mean_metrics(train_reps), mean_test, rep, test_reps[rep].roc)


# --------------------------------------------------------------------------
# importance


def feature_importance(model: Model) -> list[tuple[str, float]]:
    """Descending importance with lexicographic tie-break.

    Logistic: |coefficient| on standardised features. Tree and GBT: total
    impurity decrease (Gini or variance gain) over every split on the feature.
    """
    names = model.feature_names
    imp = np.zeros(len(names))
    if isinstance(model, LogisticModel):
        imp = np.abs(model.weights)
    elif isinstance(model, (TreeModel, GbtModel)):
        trees = [model] if isinstance(model, TreeModel) else model.trees
        for t in trees:
            internal = t.feature >= 0
            np.add.at(imp, t.feature[internal], t.gain[internal])
    return sorted(((n, float(v)) for n, v in zip(names, imp)), key=lambda kv: (-kv[1], kv[0]))


def top_k_source_share(ranking: Sequence[tuple[str, float]], k: int, prefix: str = "note.") -> float:
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k must lie in [1, {len(ranking)}]")
    return sum(1 for name, _ in ranking[:k] if name.startswith(prefix)) / k


# --------------------------------------------------------------------------
# persistence

MODEL_FORMAT = 1


def _tree_dict(t: TreeModel) -> dict:
    return {
        "kind": t.kind,
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
        "gain": t.gain.tolist(),
        "n_samples": t.n_samples.tolist(),
    }


def _tree_from(d: dict, names: list[str]) -> TreeModel:
    return TreeModel(
        names,
        np.array(d["feature"], dtype=np.int64),
        np.array(d["threshold"], dtype=np.float64),
        np.array(d["left"], dtype=np.int64),
        np.array(d["right"], dtype=np.int64),
        np.array(d["value"], dtype=np.float64),
        np.array(d["gain"], dtype=np.float64),
        np.array(d["n_samples"], dtype=np.int64),
        d.get("kind", "tree"),
    )


def model_to_dict(model: Model) -> dict:
    d = {"format_version": MODEL_FORMAT, "kind": model.kind, "feature_names": list(model.feature_names)}
    if isinstance(model, LogisticModel):
        d.update(
            weights=model.weights.tolist(), intercept=model.intercept, mean=model.mean.tolist(), scale=model.scale.tolist()
        )
    elif isinstance(model, TreeModel):
        d["tree"] = _tree_dict(model)
    elif isinstance(model, GbtModel):
        d.update(learning_rate=model.learning_rate, initial_logit=model.initial_logit, trees=[_tree_dict(t) for t in model.trees])
    else:
        d["rate"] = model.rate
    return d


def model_from_dict(d: dict) -> Model:
    if d.get("format_version") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
    names = list(d["feature_names"])
    kind = d["kind"]
    if kind == "logistic":
        return LogisticModel(names, np.array(d["weights"]), float(d["intercept"]), np.array(d["mean"]), np.array(d["scale"]))
    if kind == "tree":
        return _tree_from(d["tree"], names)
    if kind == "gbt":
        return GbtModel(names, [_tree_from(t, names) for t in d["trees"]], float(d["learning_rate"]), float(d["initial_logit"]))
    if kind == "constant":
        return ConstantModel(names, float(d["rate"]))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Model:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a model file ({exc})") from None
    return model_from_dict(d)


def write_report(report: CVReport | EvalReport, outdir: str | Path, name: str = "report") -> None:
    """``{name}.json`` with the metrics and ``roc.csv`` (fpr,tpr,threshold)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    (outdir / f"{name}.json").write_text(json.dumps(d, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    with open(outdir / "roc.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in report.roc:
            w.writerow([repr(float(fpr)), repr(float(tpr)), repr(float(thr))])


def write_importance(ranking: Sequence[tuple[str, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "importance", "source_group"])
        for i, (name, val) in enumerate(ranking, 1):
            w.writerow([i, name, repr(float(val)), name.split(".", 1)[0]])
