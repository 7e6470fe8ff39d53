"""Decision-forest classifier over integer LF codes, built from scratch.

Trees split on numeric thresholds over the code range 0..6 using Gini
impurity with balanced class weights. Feature importances are mean decrease
in impurity. Everything is deterministic given the config seed: per-tree
RNG streams are spawned from one seed sequence, so training order and
thread scheduling cannot change the model.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput, FeatureMismatch, ShapeMismatch, SingleClass
from .extraction import FeatureMatrix

# Codes live in 0..6 (6 = retry fallback), so histograms have a fixed width.
N_BINS = 7

MODEL_FORMAT = "promptlf-forest-v1"


@dataclass
class ForestConfig:
    n_trees: int = 500
    max_features: str | int = "sqrt"
    max_depth: int | None = None
    min_samples_leaf: int = 1
    bootstrap: bool = True
    class_weighting: str = "balanced"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.class_weighting not in ("balanced", "none"):
            raise ValueError(f"unknown class_weighting {self.class_weighting!r}")
        if isinstance(self.max_features, str):
            if self.max_features != "sqrt":
                raise ValueError(f"unknown max_features rule {self.max_features!r}")
        elif self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")

    def resolve_max_features(self, m: int) -> int:
        if m == 0:
            return 0
        if self.max_features == "sqrt":
            return max(1, math.floor(math.sqrt(m)))
        return min(m, int(self.max_features))

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_features": self.max_features,
                "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "bootstrap": self.bootstrap, "class_weighting": self.class_weighting,
                "seed": self.seed}


@dataclass
class DecisionTree:
    """Flat node arrays; feature[i] == -1 marks a leaf with a value vector."""

    feature: list[int]
    threshold: list[int]
    left: list[int]
    right: list[int]
    value: list[list[float] | None]

    @property
    def n_splits(self) -> int:
        return sum(1 for f in self.feature if f >= 0)

    def apply(self, X: np.ndarray, K: int) -> np.ndarray:
        """Leaf class-distribution vector per row of X."""
        n = X.shape[0]
        out = np.zeros((n, K), dtype=np.float64)
        if n == 0:
            return out
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
        while stack:
            nid, rows = stack.pop()
            if rows.size == 0:
                continue
            f = self.feature[nid]
            if f < 0:
                out[rows] = self.value[nid]
                continue
            mask = X[rows, f] <= self.threshold[nid]
            stack.append((self.left[nid], rows[mask]))
            stack.append((self.right[nid], rows[~mask]))
        return out

    def to_dict(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right, "value": self.value}

    @staticmethod
    def from_dict(obj: dict) -> "DecisionTree":
        return DecisionTree(feature=[int(v) for v in obj["feature"]],
                            threshold=[int(v) for v in obj["threshold"]],
                            left=[int(v) for v in obj["left"]],
                            right=[int(v) for v in obj["right"]],
                            value=[None if v is None else [float(x) for x in v]
                                   for v in obj["value"]])


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    classes: tuple[str, ...]
    feature_ids: tuple[str, ...]
    importances: np.ndarray
    config: ForestConfig

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.feature_ids = tuple(self.feature_ids)
        self.importances = np.asarray(self.importances, dtype=np.float64)
        if self.importances.shape != (len(self.feature_ids),):
            raise ValueError("importances length must equal feature count")

    def predict_proba(self, matrix: FeatureMatrix) -> np.ndarray:
        if matrix.lf_ids != self.feature_ids:
            raise FeatureMismatch(
                f"matrix columns {list(matrix.lf_ids)[:5]}... do not match "
                f"model features {list(self.feature_ids)[:5]}..."
            )
        K = len(self.classes)
        acc = np.zeros((matrix.n_memes, K), dtype=np.float64)
        for tree in self.trees:
            acc += tree.apply(matrix.values, K)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT,
                "config": self.config.to_dict(),
                "classes": list(self.classes),
                "feature_ids": list(self.feature_ids),
                "importances": [float(v) for v in self.importances],
                "trees": [t.to_dict() for t in self.trees]}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _class_weights(ylab: np.ndarray, K: int, scheme: str) -> np.ndarray:
    """Per-sample weights; balanced gives every class total weight N/K."""
    if scheme == "none":
        return np.ones(ylab.shape[0], dtype=np.float64)
    counts = np.bincount(ylab, minlength=K).astype(np.float64)
    per_class = ylab.shape[0] / (K * counts)
    return per_class[ylab]


def _best_split(col: np.ndarray, yl: np.ndarray, ww: np.ndarray, K: int,
                min_samples_leaf: int) -> tuple[float, int] | None:
    """Best (score, threshold) for one feature within a node, or None.

    Score is sum_c W_c^2 / W per side; maximizing it minimizes weighted
    child Gini. Ties go to the smallest threshold.
    """
    wh = np.bincount(col * K + yl, weights=ww, minlength=N_BINS * K)
    wh = wh.reshape(N_BINS, K)
    ch = np.bincount(col, minlength=N_BINS)
    cw = wh.cumsum(axis=0)
    cc = ch.cumsum()
    total = cw[-1]
    n = col.shape[0]
    values = np.flatnonzero(ch)
    best: tuple[float, int] | None = None
    for t in values[:-1]:
        n_left = cc[t]
        if n_left < min_samples_leaf or n - n_left < min_samples_leaf:
            continue
        w_left = cw[t]
        w_right = total - w_left
        s_left = w_left.sum()
        s_right = w_right.sum()
        score = (w_left @ w_left) / s_left + (w_right @ w_right) / s_right
        if best is None or score > best[0]:
            best = (float(score), int(t))
    return best


def _build_tree(X: np.ndarray, ylab: np.ndarray, weights: np.ndarray,
                idx: np.ndarray, config: ForestConfig, max_feats: int,
                active: np.ndarray, rng: np.random.Generator, K: int,
                importance_out: np.ndarray) -> DecisionTree:
    feature: list[int] = []
    threshold: list[int] = []
    left: list[int] = []
    right: list[int] = []
    value: list[list[float] | None] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    stack: list[tuple[int, np.ndarray, int]] = [(new_node(), idx, 0)]
    while stack:
        nid, sidx, depth = stack.pop()
        yl = ylab[sidx]
        ww = weights[sidx]
        class_w = np.bincount(yl, weights=ww, minlength=K)
        total_w = class_w.sum()
        pure = bool((yl == yl[0]).all())
        can_split = (not pure
                     and sidx.shape[0] >= 2 * config.min_samples_leaf
                     and (config.max_depth is None or depth < config.max_depth)
                     and max_feats > 0)
        if can_split:
            best: tuple[float, int, int] | None = None
            evaluated = 0
            # Permuting positions within the active (globally non-constant)
            # set keeps the RNG stream, and hence the trees, unchanged when
            # constant columns are appended to the matrix.
            for j in active[rng.permutation(active.shape[0])]:
                col = X[sidx, j]
                if (col == col[0]).all():
                    continue  # in-node constants do not consume the budget
                cand = _best_split(col, yl, ww, K, config.min_samples_leaf)
                if cand is not None and (best is None or cand[0] > best[0]):
                    best = (cand[0], cand[1], int(j))
                evaluated += 1
                if evaluated >= max_feats:
                    break
            if best is not None:
                score, thr, j = best
                decrease = score - (class_w @ class_w) / total_w
                importance_out[j] += max(decrease, 0.0)
                mask = X[sidx, j] <= thr
                lid = new_node()
                rid = new_node()
                feature[nid] = j
                threshold[nid] = thr
                left[nid] = lid
                right[nid] = rid
                stack.append((lid, sidx[mask], depth + 1))
                stack.append((rid, sidx[~mask], depth + 1))
                continue
        value[nid] = [float(v) for v in class_w / total_w]
    return DecisionTree(feature=feature, threshold=threshold,
                        left=left, right=right, value=value)


def fit(matrix: FeatureMatrix, labels: Sequence[str],
        config: ForestConfig) -> ForestModel:
    X = matrix.values
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("cannot fit on an empty matrix")
    if len(labels) != n:
        raise ShapeMismatch(f"{len(labels)} labels for {n} matrix rows")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise SingleClass(f"need >= 2 classes, got {classes}")
    class_index = {c: i for i, c in enumerate(classes)}
    ylab = np.asarray([class_index[l] for l in labels], dtype=np.int64)
    K = len(classes)
    m = X.shape[1]
    weights = _class_weights(ylab, K, config.class_weighting)
    # Globally constant columns can never split; keeping them out of the
    # candidate domain (and the max_features basis) makes fits invariant to
    # appending constants, beyond their guaranteed zero importance.
    active = np.flatnonzero((X != X[0]).any(axis=0))
    max_feats = config.resolve_max_features(active.shape[0])

    trees: list[DecisionTree] = []
    tree_importances: list[np.ndarray] = []
    children = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    for child in children:
        rng = np.random.default_rng(child)
        if config.bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        imp = np.zeros(m, dtype=np.float64)
        tree = _build_tree(X, ylab, weights, idx, config, max_feats, active,
                           rng, K, imp)
        trees.append(tree)
        if tree.n_splits > 0:
            total = imp.sum()
            tree_importances.append(imp / total if total > 0 else imp)

    if tree_importances:
        importances = np.mean(tree_importances, axis=0)
        total = importances.sum()
        if total > 0:
            importances = importances / total
    else:
        importances = np.zeros(m, dtype=np.float64)

    return ForestModel(trees=trees, classes=classes,
                       feature_ids=matrix.lf_ids,
                       importances=importances, config=config)


def predict(model: ForestModel, matrix: FeatureMatrix) -> list[str]:
    """Per-row argmax of averaged leaf distributions; ties -> lowest index."""
    if matrix.n_memes == 0:
        if matrix.lf_ids != model.feature_ids:
            raise FeatureMismatch("matrix columns do not match model features")
        return []
    proba = model.predict_proba(matrix)
    picks = np.argmax(proba, axis=1)  # argmax takes the first (lowest) index
    return [model.classes[p] for p in picks]


def importances(model: ForestModel) -> np.ndarray:
    return model.importances.copy()


def save_model(model: ForestModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)
    path.write_text(blob + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != MODEL_FORMAT:
        raise ValueError(f"unrecognized model format {obj.get('format')!r}")
    config = ForestConfig(**obj["config"])
    return ForestModel(trees=[DecisionTree.from_dict(t) for t in obj["trees"]],
                       classes=tuple(obj["classes"]),
                       feature_ids=tuple(obj["feature_ids"]),
                       importances=np.asarray(obj["importances"], dtype=np.float64),
                       config=config)
