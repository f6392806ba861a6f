"""Second-order gradient-boosted regression trees with exact greedy splits.

Squared-error loss, so every row has gradient ``pred - y`` and hessian 1.
A leaf holding gradient sum G and hessian sum H gets weight ``-G / (H + lambda)``;
a split is scored by ``0.5 * (G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l))``.
"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from cryptoforecast._io import atomic_write
from cryptoforecast.config import GBM_MODELS, GbmConfig
from cryptoforecast.errors import DatasetError, ModelFormatError
from cryptoforecast.market_data import format_float

logger = logging.getLogger(__name__)

SCHEMA = "cryptoforecast-gbm"
SCHEMA_VERSION = 1
IMPROVEMENT_TOL = 1e-10


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    weight: float = 0.0

    @property
    def is_leaf(self):
        return self.left < 0


@dataclass
class RegressionTree:
    nodes: list = field(default_factory=list)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = self.nodes[0]
            while not node.is_leaf:
                node = self.nodes[node.left if row[node.feature] < node.threshold else node.right]
            out[i] = node.weight
        return out

    def depth(self, index=0):
        node = self.nodes[index]
        if node.is_leaf:
            return 0
        return 1 + max(self.depth(node.left), self.depth(node.right))


@dataclass
class GbmModel:
    base_score: float
    learning_rate: float
    features: list
    trees: list = field(default_factory=list)
    best_round: int = 0
    meta: dict = field(default_factory=dict)
    # training-set predictions at best_round; not persisted
    fitted: object = field(default=None, repr=False, compare=False)

    def predict_array(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise DatasetError(f"expected {len(self.features)} feature columns, got shape {X.shape}")
        pred = np.full(len(X), self.base_score)
        for tree in self.trees[: self.best_round]:
            pred += self.learning_rate * tree.predict(X)
        return pred


def gain(g_left, h_left, g_right, h_right, reg_lambda):
    g, h = g_left + g_right, h_left + h_right
    return 0.5 * (g_left**2 / (h_left + reg_lambda) + g_right**2 / (h_right + reg_lambda) - g**2 / (h + reg_lambda))


def leaf_weight(g_sum, h_sum, reg_lambda):
    return -g_sum / (h_sum + reg_lambda)


def best_split(X, grad, hess, min_samples_leaf, reg_lambda):
    """Best ``(gain, feature, threshold)`` over all features, or None.

    Thresholds are midpoints between consecutive distinct values; rows with
    ``x < threshold`` go left. Ties keep the lowest feature index, then the
    lowest threshold.
    """
    n, n_features = X.shape
    best = None
    for j in range(n_features):
        order = np.argsort(X[:, j], kind="mergesort")
        xs = X[order, j]
        g_cum = np.cumsum(grad[order])
        h_cum = np.cumsum(hess[order])
        g_tot, h_tot = g_cum[-1], h_cum[-1]
        for i in range(min_samples_leaf - 1, n - min_samples_leaf):
            if xs[i] == xs[i + 1]:
                continue
            score = gain(g_cum[i], h_cum[i], g_tot - g_cum[i], h_tot - h_cum[i], reg_lambda)
            if best is None or score > best[0]:
                best = (score, j, (xs[i] + xs[i + 1]) / 2.0)
    return best


def build_tree(X, grad, hess, max_depth, min_samples_leaf, reg_lambda):
    tree = RegressionTree()

    def grow(rows, depth):
        index = len(tree.nodes)
        tree.nodes.append(Node(weight=float(leaf_weight(grad[rows].sum(), hess[rows].sum(), reg_lambda))))
        if depth >= max_depth or len(rows) < 2 * min_samples_leaf:
            return index
        split = best_split(X[rows], grad[rows], hess[rows], min_samples_leaf, reg_lambda)
        if split is None or not split[0] > 0:
            return index
        _, j, threshold = split
        go_left = X[rows, j] < threshold
        node = tree.nodes[index]
        node.feature, node.threshold, node.weight = j, float(threshold), 0.0
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return index

    grow(np.arange(len(X)), 0)
    return tree


def _rmse(pred, y):
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def fit_arrays(X, y, X_valid, y_valid, config, features, history=None):
    """Boost on arrays; ``history`` (a list) receives per-round RMSEs if given."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_valid = np.asarray(X_valid, dtype=np.float64)
    y_valid = np.asarray(y_valid, dtype=np.float64)
    if len(X) < 2 * config.min_samples_leaf:
        raise DatasetError(f"need at least {2 * config.min_samples_leaf} training rows, got {len(X)}")
    if len(X_valid) == 0:
        raise DatasetError("validation set is empty")

    if np.ptp(y) == 0:
        logger.info("constant training target; model is the base score only")
        return GbmModel(float(y[0]), config.learning_rate, list(features))

    model = GbmModel(float(np.mean(y)), config.learning_rate, list(features))
    pred = np.full(len(y), model.base_score)
    pred_valid = np.full(len(y_valid), model.base_score)
    model.fitted = pred
    best_valid = _rmse(pred_valid, y_valid)
    if history is not None:
        history.append({"round": 0, "train_rmse": _rmse(pred, y), "valid_rmse": best_valid})
    stale = 0
    hess = np.ones(len(y))
    for t in range(1, config.rounds + 1):
        grad = pred - y
        tree = build_tree(X, grad, hess, config.max_depth, config.min_samples_leaf, config.reg_lambda)
        model.trees.append(tree)
        pred = pred + config.learning_rate * tree.predict(X)
        pred_valid = pred_valid + config.learning_rate * tree.predict(X_valid)
        valid_rmse = _rmse(pred_valid, y_valid)
        if history is not None:
            history.append({"round": t, "train_rmse": _rmse(pred, y), "valid_rmse": valid_rmse})
        if valid_rmse < best_valid - IMPROVEMENT_TOL:
            best_valid, model.best_round, stale = valid_rmse, t, 0
            model.fitted = pred
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop at round %d, best round %d", t, model.best_round)
                break
    return model


def gbm_train(train, valid, target, features, config, model_name="xgboost"):
    """Fit the ensemble on contemporaneous rows: features on day t -> target on day t."""
    if not isinstance(config, GbmConfig):
        raise TypeError("config must be a GbmConfig")
    if model_name not in GBM_MODELS:
        raise ValueError(f"not a boosted-tree model name: {model_name!r}")
    features = list(features)
    if target in features:
        raise DatasetError(f"target {target!r} is also listed as a feature")
    model = fit_arrays(
        train.select(features).values, train.column(target),
        valid.select(features).values, valid.column(target),
        config, features,
    )
    model.meta = {"model": model_name, "target": target, "config": config.to_json()}
    return model


def gbm_predict(model, matrix):
    return model.predict_array(matrix.select(model.features).values)


# -- text format -------------------------------------------------------------
#
#   cryptoforecast-gbm 1
#   meta {"model": ..., "target": ..., "config": {...}}
#   features eth xrp
#   base_score <float>
#   learning_rate <float>
#   best_round <int>
#   trees <count>
#   tree <index> <node count>
#   split <feature> <threshold> <left> <right>
#   leaf <weight>


def gbm_dumps(model):
    lines = [
        f"{SCHEMA} {SCHEMA_VERSION}",
        "meta " + json.dumps(model.meta, sort_keys=True),
        "features " + " ".join(model.features),
        f"base_score {format_float(model.base_score)}",
        f"learning_rate {format_float(model.learning_rate)}",
        f"best_round {model.best_round}",
        f"trees {len(model.trees)}",
    ]
    for i, tree in enumerate(model.trees):
        lines.append(f"tree {i} {len(tree.nodes)}")
        for node in tree.nodes:
            if node.is_leaf:
                lines.append(f"leaf {format_float(node.weight)}")
            else:
                lines.append(f"split {node.feature} {format_float(node.threshold)} {node.left} {node.right}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def gbm_serialize(model, path):
    with atomic_write(path) as fh:
        fh.write(gbm_dumps(model))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def take(self, key, nfields):
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"truncated model file: expected {key!r} at line {self.pos + 1}")
        lineno = self.pos + 1
        line = self.lines[self.pos]
        self.pos += 1
        head, _, rest = line.partition(" ")
        if head != key:
            raise ModelFormatError(f"line {lineno}: expected {key!r}, got {line!r}")
        parts = rest.split(" ") if nfields else [rest]
        if nfields and len(parts) != nfields:
            raise ModelFormatError(f"line {lineno}: {key!r} needs {nfields} field(s), got {len(parts)}")
        return lineno, parts

    def peek(self):
        return self.lines[self.pos].partition(" ")[0] if self.pos < len(self.lines) else None


def gbm_loads(text):
    src = _Lines(text)
    lineno, (version,) = src.take(SCHEMA, 1)
    if version != str(SCHEMA_VERSION):
        raise ModelFormatError(f"unsupported {SCHEMA} version {version} (expected {SCHEMA_VERSION})")
    try:
        _, (meta,) = src.take("meta", 0)
        meta = json.loads(meta)
        _, features = src.take("features", 0)
        features = features[0].split(" ") if features[0] else []
        _, (base,) = src.take("base_score", 1)
        _, (lr,) = src.take("learning_rate", 1)
        _, (best,) = src.take("best_round", 1)
        _, (count,) = src.take("trees", 1)
        model = GbmModel(float(base), float(lr), features, best_round=int(best), meta=meta)
        for i in range(int(count)):
            lineno, (idx, n_nodes) = src.take("tree", 2)
            if int(idx) != i:
                raise ModelFormatError(f"line {lineno}: tree index {idx}, expected {i}")
            tree = RegressionTree()
            for _ in range(int(n_nodes)):
                kind = src.peek()
                if kind == "leaf":
                    lineno, (w,) = src.take("leaf", 1)
                    tree.nodes.append(Node(weight=float(w)))
                else:
                    lineno, (f, thr, left, right) = src.take("split", 4)
                    tree.nodes.append(Node(int(f), float(thr), int(left), int(right)))
            _validate_tree(tree, len(features))
            model.trees.append(tree)
        src.take("end", 0)
    except ValueError as exc:
        raise ModelFormatError(f"line {src.pos}: {exc}") from None
    if not 0 <= model.best_round <= len(model.trees):
        raise ModelFormatError(f"best_round {model.best_round} outside 0..{len(model.trees)}")
    return model


def _validate_tree(tree, n_features):
    n = len(tree.nodes)
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            if not np.isfinite(node.weight):
                raise ModelFormatError(f"non-finite leaf weight in node {i}")
            continue
        if not (i < node.left < n and i < node.right < n) or not 0 <= node.feature < n_features:
            raise ModelFormatError(f"node {i} has invalid children or feature index")


def gbm_deserialize(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    return gbm_loads(text)
