"""Gradient-boosted regression trees, from scratch, plus an OLS linear baseline.

Both objectives run through one second-order machinery: per-row gradients g and
hessians h, exact greedy split search over sorted unique feature values, gain
G_L^2/H_L + G_R^2/H_R - G^2/H, leaf value -G/H. For squared error h = 1, which
makes the gain the exact squared-error reduction and the leaf the mean residual.
Ties break toward the lowest feature index, then the lowest threshold, so a
given (data, config, seed) always yields a byte-identical model file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelFormatError, ModelVersionError, TrainingError

MODEL_FORMAT_VERSION = 1

_EPS = 1e-16
_MIN_GAIN = 1e-12
_P_CLIP = 1e-7  # keeps logistic hessians strictly positive


@dataclass
class TreeNode:
    """Internal node (feature_name set, both children present) or leaf (value, cover)."""

    feature_name: str | None = None
    threshold: float = 0.0
    missing_goes: str = "left"
    left: TreeNode | None = None
    right: TreeNode | None = None
    value: float = 0.0
    cover: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class TrainConfig:
    n_trees: int = 500
    learning_rate: float = 0.05
    max_depth: int = 6
    subsample: float = 0.8
    min_child_cover: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_trees < 1:
            raise TrainingError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 0 < self.learning_rate <= 1:
            raise TrainingError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 < self.subsample <= 1:
            raise TrainingError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.max_depth < 1:
            raise TrainingError(f"max_depth must be >= 1, got {self.max_depth}")


@dataclass
class GbtModel:
    objective: str  # "squared_error" | "logistic"
    base_score: float
    trees: list[TreeNode] = field(default_factory=list)
    learning_rate: float = 0.05
    feature_names: list[str] = field(default_factory=list)


@dataclass
class LinearModel:
    weights: dict[str, float]
    intercept: float


def _best_split(Xn: np.ndarray, g: np.ndarray, h: np.ndarray, min_child_cover: float):
    """Exact greedy search over all features of one node.

    Candidate thresholds sit at midpoints between adjacent distinct sorted
    values. Returns (gain, feature_index, threshold, left_mask) or None.
    """
    m, d = Xn.shape
    if m < 2:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(Xn, order, axis=0)
    gl = np.cumsum(g[order], axis=0)[:-1]
    hl = np.cumsum(h[order], axis=0)[:-1]
    g_total = float(g.sum())
    h_total = float(h.sum())
    boundary = sorted_vals[:-1] < sorted_vals[1:]
    hr = h_total - hl
    valid = boundary & (hl >= min_child_cover) & (hr >= min_child_cover)
    if not valid.any():
        return None
    gr = g_total - gl
    gains = gl * gl / (hl + _EPS) + gr * gr / (hr + _EPS) - g_total * g_total / (h_total + _EPS)
    gains = np.where(valid, gains, -np.inf)
    # first argmax per column = lowest threshold; first across columns = lowest feature
    per_feature_pos = np.argmax(gains, axis=0)
    per_feature_gain = gains[per_feature_pos, np.arange(d)]
    j = int(np.argmax(per_feature_gain))
    gain = float(per_feature_gain[j])
    if gain <= _MIN_GAIN:
        return None
    p = int(per_feature_pos[j])
    threshold = (sorted_vals[p, j] + sorted_vals[p + 1, j]) / 2.0
    left_mask = Xn[:, j] < threshold
    if not left_mask.any() or left_mask.all():
        return None  # midpoint collapsed onto a value through rounding
    return gain, j, float(threshold), left_mask


def _grow(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    idx: np.ndarray,
    depth: int,
    cfg: TrainConfig,
    names: list[str],
) -> TreeNode:
    g_sum = float(g[idx].sum())
    h_sum = float(h[idx].sum())
    leaf = TreeNode(value=cfg.learning_rate * (-g_sum / (h_sum + _EPS)), cover=h_sum)
    if depth >= cfg.max_depth:
        return leaf
    found = _best_split(X[idx], g[idx], h[idx], cfg.min_child_cover)
    if found is None:
        return leaf
    _, j, threshold, left_mask = found
    return TreeNode(
        feature_name=names[j],
        threshold=threshold,
        missing_goes="left",
        left=_grow(X, g, h, idx[left_mask], depth + 1, cfg, names),
        right=_grow(X, g, h, idx[~left_mask], depth + 1, cfg, names),
        cover=h_sum,
    )


def _tree_outputs(root: TreeNode, X: np.ndarray, col_of: dict[str, int]) -> np.ndarray:
    out = np.zeros(X.shape[0])

    def descend(node: TreeNode, rows: np.ndarray) -> None:
        if node.is_leaf:
            out[rows] = node.value
            return
        values = X[rows, col_of[node.feature_name]]
        goes_left = values < node.threshold
        missing = np.isnan(values)
        if missing.any():
            goes_left = np.where(missing, node.missing_goes == "left", goes_left)
        descend(node.left, rows[goes_left])
        descend(node.right, rows[~goes_left])

    descend(root, np.arange(X.shape[0]))
    return out


def _subsample_indices(rng: np.random.Generator, n: int, fraction: float) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n)
    m = max(1, int(round(fraction * n)))
    return np.sort(rng.permutation(n)[:m])


def _check_matrix(X: np.ndarray, y: np.ndarray, names: list[str]) -> None:
    if X.size == 0 or X.shape[0] == 0:
        raise TrainingError("empty feature matrix")
    if X.shape[0] != y.shape[0]:
        raise TrainingError(f"matrix has {X.shape[0]} rows but {y.shape[0]} targets")
    if X.shape[1] != len(names):
        raise TrainingError(f"matrix has {X.shape[1]} columns but {len(names)} feature names")
    if not np.isfinite(y).all():
        raise TrainingError("targets contain non-finite values")


def train_regressor(X, y, cfg: TrainConfig, feature_names) -> GbtModel:
    """Boosted squared-error regression; base score is the target mean."""
    cfg.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = list(feature_names)
    _check_matrix(X, y, names)

    base = float(y.mean())
    pred = np.full(len(y), base)
    col_of = {name: j for j, name in enumerate(names)}
    rng = np.random.default_rng(cfg.seed)
    trees: list[TreeNode] = []
    for _ in range(cfg.n_trees):
        idx = _subsample_indices(rng, len(y), cfg.subsample)
        g = pred[idx] - y[idx]
        h = np.ones(len(idx))
        root = _grow(X[idx], g, h, np.arange(len(idx)), 0, cfg, names)
        trees.append(root)
        pred += _tree_outputs(root, X, col_of)
    return GbtModel("squared_error", base, trees, cfg.learning_rate, names)


def train_classifier(X, u, cfg: TrainConfig, feature_names, pos_weight: float | None = None) -> GbtModel:
    """Boosted logistic classification with instance weights on the positives.

    Trees fit Newton residuals: g = w (p - u), h = w p (1 - p); the base score
    is the log-odds of the weighted positive rate.
    """
    cfg.validate()
    X = np.asarray(X, dtype=float)
    u = np.asarray(u, dtype=float)
    names = list(feature_names)
    _check_matrix(X, u, names)
    if not ((u == 0) | (u == 1)).all():
        raise TrainingError("labels must be binary")
    n_pos = float(u.sum())
    n_neg = float(len(u) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("labels contain a single class")
    if pos_weight is None:
        pos_weight = n_neg / n_pos
    if pos_weight <= 0:
        raise TrainingError(f"pos_weight must be positive, got {pos_weight}")

    w = np.where(u == 1, pos_weight, 1.0)
    p0 = float((w * u).sum() / w.sum())
    base = math.log(p0 / (1.0 - p0))
    margin = np.full(len(u), base)
    col_of = {name: j for j, name in enumerate(names)}
    rng = np.random.default_rng(cfg.seed)
    trees: list[TreeNode] = []
    for _ in range(cfg.n_trees):
        idx = _subsample_indices(rng, len(u), cfg.subsample)
        p = _sigmoid(margin[idx])
        p = np.clip(p, _P_CLIP, 1.0 - _P_CLIP)
        g = w[idx] * (p - u[idx])
        h = w[idx] * p * (1.0 - p)
        root = _grow(X[idx], g, h, np.arange(len(idx)), 0, cfg, names)
        trees.append(root)
        margin += _tree_outputs(root, X, col_of)
    return GbtModel("logistic", base, trees, cfg.learning_rate, names)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict_margin_matrix(model: GbtModel, X) -> np.ndarray:
    """Raw additive score for every row of a matrix aligned with feature_names."""
    X = np.asarray(X, dtype=float)
    col_of = {name: j for j, name in enumerate(model.feature_names)}
    out = np.full(X.shape[0], model.base_score)
    for root in model.trees:
        out += _tree_outputs(root, X, col_of)
    return out


def predict_matrix(model: GbtModel, X) -> np.ndarray:
    margin = predict_margin_matrix(model, X)
    if model.objective == "logistic":
        # float rounding can push the sigmoid to exactly 0 or 1; keep it open
        return np.clip(_sigmoid(margin), 1e-15, 1.0 - 1e-15)
    return margin


def _row_vector(model: GbtModel, row) -> np.ndarray:
    getter = row.feature if hasattr(row, "feature") else lambda n: row.get(n, math.nan)
    return np.array([getter(name) for name in model.feature_names], dtype=float)


def predict(model: GbtModel, row) -> float:
    """Score one FeatureRow (or name->value mapping); missing features route
    per each node's missing_goes direction."""
    return float(predict_matrix(model, _row_vector(model, row)[None, :])[0])


def predict_margin(model: GbtModel, row) -> float:
    return float(predict_margin_matrix(model, _row_vector(model, row)[None, :])[0])


def fit_linear(X, y, feature_names) -> LinearModel:
    """Least squares via normal equations with a ridge jitter for conditioning."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = list(feature_names)
    _check_matrix(X, y, names)
    if X.shape[0] < X.shape[1]:
        raise TrainingError(f"need at least {X.shape[1]} rows, got {X.shape[0]}")
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    gram = A.T @ A + 1e-8 * np.eye(A.shape[1])
    try:
        beta = np.linalg.solve(gram, A.T @ y)
    except np.linalg.LinAlgError as exc:
        raise TrainingError(f"normal equations are singular: {exc}")
    return LinearModel(dict(zip(names, beta[:-1].tolist())), float(beta[-1]))


def predict_linear_matrix(model: LinearModel, X) -> np.ndarray:
    w = np.array(list(model.weights.values()), dtype=float)
    return np.asarray(X, dtype=float) @ w + model.intercept


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value, "cover": node.cover}
    return {
        "feature_name": node.feature_name,
        "threshold": node.threshold,
        "missing_goes": node.missing_goes,
        "cover": node.cover,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj: dict) -> TreeNode:
    if "feature_name" in obj:
        return TreeNode(
            feature_name=obj["feature_name"],
            threshold=float(obj["threshold"]),
            missing_goes=obj.get("missing_goes", "left"),
            left=_node_from_dict(obj["left"]),
            right=_node_from_dict(obj["right"]),
            cover=float(obj.get("cover", 0.0)),
        )
    return TreeNode(value=float(obj["value"]), cover=float(obj.get("cover", 0.0)))


def save_model(model: GbtModel, path) -> None:
    """Versioned self-describing JSON; floats keep full round-trip precision."""
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "objective": model.objective,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "feature_names": model.feature_names,
        "trees": [_node_to_dict(t) for t in model.trees],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path) -> GbtModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"unreadable model file {path}: {exc}")
    if not isinstance(payload, dict) or "version" not in payload:
        raise ModelFormatError(f"model file {path} has no version tag")
    if payload["version"] != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"model file {path} has version {payload['version']!r}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        return GbtModel(
            objective=payload["objective"],
            base_score=float(payload["base_score"]),
            trees=[_node_from_dict(t) for t in payload["trees"]],
            learning_rate=float(payload["learning_rate"]),
            feature_names=list(payload["feature_names"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}")
