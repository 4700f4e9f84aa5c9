"""CART regression tree grown by exhaustive split search on MSE impurity.

At every node all features and all midpoints between consecutive distinct
values are scored by the size-weighted child impurity

    G = n_left / N * H(left) + n_right / N * H(right),   H = within-node MSE

and the minimiser is taken (ties: lower feature index, then lower threshold).
Rows with ``x[feature] <= threshold`` go left.  Growth stops at ``max_depth``,
at nodes with fewer than ``min_samples`` rows, at pure nodes, or when no
feature varies.

Because the stopping rules only look at the node itself, the tree grown to
depth ``d`` is exactly the depth-``d`` prefix of a deeper tree; CV over the
depth grid therefore grows one tree per fold and truncates it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import CVConfig, ForecastModel, as_matrix, check_xy, select_by_cv

DEFAULT_DEPTHS = tuple(range(3, 13))


@dataclass(frozen=True)
class TreeNode:
    """One node.  ``value`` is the node mean c(.) and is kept on internal nodes
    too, so a tree can be evaluated truncated at a smaller depth."""

    value: float
    n_samples: int
    impurity: float
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def best_split(X: np.ndarray, y: np.ndarray):
    """Return ``(G, feature, threshold)`` of the best split, or None."""
    m = len(y)
    if m < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    yc = y - y.mean()
    ys = yc[order]
    cs = np.cumsum(ys, axis=0)[:-1]
    cs2 = np.cumsum(ys * ys, axis=0)[:-1]
    tot, tot2 = cs[-1] + ys[-1], cs2[-1] + ys[-1] ** 2
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    sse_left = cs2 - cs * cs / nl
    sse_right = (tot2 - cs2) - (tot - cs) ** 2 / nr
    g = (np.maximum(sse_left, 0) + np.maximum(sse_right, 0)) / m
    valid = xs[:-1] < xs[1:]
    g = np.where(valid, g, np.inf).T  # feature-major: argmin prefers low feature, low threshold
    flat = int(np.argmin(g))
    if not np.isfinite(g.flat[flat]):
        return None
    feat, pos = divmod(flat, m - 1)
    lo, hi = xs[pos, feat], xs[pos + 1, feat]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return float(g.flat[flat]), int(feat), float(thr)


def grow(X, y, max_depth: int, min_samples: int = 5, depth: int = 0) -> TreeNode:
    value = float(y.mean())
    impurity = float(np.mean((y - value) ** 2))
    node = TreeNode(value, len(y), impurity, depth)
    if depth >= max_depth or len(y) < min_samples or np.ptp(y) == 0:
        return node
    split = best_split(X, y)
    if split is None:
        return node
    _, feat, thr = split
    go_left = X[:, feat] <= thr
    left = grow(X[go_left], y[go_left], max_depth, min_samples, depth + 1)
    right = grow(X[~go_left], y[~go_left], max_depth, min_samples, depth + 1)
    return TreeNode(value, len(y), impurity, depth, feat, thr, left, right)


def flatten(root: TreeNode) -> dict:
    """Array form (pre-order): feature (-1 for leaves), threshold, children, value, depth."""
    feature, threshold, left, right, value, depth, count = [], [], [], [], [], [], []

    def visit(node):
        idx = len(feature)
        feature.append(-1 if node.is_leaf else node.feature)
        threshold.append(np.nan if node.is_leaf else node.threshold)
        left.append(-1)
        right.append(-1)
        value.append(node.value)
        depth.append(node.depth)
        count.append(node.n_samples)
        if not node.is_leaf:
            left[idx] = visit(node.left)
            right[idx] = visit(node.right)
        return idx

    visit(root)
    return {"feature": np.array(feature, dtype=int), "threshold": np.array(threshold),
            "left": np.array(left, dtype=int), "right": np.array(right, dtype=int),
            "value": np.array(value), "depth": np.array(depth, dtype=int),
            "n_samples": np.array(count, dtype=int)}


def predict_arrays(arrays: dict, X, max_depth: int | None = None) -> np.ndarray:
    X = as_matrix(X)
    feature, threshold = arrays["feature"], arrays["threshold"]
    left, right, depth = arrays["left"], arrays["right"], arrays["depth"]
    node = np.zeros(len(X), dtype=int)
    limit = np.iinfo(int).max if max_depth is None else max_depth
    rows = np.arange(len(X))
    while True:
        f = feature[node]
        live = (f >= 0) & (depth[node] < limit)
        if not live.any():
            break
        r = rows[live]
        n = node[live]
        go_left = X[r, f[live]] <= threshold[n]
        node[r] = np.where(go_left, left[n], right[n])
    return arrays["value"][node]


def fit_tree(X, y, cv: CVConfig | None = None, *, max_depth=None, min_samples: int = 5,
             schema_hash=None) -> ForecastModel:
    """CART tree; ``max_depth`` fixed or chosen by time-blocked CV."""
    X, y = check_xy(X, y)
    if len(y) < 2:
        raise ValueError("need at least two rows to grow a tree")
    record = None
    if max_depth is None:
        cv = cv or CVConfig()
        grid = cv.grid or DEFAULT_DEPTHS

        def path_predict(Xtr, ytr, Xva, cands):
            arrays = flatten(grow(Xtr, ytr, max(cands), min_samples))
            return np.array([predict_arrays(arrays, Xva, c) for c in cands])

        record = select_by_cv(X, y, grid, cv, "max_depth", path_predict)
        max_depth = record.chosen
    arrays = flatten(grow(X, y, int(max_depth), min_samples))
    arrays["max_depth"] = int(max_depth)
    arrays["min_samples"] = int(min_samples)
    return ForecastModel("DecisionTree", arrays, X.shape[1], schema_hash, record)


def predict_tree(model: ForecastModel, X) -> np.ndarray:
    return predict_arrays(model.params, X)


def unflatten(arrays: dict, idx: int = 0) -> TreeNode:
    f = int(arrays["feature"][idx])
    base = dict(value=float(arrays["value"][idx]), n_samples=int(arrays["n_samples"][idx]),
                impurity=float("nan"), depth=int(arrays["depth"][idx]))
    if f < 0:
        return TreeNode(**base)
    return TreeNode(**base, feature=f, threshold=float(arrays["threshold"][idx]),
                    left=unflatten(arrays, int(arrays["left"][idx])),
                    right=unflatten(arrays, int(arrays["right"][idx])))
