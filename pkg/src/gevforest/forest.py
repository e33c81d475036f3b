"""Random forest over block maxima producing similarity weights.

Trees split either on quantile-class heterogeneity (responses of each node
are relabeled by the inter-quantile segment they fall into, then splits
maximise the multi-class Gini decrease) or on plain variance reduction.
With honesty on, each tree's structure comes from one half of its subsample
and its leaves are repopulated with the other half.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import BlockMaxSample

__all__ = [
    "FOREST_FORMAT",
    "ForestParams",
    "Tree",
    "ForestModel",
    "fit_forest",
    "similarity_weights",
    "similarity_weights_matrix",
    "weighted_empirical_quantile",
    "forest_to_dict",
    "forest_from_dict",
    "save_forest",
    "load_forest",
]

FOREST_FORMAT = "gevforest-forest-v1"

_SPLIT_MODES = ("quantile", "regression")

# Split gains at or below this (relative) floor do not count as improvements,
# so float noise on constant nodes cannot force a split.
_GAIN_FLOOR = 1e-10


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters of the similarity forest."""

    num_trees: int = 2000
    min_node_size: int = 5
    mtry: int | None = None  # default min(p, ceil(sqrt(p)) + 20), resolved at fit time
    subsample_fraction: float = 0.5
    honesty: bool = True
    split_quantile_levels: tuple[float, ...] = (0.1, 0.5, 0.9)
    split_mode: str = "quantile"
    seed: int = 0

    def __post_init__(self):
        if int(self.num_trees) < 1:
            raise ValueError("num_trees must be at least 1")
        if int(self.min_node_size) < 1:
            raise ValueError("min_node_size must be at least 1")
        if self.mtry is not None and int(self.mtry) < 1:
            raise ValueError("mtry must be positive")
        if not 0.0 < float(self.subsample_fraction) <= 1.0:
            raise ValueError("subsample_fraction must lie in (0, 1]")
        levels = tuple(float(q) for q in self.split_quantile_levels)
        if not levels or any(not 0.0 < q < 1.0 for q in levels):
            raise ValueError("split_quantile_levels must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("split_quantile_levels must be strictly increasing")
        if self.split_mode not in _SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {_SPLIT_MODES}")
        object.__setattr__(self, "num_trees", int(self.num_trees))
        object.__setattr__(self, "min_node_size", int(self.min_node_size))
        object.__setattr__(self, "mtry", None if self.mtry is None else int(self.mtry))
        object.__setattr__(self, "subsample_fraction", float(self.subsample_fraction))
        object.__setattr__(self, "honesty", bool(self.honesty))
        object.__setattr__(self, "split_quantile_levels", levels)
        object.__setattr__(self, "seed", int(self.seed))


@dataclass
class Tree:
    """Flattened binary tree.  ``feature`` is -1 on leaves; ``members`` holds
    the training rows populating each leaf (empty on internal nodes)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    members: tuple[np.ndarray, ...]

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass
class ForestModel:
    """Fitted ensemble; immutable once built."""

    trees: tuple[Tree, ...]
    params: ForestParams
    n_samples: int
    n_features: int


def _resolve_mtry(params: ForestParams, p: int) -> int:
    if params.mtry is None:
        return min(p, math.ceil(math.sqrt(p)) + 20)
    if params.mtry > p:
        raise ValueError(f"mtry ({params.mtry}) exceeds feature count ({p})")
    return params.mtry


class _TreeGrower:
    def __init__(self, X, y, min_node_size, mtry, levels, split_mode, rng):
        self.X = X
        self.y = y
        self.p = X.shape[1]
        self.min_node_size = min_node_size
        self.mtry = mtry
        self.levels = np.asarray(levels)
        self.split_mode = split_mode
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []

    def grow(self, rows: np.ndarray) -> int:
        nid = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(math.nan)
        self.left.append(-1)
        self.right.append(-1)
        split = self._best_split(rows)
        if split is None:
            return nid
        feat, thr = split
        go_left = self.X[rows, feat] <= thr
        self.feature[nid] = feat
        self.threshold[nid] = thr
        self.left[nid] = self.grow(rows[go_left])
        self.right[nid] = self.grow(rows[~go_left])
        return nid

    def _best_split(self, rows: np.ndarray):
        n = rows.size
        mns = self.min_node_size
        if n < 2 * mns:
            return None
        y = self.y[rows]
        if self.split_mode == "quantile":
            qs = np.quantile(y, self.levels)
            labels = np.searchsorted(qs, y, side="right")
            if labels.min() == labels.max():
                return None  # single class: no impurity left to reduce
            n_classes = self.levels.size + 1
            onehot = np.zeros((n, n_classes))
            onehot[np.arange(n), labels] = 1.0
            totals = onehot.sum(axis=0)
            baseline = float(np.dot(totals, totals)) / n
            scale = max(1.0, baseline)
        else:
            y = y - y.mean()  # centering keeps constant nodes at exactly zero gain
            onehot = None
            baseline = float(y.sum()) ** 2 / n
            scale = max(1.0, float(np.dot(y, y)) / n)

        candidates = self.rng.choice(self.p, size=self.mtry, replace=False)
        candidates.sort()  # score ties break toward the lowest feature index
        best_gain = _GAIN_FLOOR * scale
        best = None
        ks = np.arange(mns, n - mns + 1)
        for feat in candidates:
            xcol = self.X[rows, feat]
            order = np.argsort(xcol, kind="stable")
            xs = xcol[order]
            valid = xs[ks - 1] < xs[ks]
            if not valid.any():
                continue
            if onehot is not None:
                cum = np.cumsum(onehot[order], axis=0)
                left_counts = cum[ks - 1]
                right_counts = cum[-1] - left_counts
                score = (
                    np.einsum("ij,ij->i", left_counts, left_counts) / ks
                    + np.einsum("ij,ij->i", right_counts, right_counts) / (n - ks)
                )
            else:
                cum = np.cumsum(y[order])
                left_sum = cum[ks - 1]
                right_sum = cum[-1] - left_sum
                score = left_sum**2 / ks + right_sum**2 / (n - ks)
            score = np.where(valid, score, -np.inf)
            pos = int(np.argmax(score))  # first max: lowest threshold wins ties
            gain = (float(score[pos]) - baseline) / n
            if gain > best_gain:
                best_gain = gain
                k = ks[pos]
                best = (int(feat), 0.5 * (float(xs[k - 1]) + float(xs[k])))
        return best


def _populate(grower: _TreeGrower, X: np.ndarray, honest_rows: np.ndarray) -> Tree:
    """Route leaf-population rows through the grown structure.  Nodes whose
    subtree would leave a side empty collapse into leaves, so every reachable
    leaf ends up non-empty."""
    feature = np.array(grower.feature, dtype=np.int32)
    threshold = np.array(grower.threshold, dtype=float)
    left = np.array(grower.left, dtype=np.int32)
    right = np.array(grower.right, dtype=np.int32)
    members: dict[int, np.ndarray] = {}

    stack = [(0, honest_rows)]
    while stack:
        nid, rows = stack.pop()
        if feature[nid] < 0:
            members[nid] = np.sort(rows)
            continue
        mask = X[rows, feature[nid]] <= threshold[nid]
        rows_left = rows[mask]
        rows_right = rows[~mask]
        if rows_left.size == 0 or rows_right.size == 0:
            feature[nid] = -1
            threshold[nid] = math.nan
            left[nid] = -1
            right[nid] = -1
            members[nid] = np.sort(rows)
            continue
        stack.append((left[nid], rows_left))
        stack.append((right[nid], rows_right))

    return _compact(feature, threshold, left, right, members)


def _compact(feature, threshold, left, right, members) -> Tree:
    """Drop nodes made unreachable by collapses and renumber the rest."""
    keep: list[int] = []
    stack = [0]
    while stack:
        nid = stack.pop()
        keep.append(nid)
        if feature[nid] >= 0:
            stack.append(int(right[nid]))
            stack.append(int(left[nid]))
    keep.sort()
    remap = {old: new for new, old in enumerate(keep)}
    new_members = tuple(
        members.get(old, np.empty(0, dtype=np.int64)).astype(np.int64) for old in keep
    )
    new_left = np.array(
        [remap[int(left[o])] if left[o] >= 0 else -1 for o in keep], dtype=np.int32
    )
    new_right = np.array(
        [remap[int(right[o])] if right[o] >= 0 else -1 for o in keep], dtype=np.int32
    )
    return Tree(
        feature=feature[keep].astype(np.int32),
        threshold=threshold[keep].astype(float),
        left=new_left,
        right=new_right,
        members=new_members,
    )


def _fit_tree(X, y, params: ForestParams, mtry: int, tree_index: int) -> Tree:
    # Stream derived from (seed, tree index): tree b is identical no matter
    # what order or schedule trees are built in.
    rng = np.random.default_rng([params.seed, tree_index])
    n = X.shape[0]
    s = int(params.subsample_fraction * n)
    sub = rng.choice(n, size=s, replace=False)
    if params.honesty:
        half = s // 2
        split_rows, honest_rows = sub[:half], sub[half:]
    else:
        split_rows = honest_rows = sub
    grower = _TreeGrower(
        X, y, params.min_node_size, mtry, params.split_quantile_levels,
        params.split_mode, rng,
    )
    grower.grow(split_rows)
    return _populate(grower, X, honest_rows)


def fit_forest(bm: BlockMaxSample, params: ForestParams) -> ForestModel:
    """Grow ``num_trees`` honest trees on independent subsamples of the
    block-max sample."""
    X = bm.features
    y = bm.maxima
    n, p = X.shape
    mtry = _resolve_mtry(params, p)
    if n < 2 * params.min_node_size:
        raise ValueError(
            f"need at least {2 * params.min_node_size} blocks, got {n}"
        )
    s = int(params.subsample_fraction * n)
    if params.min_node_size >= max(s, 1):
        raise ValueError("min_node_size must be smaller than the subsample size")
    trees = tuple(_fit_tree(X, y, params, mtry, b) for b in range(params.num_trees))
    return ForestModel(
        trees=trees,
        params=replace(params, mtry=mtry),
        n_samples=n,
        n_features=p,
    )


def _leaf_of(tree: Tree, x: np.ndarray) -> int:
    nid = 0
    feature = tree.feature
    while feature[nid] >= 0:
        nid = tree.left[nid] if x[feature[nid]] <= tree.threshold[nid] else tree.right[nid]
    return int(nid)


def _leaves_of(tree: Tree, X: np.ndarray) -> np.ndarray:
    nid = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        feats = tree.feature[nid]
        active = np.nonzero(feats >= 0)[0]
        if active.size == 0:
            return nid
        cur = nid[active]
        go_left = X[active, tree.feature[cur]] <= tree.threshold[cur]
        nid[active] = np.where(go_left, tree.left[cur], tree.right[cur])


def _check_query(model: ForestModel, x: np.ndarray):
    if x.shape[-1] != model.n_features:
        raise ValueError(
            f"query has {x.shape[-1]} coordinates, model expects {model.n_features}"
        )
    if not np.isfinite(x).all():
        raise ValueError("query contains non-finite values")


def similarity_weights(model: ForestModel, x) -> np.ndarray:
    """Forest co-membership weights of each training row with ``x``.

    Averages, over trees, the indicator of sharing the query's leaf divided
    by the leaf population; the result is non-negative and sums to one.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("query must be a single covariate vector")
    _check_query(model, x)
    w = np.zeros(model.n_samples)
    for tree in model.trees:
        mem = tree.members[_leaf_of(tree, x)]
        w[mem] += 1.0 / mem.size
    return w / len(model.trees)


def similarity_weights_matrix(model: ForestModel, X) -> np.ndarray:
    """Similarity weights for a whole query matrix, one row per query."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("queries must form a 2-d matrix")
    _check_query(model, X)
    W = np.zeros((X.shape[0], model.n_samples))
    for tree in model.trees:
        leaves = _leaves_of(tree, X)
        for leaf in np.unique(leaves):
            mem = tree.members[leaf]
            rows = np.nonzero(leaves == leaf)[0]
            W[np.ix_(rows, mem)] += 1.0 / mem.size
    W /= len(model.trees)
    return W


def weighted_empirical_quantile(weights, responses, tau: float) -> float:
    """Generalized inverse of the weighted empirical distribution: the
    smallest response where the cumulative weight reaches ``tau``."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    w = np.asarray(weights, dtype=float)
    r = np.asarray(responses, dtype=float)
    if w.shape != r.shape or w.ndim != 1:
        raise ValueError("weights and responses must be 1-d and equally long")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = float(w.sum())
    if total == 0.0:
        raise ValueError("all weights are zero")
    if abs(total - 1.0) > 1e-9:
        raise ValueError("weights must sum to one")
    order = np.argsort(r, kind="stable")
    cum = np.cumsum(w[order])
    idx = int(np.searchsorted(cum, tau, side="left"))
    idx = min(idx, r.size - 1)  # cumulative sum may fall short of 1 by rounding
    return float(r[order[idx]])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": [None if math.isnan(t) else t for t in tree.threshold],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "members": [m.tolist() for m in tree.members],
    }


def _tree_from_dict(doc: dict) -> Tree:
    return Tree(
        feature=np.array(doc["feature"], dtype=np.int32),
        threshold=np.array(
            [math.nan if t is None else float(t) for t in doc["threshold"]]
        ),
        left=np.array(doc["left"], dtype=np.int32),
        right=np.array(doc["right"], dtype=np.int32),
        members=tuple(np.array(m, dtype=np.int64) for m in doc["members"]),
    )


def forest_to_dict(model: ForestModel) -> dict:
    p = model.params
    return {
        "format": FOREST_FORMAT,
        "params": {
            "num_trees": p.num_trees,
            "min_node_size": p.min_node_size,
            "mtry": p.mtry,
            "subsample_fraction": p.subsample_fraction,
            "honesty": p.honesty,
            "split_quantile_levels": list(p.split_quantile_levels),
            "split_mode": p.split_mode,
            "seed": p.seed,
        },
        "n_samples": model.n_samples,
        "n_features": model.n_features,
        "trees": [_tree_to_dict(t) for t in model.trees],
    }


def forest_from_dict(doc: dict) -> ForestModel:
    tag = doc.get("format")
    if tag != FOREST_FORMAT:
        raise ValueError(f"unknown forest format tag {tag!r}")
    params = ForestParams(
        num_trees=doc["params"]["num_trees"],
        min_node_size=doc["params"]["min_node_size"],
        mtry=doc["params"]["mtry"],
        subsample_fraction=doc["params"]["subsample_fraction"],
        honesty=doc["params"]["honesty"],
        split_quantile_levels=tuple(doc["params"]["split_quantile_levels"]),
        split_mode=doc["params"]["split_mode"],
        seed=doc["params"]["seed"],
    )
    return ForestModel(
        trees=tuple(_tree_from_dict(t) for t in doc["trees"]),
        params=params,
        n_samples=int(doc["n_samples"]),
        n_features=int(doc["n_features"]),
    )


def save_forest(model: ForestModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(forest_to_dict(model), fh)


def load_forest(path) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        return forest_from_dict(json.load(fh))
