"""Isolation forest for unsupervised anomaly scoring on tabular features."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NonNumericInput, ValidationError

EULER_GAMMA = 0.5772156649


def average_path_length(n: int) -> float:
    """Expected unsuccessful-search depth c(n) of a BST over n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


@dataclass
class TreeNode:
    """Split node or leaf; leaves carry the training-sample count."""

    size: int
    feature: int | None = None
    value: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"size": self.size}
        return {
            "size": self.size,
            "feature": self.feature,
            "value": self.value,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(size=int(d["size"]))
        return cls(
            size=int(d["size"]),
            feature=int(d["feature"]),
            value=float(d["value"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )

    def height(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.height(), self.right.height())


def _grow(X: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> TreeNode:
    n = X.shape[0]
    if n <= 1 or depth >= limit:
        return TreeNode(size=n)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    splittable = np.nonzero(hi > lo)[0]
    if splittable.size == 0:
        return TreeNode(size=n)
    feature = int(rng.choice(splittable))
    value = float(rng.uniform(lo[feature], hi[feature]))
    mask = X[:, feature] < value
    if not mask.any() or mask.all():
        # Degenerate draw at the boundary; isolate the extreme point instead.
        mask = X[:, feature] <= lo[feature]
    return TreeNode(
        size=n,
        feature=feature,
        value=value,
        left=_grow(X[mask], depth + 1, limit, rng),
        right=_grow(X[~mask], depth + 1, limit, rng),
    )


class IsolationForest:
    """Ensemble of random isolation trees.

    Scores follow s(x) = 2 ** (-E[h(x)] / c(psi)): points that isolate in few
    splits score near 1, points deep in the data mass score below 0.5.

    Parameters
    ----------
    n_trees : number of trees in the ensemble.
    subsample : per-tree subsample size psi (capped at the training size).
    seed : RNG seed; a fixed seed makes fitting fully deterministic.
    """

    def __init__(self, n_trees: int = 100, subsample: int = 256, seed: int | None = None):
        if n_trees < 1:
            raise ValidationError(f"n_trees must be >= 1, got {n_trees}")
        if subsample < 2:
            raise ValidationError(f"subsample must be >= 2, got {subsample}")
        self.n_trees = n_trees
        self.subsample = subsample
        self.seed = seed
        self.trees_: list[TreeNode] | None = None
        self.psi_: int | None = None
        self.n_features_: int | None = None

    def get_params(self) -> dict:
        return {"n_trees": self.n_trees, "subsample": self.subsample, "seed": self.seed}

    def set_params(self, **params) -> "IsolationForest":
        for k, v in params.items():
            if k not in ("n_trees", "subsample", "seed"):
                raise ValidationError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, X: np.ndarray) -> "IsolationForest":
        X = np.asarray(X)
        if X.ndim != 2:
            raise ValidationError(f"expected a 2-D array, got shape {X.shape}")
        if not np.issubdtype(X.dtype, np.number):
            raise NonNumericInput("isolation forest requires numeric input")
        X = X.astype(float)
        if not np.isfinite(X).all():
            raise NonNumericInput("isolation forest requires finite numeric input")
        n = X.shape[0]
        if n < 2:
            raise InsufficientData(f"need at least 2 rows, got {n}")
        psi = min(self.subsample, n)
        limit = math.ceil(math.log2(psi))
        rng = np.random.default_rng(self.seed)
        trees = []
        for _ in range(self.n_trees):
            idx = rng.choice(n, size=psi, replace=False)
            trees.append(_grow(X[idx], 0, limit, rng))
        self.trees_ = trees
        self.psi_ = psi
        self.n_features_ = X.shape[1]
        return self

    def _check_fitted(self) -> None:
        if self.trees_ is None:
            raise ValidationError("forest is not fitted")

    @staticmethod
    def _tree_depths(tree: TreeNode, X: np.ndarray) -> np.ndarray:
        """Adjusted path length of every row in one tree (batch traversal)."""
        depths = np.zeros(X.shape[0])
        stack = [(tree, np.arange(X.shape[0]), 0)]
        while stack:
            node, idx, d = stack.pop()
            if idx.size == 0:
                continue
            if node.is_leaf:
                depths[idx] = d + average_path_length(node.size)
            else:
                mask = X[idx, node.feature] < node.value
                stack.append((node.left, idx[mask], d + 1))
                stack.append((node.right, idx[~mask], d + 1))
        return depths

    def score_samples(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_:
            raise ValidationError(f"rows have {X.shape[1]} features, model expects {self.n_features_}")
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += self._tree_depths(tree, X)
        mean_depth = total / len(self.trees_)
        return np.asarray(2.0 ** (-mean_depth / average_path_length(self.psi_)))

    def score_row(self, row: np.ndarray) -> float:
        return float(self.score_samples(np.asarray(row, dtype=float).reshape(1, -1))[0])

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "n_trees": self.n_trees,
            "subsample": self.subsample,
            "seed": self.seed,
            "psi": self.psi_,
            "n_features": self.n_features_,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationForest":
        model = cls(n_trees=int(d["n_trees"]), subsample=int(d["subsample"]), seed=d.get("seed"))
        model.trees_ = [TreeNode.from_dict(t) for t in d["trees"]]
        model.psi_ = int(d["psi"])
        model.n_features_ = int(d["n_features"])
        return model
