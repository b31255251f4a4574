"""Kernel SVM (one-vs-rest, SMO dual) and random forest behind one train/predict contract."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels

KINDS = ("svm_linear", "svm_poly", "random_forest")


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainableSpec:
    kind: str = "svm_linear"
    C: float = 1.0
    degree: int = 3
    coef0: float = 1.0
    tol: float = 1e-3
    max_iter: int = 100_000
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    max_features: Union[str, int] = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        if not self.C > 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.kind == "svm_poly" and self.degree < 2:
            raise ValueError(f"poly degree must be >= 2, got {self.degree}")
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                raise ValueError(f"max_features must be 'sqrt', 'all' or an int, got {self.max_features!r}")
        elif self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    @property
    def is_svm(self) -> bool:
        return self.kind.startswith("svm")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if self.max_features == "all":
            return n_features
        return min(int(self.max_features), n_features)


@dataclass(frozen=True, eq=False)
class SvmParams:
    support: np.ndarray      # (n_train, n_features) training rows
    dual_coef: np.ndarray    # (n_heads, n_train), alpha_i * y_i
    bias: np.ndarray         # (n_heads,)
    gaps: np.ndarray         # final KKT violation per head
    iterations: np.ndarray


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return kernels.tree_apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.counts[self.apply(X)], axis=1)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: TrainableSpec
    n_features: int
    n_classes: int
    training_accuracy: float
    svm: Optional[SvmParams] = None
    trees: tuple[Tree, ...] = field(default_factory=tuple)

    @property
    def kind(self) -> str:
        return self.spec.kind


def kernel_matrix(spec: TrainableSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    gram = A @ B.T
    if spec.kind == "svm_poly":
        return (gram + spec.coef0) ** spec.degree
    return gram


def _check_xy(features, labels):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain NaN or infinite values")
    if y.size and (np.any(y < 0) or not np.issubdtype(y.dtype, np.integer)):
        raise ValueError("labels must be non-negative integers")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain at least 2 classes")
    return X, y.astype(np.int64)


def train(spec: TrainableSpec, features, labels, n_classes: Optional[int] = None) -> TrainedModel:
    X, y = _check_xy(features, labels)
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if spec.is_svm:
        missing = sorted(set(range(n_classes)) - set(y.tolist()))
        if missing:
            raise ValueError(f"one-vs-rest SVM needs every class in training data; missing {missing}")
        params = _fit_svm(spec, X, y, n_classes)
        model = TrainedModel(spec, X.shape[1], n_classes, 0.0, svm=params)
    else:
        trees = _fit_forest(spec, X, y, n_classes)
        model = TrainedModel(spec, X.shape[1], n_classes, 0.0, trees=trees)
    acc = float(np.mean(predict(model, X) == y))
    return TrainedModel(model.spec, model.n_features, model.n_classes, acc, model.svm, model.trees)


def _fit_svm(spec: TrainableSpec, X: np.ndarray, y: np.ndarray, n_classes: int) -> SvmParams:
    K = kernel_matrix(spec, X, X)
    # Two classes need only one head; its negation serves the other class.
    targets = [1] if n_classes == 2 else list(range(n_classes))
    coefs, biases, gaps, iters = [], [], [], []
    for cls in targets:
        yy = np.where(y == cls, 1.0, -1.0)
        alpha, bias, it, gap = kernels.smo_solve(K, yy, spec.C, spec.tol, spec.max_iter)
        if gap >= spec.tol:
            warnings.warn(f"SMO stopped at iteration cap {spec.max_iter} with KKT gap {gap:.3g} "
                          f"(class {cls} head)", ConvergenceWarning, stacklevel=3)
        coefs.append(alpha * yy)
        biases.append(bias)
        gaps.append(gap)
        iters.append(it)
    return SvmParams(X.copy(), np.array(coefs), np.array(biases), np.array(gaps), np.array(iters))


def _fit_forest(spec: TrainableSpec, X: np.ndarray, y: np.ndarray, n_classes: int) -> tuple[Tree, ...]:
    n, d = X.shape
    mtry = spec.features_per_split(d)
    depth = -1 if spec.max_depth is None else spec.max_depth
    trees = []
    # Substreams per tree: the first k trees do not depend on n_trees.
    for seq in np.random.SeedSequence(spec.seed).spawn(spec.n_trees):
        rng = np.random.default_rng(seq)
        idx = rng.integers(0, n, n) if spec.bootstrap else np.arange(n)
        arrays = kernels.grow_tree(X, y, idx, n_classes, mtry, depth, spec.min_leaf, rng)
        trees.append(Tree(*arrays))
    return tuple(trees)


def decision_values(model: TrainedModel, features) -> np.ndarray:
    """Per-class scores, shape (rows, n_classes): SVM margins or RF vote counts."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if model.svm is not None:
        K = kernel_matrix(model.spec, X, model.svm.support)
        f = K @ model.svm.dual_coef.T + model.svm.bias
        if model.n_classes == 2:
            return np.column_stack([-f[:, 0], f[:, 0]])
        return f
    votes = np.zeros((X.shape[0], model.n_classes))
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        np.add.at(votes, (rows, tree.predict(X)), 1.0)
    return votes


def predict(model: TrainedModel, features):
    """Label(s) by argmax of :func:`decision_values`; ties go to the lowest label."""
    X = np.asarray(features, dtype=np.float64)
    labels = np.argmax(decision_values(model, X), axis=1)
    return int(labels[0]) if X.ndim == 1 else labels


def linear_weights(model: TrainedModel) -> np.ndarray:
    """Primal weight vectors (n_heads, n_features) of a linear SVM."""
    if model.kind != "svm_linear":
        raise ValueError("primal weights exist only for the linear kernel")
    return model.svm.dual_coef @ model.svm.support
