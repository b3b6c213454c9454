"""Stratified cross-validation and wrapper-style forward feature selection."""
from __future__ import annotations

import logging
from collections import Counter

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .tree import DecisionTree

log = logging.getLogger(__name__)


def stratified_kfold(y, n_folds: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic stratified split into ``(train, holdout)`` index pairs.

    Each class is shuffled and dealt round-robin, continuing from the fold the
    previous class stopped at, so per-class and total fold sizes differ by at
    most one. If a class has fewer than ``n_folds`` members the fold count is
    lowered to that size (minimum 2).
    """
    y = np.asarray(y)
    counts = Counter(y.tolist())
    smallest = min(counts.values())
    if smallest < n_folds:
        short = {c: n for c, n in counts.items() if n < n_folds}
        if smallest < 2:
            raise ValueError(f"classes too small to stratify: {short}")
        log.warning("classes smaller than %d folds: %s; using %d folds", n_folds, short, smallest)
        n_folds = smallest
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=int)
    start = 0
    for cls in sorted(counts):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (start + np.arange(len(idx))) % n_folds
        start = (start + len(idx)) % n_folds
    everything = np.arange(len(y))
    return [(everything[fold_of != k], everything[fold_of == k]) for k in range(n_folds)]


def _majority(y):
    return sorted(Counter(y.tolist()).items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def cross_val_labels(estimator, X, y, folds) -> np.ndarray:
    """Holdout prediction for every row, each from the model not trained on it.

    With no columns the training-fold majority class is predicted, which is
    the baseline forward selection starts from.
    """
    y = np.asarray(y)
    # fit on integer codes; sorting the labels once is cheaper than per fold
    classes, codes = np.unique(y, return_inverse=True)
    codes = codes.ravel()
    out = np.empty(len(y), dtype=np.int64)
    for train, test in folds:
        if X.shape[1] == 0:
            out[test] = _majority(codes[train])
            continue
        model = clone(estimator).fit(X[train], codes[train])
        out[test] = model.predict(X[test])
    return classes[out]


def cv_error_count(estimator, X, y, folds) -> int:
    """Number of holdout rows misclassified across all folds."""
    return int(np.sum(cross_val_labels(estimator, X, y, folds) != np.asarray(y)))


def forward_selection(X, y, estimator=None, n_folds: int = 20, seed: int = 0):
    """Greedy forward selection driven by cross-validated classification error.

    Returns ``(selected feature indices in order of addition, residual error
    as a fraction)``. A feature is added only if it strictly lowers the error;
    ties go to the lowest feature index. Candidate subsets are always fitted
    with their columns in ascending index order, so the error of a subset
    does not depend on the order in which its features were added.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    estimator = DecisionTree() if estimator is None else estimator
    folds = stratified_kfold(y, n_folds, seed)
    selected: list[int] = []
    current = cv_error_count(estimator, X[:, []], y, folds)
    while len(selected) < X.shape[1]:
        best_j, best_err = -1, current
        for j in range(X.shape[1]):
            if j in selected:
                continue
            err = cv_error_count(estimator, X[:, sorted(selected + [j])], y, folds)
            if err < best_err:
                best_j, best_err = j, err
        if best_j < 0:
            break
        selected.append(best_j)
        current = best_err
    return selected, current / len(y)


def feature_weights(selections, n_features: int) -> np.ndarray:
    """Fraction of selection runs (one per monitored node) that picked each feature."""
    selections = list(selections)
    w = np.zeros(n_features)
    if not selections:
        return w
    for sel in selections:
        w[list(set(sel))] += 1
    return w / len(selections)


class ForwardSelector(SelectorMixin, BaseEstimator):
    """Wrapper feature selector usable as a pipeline step."""

    def __init__(self, estimator=None, n_folds: int = 20, random_state: int = 0):
        self.estimator = estimator
        self.n_folds = n_folds
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.selected_, self.residual_error_ = forward_selection(
            X, y, self.estimator, self.n_folds, self.random_state)
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selected_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_] = True
        return mask
