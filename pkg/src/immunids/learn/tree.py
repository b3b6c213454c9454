"""Decision-tree induction with the information-gain impurity measure."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

_EPS = 1e-12


def entropy(labels) -> float:
    """Base-2 Shannon entropy of a label sequence."""
    counts = np.array(list(Counter(labels).values()), dtype=float)
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def information_gain(parent_labels, left_labels, right_labels) -> float:
    """Entropy reduction (bits) of splitting ``parent_labels`` into two children.

    >>> round(information_gain("AAAB", "AA", "AB"), 4)
    0.3113
    """
    parent, left, right = list(parent_labels), list(left_labels), list(right_labels)
    if not left or not right:
        raise ValueError("both children must be non-empty")
    if Counter(parent) != Counter(left) + Counter(right):
        raise ValueError("children do not partition the parent labels")
    n = len(parent)
    return entropy(parent) - (len(left) / n) * entropy(left) - (len(right) / n) * entropy(right)


def _xlogx(c):
    c = np.asarray(c, dtype=float)
    return c * np.log2(np.where(c > 0, c, 1.0))


@dataclass
class Node:
    histogram: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def label_index(self) -> int:
        # argmax returns the first maximum, so ties go to the lowest class index
        return int(np.argmax(self.histogram))


@dataclass
class Tree:
    """Node arrays indexed by node id (root 0); ``left`` is -1 at leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    histogram: np.ndarray
    classes: np.ndarray
    n_features: int
    depth: int = 0
    _root: Node | None = field(default=None, repr=False)

    @classmethod
    def from_root(cls, root: Node, classes, n_features: int, depth: int) -> "Tree":
        feature, threshold, left, right, hist = [], [], [], [], []

        def visit(node):
            idx = len(feature)
            feature.append(node.feature)
            threshold.append(node.threshold)
            left.append(-1)
            right.append(-1)
            hist.append(node.histogram)
            if not node.is_leaf:
                left[idx] = visit(node.left)
                right[idx] = visit(node.right)
            return idx

        visit(root)
        return cls(np.array(feature), np.array(threshold, dtype=float), np.array(left),
                   np.array(right), np.array(hist, dtype=float), np.asarray(classes),
                   n_features, depth, root)

    @property
    def root(self) -> Node:
        if self._root is None:
            def build(i):
                node = Node(self.histogram[i])
                if self.left[i] >= 0:
                    node.feature, node.threshold = int(self.feature[i]), float(self.threshold[i])
                    node.left, node.right = build(self.left[i]), build(self.right[i])
                return node
            self._root = build(0)
        return self._root

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf class index for every row of ``X``."""
        # argmax returns the first maximum, so ties go to the lowest class index
        label = np.argmax(self.histogram, axis=1)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            active = self.left[node] >= 0
            if not active.any():
                break
            a = rows[active]
            n = node[active]
            go_left = X[a, self.feature[n]] < self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
        return label[node]


@njit(cache=True)
def _induce(X, y, order, n_classes, min_leaf, max_depth, xlogx):
    """Depth-first induction over presorted rows; returns flat node arrays.

    Column ``j`` of ``order`` lists the rows sorted by feature ``j``. A node
    owns the same slice ``[start, end)`` of every column, and splitting it
    stably partitions each column's slice into left rows then right rows,
    so the data is sorted only once. Gains use n*H = n log n - sum c log c
    with the ``c log c`` terms looked up in ``xlogx``.
    """
    n, d = X.shape
    cap = 2 * n
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    hist = np.zeros((cap, n_classes), np.int64)
    stack = np.empty((cap, 4), np.int64)  # node, start, end, depth
    gains = np.empty((n, d))
    counts = np.zeros(n_classes, np.int64)
    buf = np.empty(n, np.int64)
    go_left = np.zeros(n, np.bool_)
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, 0, n, 0
    sp, n_nodes, reached = 1, 1, 0
    while sp > 0:
        sp -= 1
        node, s, e, depth = stack[sp, 0], stack[sp, 1], stack[sp, 2], stack[sp, 3]
        m = e - s
        for p in range(s, e):
            hist[node, y[order[p, 0]]] += 1
        reached = max(reached, depth)
        present = 0
        for c in range(n_classes):
            if hist[node, c] > 0:
                present += 1
        if present <= 1 or (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf:
            continue
        parent = xlogx[m]
        for c in range(n_classes):
            parent = parent - xlogx[hist[node, c]]
        top = -np.inf
        for j in range(d):
            counts[:] = 0
            for p in range(m - 1):
                r = order[s + p, j]
                counts[y[r]] += 1
                nl = p + 1
                g = -np.inf
                # cut after position p puts rows s..s+p on the left
                if X[order[s + p + 1, j], j] > X[r, j] and nl >= min_leaf and m - nl >= min_leaf:
                    children = xlogx[nl] + xlogx[m - nl]
                    for c in range(n_classes):
                        children = children - xlogx[counts[c]] - xlogx[hist[node, c] - counts[c]]
                    g = (parent - children) / m
                gains[p, j] = g
                if g > top:
                    top = g
        if top == -np.inf:
            continue
        # lowest feature, then lowest threshold, among gains within _EPS of the best
        bj, bp = -1, -1
        for j in range(d):
            for p in range(m - 1):
                if gains[p, j] > -np.inf and gains[p, j] >= top - _EPS:
                    bj, bp = j, p
                    break
            if bj >= 0:
                break
        thr = (X[order[s + bp, bj], bj] + X[order[s + bp + 1, bj], bj]) / 2.0
        n_left = 0
        for p in range(s, e):
            r = order[p, 0]
            go_left[r] = X[r, bj] < thr
            if go_left[r]:
                n_left += 1
        for j in range(d):
            a, b = 0, n_left
            for p in range(s, e):
                r = order[p, j]
                if go_left[r]:
                    buf[a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for p in range(m):
                order[s + p, j] = buf[p]
        feature[node], threshold[node] = bj, thr
        left[node], right[node] = n_nodes, n_nodes + 1
        stack[sp, 0], stack[sp, 1], stack[sp, 2], stack[sp, 3] = n_nodes + 1, s + n_left, e, depth + 1
        stack[sp + 1, 0], stack[sp + 1, 1], stack[sp + 1, 2], stack[sp + 1, 3] = n_nodes, s, s + n_left, depth + 1
        sp += 2
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], hist[:n_nodes], reached


def train_tree(X, y, min_leaf: int = 1, max_depth: int | None = None) -> Tree:
    """Greedy top-down induction.

    Every midpoint between consecutive distinct sorted values of every feature
    is a candidate threshold; the split with maximal information gain wins,
    ties going to the lowest feature index and then the lowest threshold.
    Growth stops on purity, ``min_leaf``, ``max_depth``, or when no candidate
    threshold is left. An impure node whose best gain is zero (XOR-like
    layouts) is still split, so consistent data is always fitted exactly.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0 or X.shape[1] == 0:
        raise ValueError("dataset must be non-empty with at least one feature")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    classes, y_idx = np.unique(y, return_inverse=True)
    order = np.argsort(X, axis=0, kind="stable").astype(np.int64)
    feature, threshold, left, right, hist, reached = _induce(
        X, y_idx.ravel().astype(np.int64), order, len(classes), int(min_leaf),
        -1 if max_depth is None else int(max_depth), _xlogx(np.arange(len(X) + 1)))
    return Tree(feature, threshold, left, right, hist.astype(float), classes, X.shape[1], int(reached))


def classify(tree: Tree, vector):
    """Label of a single feature vector; ``value < threshold`` goes left."""
    v = np.asarray(vector, dtype=float)
    if v.shape != (tree.n_features,):
        raise ValueError(f"expected {tree.n_features} features, got shape {v.shape}")
    node = tree.root
    while not node.is_leaf:
        node = node.left if v[node.feature] < node.threshold else node.right
    return tree.classes[node.label_index]


def dump_tree(tree: Tree) -> str:
    """Preorder text form, one node per line."""
    lines = ["classes\t" + "\t".join(map(str, tree.classes)),
             f"n_features\t{tree.n_features}"]

    def visit(node, depth):
        hist = ",".join(str(int(c)) for c in node.histogram)
        if node.is_leaf:
            lines.append(f"leaf\t{depth}\t{tree.classes[node.label_index]}\t{hist}")
        else:
            lines.append(f"split\t{depth}\t{node.feature}\t{node.threshold!r}\t{hist}")
            visit(node.left, depth + 1)
            visit(node.right, depth + 1)

    visit(tree.root, 0)
    return "\n".join(lines) + "\n"


def load_tree(text: str) -> Tree:
    lines = text.strip("\n").split("\n")
    classes = np.array(lines[0].split("\t")[1:])
    n_features = int(lines[1].split("\t")[1])
    it = iter(lines[2:])
    depth = [0]

    def build():
        parts = next(it).split("\t")
        hist = np.array([float(c) for c in parts[-1].split(",")])
        depth[0] = max(depth[0], int(parts[1]))
        if parts[0] == "leaf":
            return Node(hist)
        node = Node(hist, int(parts[2]), float(parts[3]))
        node.left = build()
        node.right = build()
        return node

    return Tree.from_root(build(), classes, n_features, depth[0])


class DecisionTree(ClassifierMixin, BaseEstimator):
    """Information-gain decision tree with an sklearn estimator interface."""

    def __init__(self, min_leaf: int = 1, max_depth: int | None = None):
        self.min_leaf = min_leaf
        self.max_depth = max_depth

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, ensure_all_finite=True)
        self.classes_ = unique_labels(y)
        self.tree_ = train_tree(X, y, self.min_leaf, self.max_depth)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.tree_.classes[self.tree_.apply(X)]

    @property
    def depth_(self) -> int:
        check_is_fitted(self, "tree_")
        return self.tree_.depth
