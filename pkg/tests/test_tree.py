import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from immunids.learn import (DecisionTree, classify, dump_tree, entropy, information_gain, load_tree,
                            train_tree)


def oracle_entropy(labels):
    n = len(labels)
    return -sum(c / n * math.log2(c / n) for c in Counter(labels).values())


def oracle_gain(parent, left, right):
    n = len(parent)
    return oracle_entropy(parent) - len(left) / n * oracle_entropy(left) - len(right) / n * oracle_entropy(right)


def reference_tree(rows, labels, min_leaf=1, max_depth=None, depth=0):
    """Plain-loop induction used as a second route to the same tree."""
    hist = Counter(labels)
    if len(hist) <= 1 or (max_depth is not None and depth >= max_depth) or len(rows) < 2 * min_leaf:
        return ("leaf", hist)
    candidates = []
    for j in range(len(rows[0])):
        values = sorted(set(r[j] for r in rows))
        for a, b in zip(values, values[1:]):
            thr = (a + b) / 2.0
            left = [lab for r, lab in zip(rows, labels) if r[j] < thr]
            right = [lab for r, lab in zip(rows, labels) if r[j] >= thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            candidates.append((oracle_gain(labels, left, right), j, thr))
    if not candidates:
        return ("leaf", hist)
    top = max(g for g, _, _ in candidates)
    _, j, thr = min((c for c in candidates if c[0] >= top - 1e-12), key=lambda c: (c[1], c[2]))
    li = [i for i, r in enumerate(rows) if r[j] < thr]
    ri = [i for i, r in enumerate(rows) if r[j] >= thr]
    return ("split", j, thr,
            reference_tree([rows[i] for i in li], [labels[i] for i in li], min_leaf, max_depth, depth + 1),
            reference_tree([rows[i] for i in ri], [labels[i] for i in ri], min_leaf, max_depth, depth + 1))


def as_tuple(node, classes):
    if node.is_leaf:
        return ("leaf", Counter({classes[i]: int(c) for i, c in enumerate(node.histogram) if c}))
    return ("split", node.feature, node.threshold, as_tuple(node.left, classes), as_tuple(node.right, classes))


def random_consistent(rng, rows, feats, n_classes=3, levels=4):
    X = rng.integers(0, levels, size=(rows, feats)).astype(float)
    table = {}
    y = []
    for r in map(tuple, X):
        table.setdefault(r, int(rng.integers(n_classes)))
        y.append(table[r])
    return X, np.array(y)


class TestInformationGain:
    def test_perfect_split(self):
        assert information_gain("AABB", "AA", "BB") == pytest.approx(1.0)

    def test_uninformative_split(self):
        assert information_gain("AABB", "AB", "AB") == pytest.approx(0.0)

    def test_three_to_one(self):
        assert information_gain("AAAB", "AA", "AB") == pytest.approx(0.8113 - 0.5, abs=1e-4)
        assert information_gain("AAAB", "AA", "AB") == pytest.approx(oracle_gain("AAAB", "AA", "AB"), abs=1e-12)

    def test_empty_child_rejected(self):
        with pytest.raises(ValueError):
            information_gain("AB", "", "AB")

    def test_children_must_partition_parent(self):
        with pytest.raises(ValueError):
            information_gain("AABB", "AA", "AB")

    def test_entropy_of_uniform_labels(self):
        assert entropy("ABCD") == pytest.approx(2.0)
        assert entropy("") == 0.0

    @given(st.lists(st.sampled_from("ABC"), min_size=2, max_size=40), st.data())
    def test_non_negative_and_matches_oracle(self, parent, data):
        cut = data.draw(st.integers(1, len(parent) - 1))
        perm = data.draw(st.permutations(parent))
        left, right = perm[:cut], perm[cut:]
        g = information_gain(parent, left, right)
        assert g >= -1e-12
        assert g == pytest.approx(oracle_gain(parent, left, right), abs=1e-9)

    def test_zero_gain_iff_children_match_parent_distribution(self):
        assert information_gain("AABBAABB", "AABB", "AABB") == pytest.approx(0.0, abs=1e-12)
        assert information_gain("AABBAABB", "AAAB", "ABBB") > 0


class TestTrainTree:
    def test_single_class_gives_single_leaf(self):
        t = train_tree(np.arange(6.0).reshape(3, 2), ["a", "a", "a"])
        assert t.root.is_leaf and t.depth == 0

    def test_one_threshold_separable(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        t = train_tree(X, ["a", "a", "b", "b"])
        assert t.depth == 1
        assert t.root.feature == 0 and t.root.threshold == 1.5
        assert [classify(t, r) for r in X] == ["a", "a", "b", "b"]

    def test_value_equal_to_threshold_goes_right(self):
        t = train_tree(np.array([[0.0], [1.0]]), ["a", "b"])
        assert classify(t, [0.5]) == "b"
        assert classify(t, [0.4999]) == "a"

    def test_lowest_feature_wins_ties(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert train_tree(X, ["a", "b"]).root.feature == 0

    def test_xor_layout_is_split_despite_zero_gain(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = ["a", "b", "b", "a"]
        t = train_tree(X, y)
        assert t.depth == 2
        assert [classify(t, r) for r in X] == y

    def test_contradictory_duplicates_become_majority_leaf(self):
        X = np.zeros((5, 1))
        t = train_tree(X, ["a", "a", "a", "b", "b"])
        assert t.root.is_leaf and classify(t, [0.0]) == "a"

    def test_min_leaf_and_max_depth(self):
        X = np.arange(8.0).reshape(-1, 1)
        y = ["a", "b"] * 4
        assert train_tree(X, y, max_depth=2).depth <= 2
        t = train_tree(X, y, min_leaf=3)
        for leaf_hist in _leaves(t.root):
            assert leaf_hist.sum() >= 3

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            train_tree(np.zeros((0, 2)), [])
        with pytest.raises(ValueError):
            train_tree(np.zeros((3, 0)), [1, 2, 3])

    def test_zero_training_error_on_random_consistent_data(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            X, y = random_consistent(rng, 50, 4)
            t = train_tree(X, y)
            assert all(classify(t, r) == lab for r, lab in zip(X, y))

    def test_matches_reference_induction(self):
        rng = np.random.default_rng(5)
        for trial in range(60):
            X, y = random_consistent(rng, int(rng.integers(2, 30)), int(rng.integers(1, 4)))
            min_leaf = int(rng.integers(1, 4))
            t = train_tree(X, y, min_leaf=min_leaf)
            ref = reference_tree([tuple(r) for r in X], y.tolist(), min_leaf)
            assert as_tuple(t.root, t.classes.tolist()) == ref, f"trial {trial}"

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_rescaling_keeps_training_predictions(self, seed):
        rng = np.random.default_rng(seed)
        X, y = random_consistent(rng, 30, 3, levels=6)
        j = int(rng.integers(3))
        Z = X.copy()
        Z[:, j] = np.exp(Z[:, j]) * 3 + 1
        a = DecisionTree().fit(X, y).predict(X)
        b = DecisionTree().fit(Z, y).predict(Z)
        assert np.array_equal(a, b)


def _leaves(node):
    if node.is_leaf:
        return [node.histogram]
    return _leaves(node.left) + _leaves(node.right)


class TestClassify:
    def test_single_leaf_always_same_label(self):
        t = train_tree(np.zeros((3, 2)), ["x", "x", "x"])
        assert classify(t, [5.0, -5.0]) == "x"

    def test_dimension_mismatch(self):
        t = train_tree(np.zeros((3, 2)), ["x", "x", "x"])
        with pytest.raises(ValueError):
            classify(t, [1.0])

    def test_dump_load_round_trip(self):
        rng = np.random.default_rng(2)
        X, y = random_consistent(rng, 40, 3)
        labels = np.array(["c%d" % v for v in y])
        t = train_tree(X, labels)
        again = load_tree(dump_tree(t))
        assert dump_tree(again) == dump_tree(t)
        assert again.depth == t.depth
        assert all(classify(again, r) == lab for r, lab in zip(X, labels))

    def test_vectorised_apply_agrees_with_single_lookup(self):
        rng = np.random.default_rng(3)
        X, y = random_consistent(rng, 40, 3)
        t = train_tree(X, y, min_leaf=2)
        probe = rng.uniform(-1, 5, size=(100, 3))
        assert [t.classes[i] for i in t.apply(probe)] == [classify(t, r) for r in probe]


class TestEstimator:
    def test_sklearn_protocol(self):
        est = DecisionTree(min_leaf=5, max_depth=25)
        assert est.get_params() == {"min_leaf": 5, "max_depth": 25}
        c = clone(est).set_params(min_leaf=2)
        assert c.min_leaf == 2 and est.min_leaf == 5

    def test_fit_predict_and_depth(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        est = DecisionTree().fit(X, ["a", "a", "b", "b"])
        assert list(est.predict(X)) == ["a", "a", "b", "b"]
        assert est.depth_ == 1 and list(est.classes_) == ["a", "b"]
        assert est.score(X, ["a", "a", "b", "b"]) == 1.0

    def test_predict_checks_width(self):
        est = DecisionTree().fit(np.zeros((2, 2)), [0, 1])
        with pytest.raises(ValueError):
            est.predict(np.zeros((1, 3)))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            DecisionTree().fit(np.array([[np.nan], [1.0]]), [0, 1])
