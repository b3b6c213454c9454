from .metrics import ANY, NORMAL, Metrics, ci95, evaluate, metrics_from_counts
from .selection import (ForwardSelector, cross_val_labels, cv_error_count, feature_weights,
                        forward_selection, stratified_kfold)
from .tree import DecisionTree, Tree, classify, dump_tree, entropy, information_gain, load_tree, train_tree

__all__ = [
    "ANY", "NORMAL", "Metrics", "ci95", "evaluate", "metrics_from_counts",
    "ForwardSelector", "cross_val_labels", "cv_error_count", "feature_weights", "forward_selection", "stratified_kfold",
    "DecisionTree", "Tree", "classify", "dump_tree", "entropy", "information_gain",
    "load_tree", "train_tree",
]
