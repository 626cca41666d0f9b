"""Gradient-boosted regression trees for classification on log-loss.

Second-order boosting in the XGBoost style: each tree is grown greedily on
gradient/hessian sums with L2 leaf regularisation. Binary targets use one
logistic margin; more classes use one tree per class per round on the
softmax loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTable


@dataclass
class Tree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def _add(self, value=0.0):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            idx = np.flatnonzero(inner)
            go_left = X[idx, f[idx]] < threshold[node[idx]]
            node[idx] = np.where(go_left, left[node[idx]], right[node[idx]])
        return np.asarray(self.value)[node]


def _best_split(X, g, h, reg_lambda, min_child_weight):
    G, H = g.sum(), h.sum()
    parent = G * G / (H + reg_lambda)
    best = (0.0, -1, 0.0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        x = X[order, f]
        gl = np.cumsum(g[order])[:-1]
        hl = np.cumsum(h[order])[:-1]
        gr, hr = G - gl, H - hl
        valid = (x[1:] > x[:-1]) & (hl >= min_child_weight) & (hr >= min_child_weight)
        if not valid.any():
            continue
        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent)
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0]:
            best = (float(gain[i]), f, 0.5 * (x[i] + x[i + 1]))
    return best


def fit_tree(X, g, h, max_depth=3, reg_lambda=1.0, min_child_weight=1.0, gamma=0.0) -> Tree:
    tree = Tree()

    def grow(rows, depth):
        node = tree._add(-g[rows].sum() / (h[rows].sum() + reg_lambda))
        if depth >= max_depth or len(rows) < 2:
            return node
        gain, f, thr = _best_split(X[rows], g[rows], h[rows], reg_lambda, min_child_weight)
        if f < 0 or gain <= gamma:
            return node
        mask = X[rows, f] < thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = grow(rows[mask], depth + 1)
        tree.right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return tree


def _softmax(F):
    e = np.exp(F - F.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class GradientBoostedTrees:
    """Boosted-tree classifier over ``n_classes`` labels ``0..n_classes-1``.

    Training is deterministic; ``seed`` only matters when ``subsample < 1``.
    """

    def __init__(self, n_trees=100, max_depth=3, learning_rate=0.1, reg_lambda=1.0,
                 min_child_weight=1.0, subsample=1.0, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.subsample = subsample
        self.seed = seed
        self.trees = []
        self.n_classes = 0
        self.constant_class = None

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise EmptyTable("cannot fit a classifier on zero rows")
        self.n_classes = int(n_classes if n_classes is not None else y.max() + 1)
        self.trees = []
        present = np.unique(y)
        self.constant_class = int(present[0]) if len(present) == 1 else None
        if self.constant_class is not None:
            return self
        rng = np.random.default_rng(self.seed)
        n = X.shape[0]
        K = self.n_classes
        F = np.zeros((n, 1 if K == 2 else K))
        Y = np.eye(K)[y]
        for _ in range(self.n_trees):
            rows = np.arange(n)
            if self.subsample < 1.0:
                rows = np.sort(rng.choice(n, max(1, int(round(self.subsample * n))), replace=False))
            if K == 2:
                p = 1.0 / (1.0 + np.exp(-F[:, 0]))
                grads = [(p - y, np.maximum(p * (1.0 - p), 1e-16))]
            else:
                P = _softmax(F)
                grads = [(P[:, k] - Y[:, k], np.maximum(P[:, k] * (1.0 - P[:, k]), 1e-16)) for k in range(K)]
            round_trees = []
            for k, (g, h) in enumerate(grads):
                t = fit_tree(X[rows], g[rows], h[rows], self.max_depth, self.reg_lambda, self.min_child_weight)
                F[:, k] += self.learning_rate * t.predict(X)
                round_trees.append(t)
            self.trees.append(round_trees)
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        K = self.n_classes
        F = np.zeros((X.shape[0], 1 if K == 2 else K))
        for round_trees in self.trees:
            for k, t in enumerate(round_trees):
                F[:, k] += self.learning_rate * t.predict(X)
        return F

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.constant_class is not None:
            P = np.zeros((X.shape[0], self.n_classes))
            P[:, self.constant_class] = 1.0
            return P
        F = self.decision_function(X)
        if self.n_classes == 2:
            p = 1.0 / (1.0 + np.exp(-F[:, 0]))
            return np.column_stack([1.0 - p, p])
        return _softmax(F)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)
