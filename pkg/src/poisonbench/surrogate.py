"""Linearized two-layer GCN surrogate used by the gray-box structural attacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax

from .errors import ValidationError
from .victims import normalize_adjacency


def fit_softmax_regression(Z, y, num_classes, weight_decay=5e-4, max_iter=500):
    """Multinomial logistic regression by L-BFGS from a zero start.

    Minimizes mean cross-entropy plus ``weight_decay / 2 * ||W||^2`` (bias
    unpenalized).  Deterministic: no random initialization is involved.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = Z.shape
    onehot = np.eye(num_classes)[y]

    def objective(theta):
        W = theta[: d * num_classes].reshape(d, num_classes)
        b = theta[d * num_classes :]
        logits = Z @ W + b
        logp = log_softmax(logits, axis=1)
        loss = -(onehot * logp).sum() / n + 0.5 * weight_decay * (W * W).sum()
        g = (np.exp(logp) - onehot) / n
        gW = Z.T @ g + weight_decay * W
        return loss, np.r_[gW.ravel(), g.sum(axis=0)]

    theta0 = np.zeros(d * num_classes + num_classes)
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": 1e-8})
    W = res.x[: d * num_classes].reshape(d, num_classes)
    return W, res.x[d * num_classes :]


@dataclass(eq=False)
class SurrogateModel:
    """Collapsed weights of ``logits = A_hat^2 X W + b``."""

    W: np.ndarray
    b: np.ndarray
    seed: int = 0

    @property
    def num_classes(self):
        return self.W.shape[1]


def propagate_twice(graph_or_adj, features):
    a_hat = normalize_adjacency(graph_or_adj)
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    return a_hat @ (a_hat @ x)


def train_surrogate(graph, features, labeled_nodes, labels=None, seed=0, weight_decay=5e-4):
    """Fit the linearized GCN on the labeled nodes only.

    ``labels`` defaults to the graph's labels; only the entries at
    ``labeled_nodes`` are read.
    """
    nodes = np.asarray(labeled_nodes, dtype=np.int64)
    if len(nodes) == 0:
        raise ValidationError("labeled_nodes is empty")
    y = graph.labels if labels is None else np.asarray(labels)
    Z = propagate_twice(graph, features)
    W, b = fit_softmax_regression(Z[nodes], y[nodes], graph.num_classes, weight_decay)
    return SurrogateModel(W, b, seed)


def surrogate_logits(model, graph_or_adj, features):
    return propagate_twice(graph_or_adj, features) @ model.W + model.b


def surrogate_predict(model, graph_or_adj, features):
    logits = surrogate_logits(model, graph_or_adj, features)
    return logits.argmax(axis=1), softmax(logits, axis=1)
