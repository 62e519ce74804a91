"""Graph purification: drop edges whose endpoint embeddings are dissimilar."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

PURIFY_MODES = ("fixed_threshold", "quantile")
DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class PurifyConfig:
    mode: str = "fixed_threshold"
    threshold: float = DEFAULT_THRESHOLD
    quantile: float = 0.0

    def __post_init__(self):
        if self.mode not in PURIFY_MODES:
            raise ConfigError(f"mode must be one of {PURIFY_MODES}")
        if self.mode == "fixed_threshold" and not -1.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be a cosine value in [-1, 1]")
        if self.mode == "quantile" and not 0.0 <= self.quantile < 1.0:
            raise ConfigError("quantile must be in [0, 1)")

    @classmethod
    def default(cls, structural_budget=None):
        """Budget-matched quantile when the poisoning rate is known, else threshold 0.1."""
        if structural_budget:
            return cls(mode="quantile", quantile=float(structural_budget))
        return cls(mode="fixed_threshold", threshold=DEFAULT_THRESHOLD)


def edge_cosine(emb, edges):
    """Cosine similarity of the endpoint embeddings of each edge (0 if either is a zero vector)."""
    x = np.asarray(getattr(emb, "values", emb), dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    a, b = x[edges[:, 0]], x[edges[:, 1]]
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    denom = na * nb
    dots = (a * b).sum(axis=1)
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def purify(graph, emb, cfg=PurifyConfig()):
    """Remove low-similarity edges; never adds any.

    ``fixed_threshold`` drops every edge with cosine strictly below the threshold.
    ``quantile`` drops the ``floor(quantile * |E|)`` least similar edges, ties
    broken by ``(u, v)`` order.
    """
    x = getattr(emb, "values", emb)
    if x.shape[0] != graph.num_nodes:
        raise ValidationError(f"embedding has {x.shape[0]} rows, graph has {graph.num_nodes} nodes")
    if graph.num_edges == 0:
        return graph
    cos = edge_cosine(x, graph.edges)
    if cfg.mode == "fixed_threshold":
        keep = cos >= cfg.threshold
    else:
        k = math.floor(cfg.quantile * graph.num_edges + 1e-9)
        # edges are stored sorted by (u, v), so a stable sort breaks ties in that order
        order = np.argsort(cos, kind="stable")
        keep = np.ones(graph.num_edges, dtype=bool)
        keep[order[:k]] = False
    if not keep.any():
        warnings.warn("purification removed every edge", RuntimeWarning, stacklevel=2)
    return graph.with_edges(graph.edges[keep])
