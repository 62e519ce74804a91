"""Robustness and embedding-quality metrics.

Accuracy-style values (ACC, RDA, Hom, NCon, edge homophily) are percentages;
silhouette is scaled by 100; the mutual-information scores are normalized MI
times 100.  Everything is computed in float64.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_HOM_K = 10
DEFAULT_SIL_CAP = 2000
DEFAULT_BINS = 10
STRUCTURAL_PROPERTY_NAMES = ("degree", "clustering", "pagerank", "avg_neighbor_degree")


def _values(emb):
    return np.asarray(getattr(emb, "values", emb), dtype=np.float64)


def accuracy(pred, labels, nodes=None):
    pred, labels = np.asarray(pred), np.asarray(labels)
    if nodes is not None:
        pred, labels = pred[nodes], labels[nodes]
    if len(labels) == 0:
        raise ValidationError("accuracy over an empty node set")
    return 100.0 * float((pred == labels).mean())


def rda(acc_clean, acc_attack):
    """Relative drop in accuracy, in percent of the clean accuracy (negative if the attack helped)."""
    if acc_clean <= 0:
        raise ValidationError("RDA is undefined for a clean accuracy of 0")
    return 100.0 * (acc_clean - acc_attack) / acc_clean


# ---------------------------------------------------------------------------
# clustering quality


def _check_classes(labels, min_classes=2):
    classes = np.unique(labels)
    if len(classes) < min_classes:
        raise ValidationError(f"need at least {min_classes} classes with points, got {len(classes)}")
    return classes


def davies_bouldin(emb, labels):
    """Davies-Bouldin index with Euclidean centroid dispersion (lower is better).

    Only classes that actually occur in ``labels`` take part.
    """
    x = _values(emb)
    labels = np.asarray(labels)
    classes = _check_classes(labels)
    cents = np.array([x[labels == c].mean(axis=0) for c in classes])
    disp = np.array([np.linalg.norm(x[labels == c] - cents[i], axis=1).mean()
                     for i, c in enumerate(classes)])
    sep = np.linalg.norm(cents[:, None, :] - cents[None, :, :], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (disp[:, None] + disp[None, :]) / sep
    ratio[~np.isfinite(ratio)] = 0.0
    np.fill_diagonal(ratio, -np.inf)
    return float(ratio.max(axis=1).mean())


def _exact_dist(x):
    """Pairwise distances from explicit differences (bitwise-stable tie handling)."""
    n = len(x)
    out = np.empty((n, n))
    for i in range(n):
        diff = x - x[i]
        out[i] = np.sqrt((diff * diff).sum(axis=1))
    return out


def silhouette(emb, labels, sample_cap=DEFAULT_SIL_CAP, seed=0):
    """Mean silhouette coefficient times 100; singletons score 0.

    When there are more than ``sample_cap`` points, a seeded uniform sample of
    ``sample_cap`` points is scored against each other.
    """
    x = _values(emb)
    labels = np.asarray(labels)
    _check_classes(labels)
    if sample_cap is not None and len(x) > sample_cap:
        idx = np.sort(np.random.default_rng(seed).choice(len(x), sample_cap, replace=False))
        x, labels = x[idx], labels[idx]
        if len(np.unique(labels)) < 2:
            raise ValidationError("silhouette sample contains a single class")
    d = _exact_dist(x)
    classes, inv = np.unique(labels, return_inverse=True)
    onehot = np.eye(len(classes))[inv]
    sums = d @ onehot
    counts = onehot.sum(axis=0)
    own = counts[inv]
    a = np.where(own > 1, sums[np.arange(len(x)), inv] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / counts
    mean_other[np.arange(len(x)), inv] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros_like(a), where=denom > 0)
    s[own <= 1] = 0.0
    return 100.0 * float(s.mean())


def knn_indices(emb, k):
    """k nearest neighbors by Euclidean distance, self excluded, ties to the lower id."""
    x = _values(emb)
    n = len(x)
    if not 1 <= k < n:
        raise ConfigError(f"k must be in [1, N) = [1, {n}), got {k}")
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        diff = x - x[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        dist[i] = np.inf
        out[i] = np.argsort(dist, kind="stable")[:k]
    return out


def embedding_homophily(emb, labels, k=DEFAULT_HOM_K):
    """Share of each node's k nearest embedding neighbors with the same label, in percent."""
    labels = np.asarray(labels)
    nbrs = knn_indices(emb, k)
    return 100.0 * float((labels[nbrs] == labels[:, None]).mean())


# ---------------------------------------------------------------------------
# mutual information


def mutual_information(a, b):
    """Discrete MI (nats) and the two marginal entropies of paired integer sequences."""
    a, b = np.asarray(a), np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(joint, (ai, bi), 1.0)
    return table_mutual_information(joint)


def table_mutual_information(joint):
    p = np.asarray(joint, dtype=np.float64)
    p = p / p.sum()
    pa, pb = p.sum(axis=1), p.sum(axis=0)
    nz = p > 0
    mi = float((p[nz] * np.log(p[nz] / np.outer(pa, pb)[nz])).sum())
    ha = float(-(pa[pa > 0] * np.log(pa[pa > 0])).sum())
    hb = float(-(pb[pb > 0] * np.log(pb[pb > 0])).sum())
    return max(mi, 0.0), ha, hb


def normalized_mi(a, b):
    """MI divided by the smaller marginal entropy, times 100 (0 if either side is constant)."""
    mi, ha, hb = mutual_information(a, b)
    h = min(ha, hb)
    if h <= 0:
        warnings.warn("constant variable in mutual information; value defined as 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return 100.0 * min(mi / h, 1.0)


def discretize_embeddings(emb, num_clusters, seed=0):
    """Seeded k-means cell assignment of each embedding row."""
    from sklearn.cluster import KMeans

    if num_clusters < 2:
        raise ConfigError("num_clusters must be >= 2")
    x = _values(emb)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=min(num_clusters, len(x)), n_init=10, random_state=seed)
        cells = km.fit_predict(x)
    if len(np.unique(cells)) < 2:
        warnings.warn("k-means collapsed to a single cell", RuntimeWarning, stacklevel=2)
    return cells


def elmi(emb, labels, num_clusters=None, seed=0):
    """Normalized mutual information between k-means cells of the embeddings and labels."""
    labels = np.asarray(labels)
    if num_clusters is None:
        num_clusters = len(np.unique(labels))
    cells = discretize_embeddings(emb, num_clusters, seed)
    return normalized_mi(cells, labels)


def quantile_bins(values, bins=DEFAULT_BINS):
    """Bin index per value using interior quantile cut points (duplicate cuts merged)."""
    if bins < 2:
        raise ConfigError("bins must be >= 2")
    v = np.asarray(values, dtype=np.float64)
    cuts = np.unique(np.quantile(v, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(cuts, v, side="right")


def esmi_per_property(emb, graph, bins=DEFAULT_BINS, num_clusters=None, seed=0, props=None):
    """Normalized MI between embedding cells and each binned structural property."""
    if num_clusters is None:
        num_clusters = graph.num_classes
    if props is None:
        props = structural_properties(graph)
    cells = discretize_embeddings(emb, num_clusters, seed)
    out = {}
    for name in STRUCTURAL_PROPERTY_NAMES:
        binned = quantile_bins(getattr(props, name), bins)
        out[name] = normalized_mi(cells, binned)
    return out


def esmi(emb, graph, bins=DEFAULT_BINS, num_clusters=None, seed=0):
    """Mean over degree, clustering, PageRank and neighbor degree of :func:`esmi_per_property`."""
    per = esmi_per_property(emb, graph, bins, num_clusters, seed)
    return float(np.mean(list(per.values())))


# ---------------------------------------------------------------------------
# graph-side metrics


def neighbor_consistency(emb, graph):
    """Mean cosine similarity over directed edge incidences, in percent."""
    if graph.num_edges == 0:
        raise ValidationError("neighbor consistency needs at least one edge")
    x = _values(emb)
    norms = np.linalg.norm(x, axis=1)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    zero = (norms[u] == 0) | (norms[v] == 0)
    if zero.any():
        warnings.warn(f"{int(zero.sum())} edge(s) touch a zero embedding; cosine defined as 0",
                      RuntimeWarning, stacklevel=2)
    denom = norms[u] * norms[v]
    dots = (x[u] * x[v]).sum(axis=1)
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    # (i, j) and (j, i) carry the same cosine, so the directed mean is the undirected mean
    return 100.0 * float(cos.mean())


def edge_homophily(graph, labels=None):
    if graph.num_edges == 0:
        raise ValidationError("edge homophily needs at least one edge")
    y = graph.labels if labels is None else np.asarray(labels)
    return 100.0 * float((y[graph.edges[:, 0]] == y[graph.edges[:, 1]]).mean())


@dataclass(frozen=True, eq=False)
class StructuralProps:
    degree: np.ndarray
    clustering: np.ndarray
    pagerank: np.ndarray
    avg_neighbor_degree: np.ndarray


def pagerank(graph, damping=0.85, tol=1e-10, max_iter=10_000):
    """Power iteration; dangling nodes spread their mass uniformly."""
    n = graph.num_nodes
    adj = graph.adjacency
    deg = graph.degrees.astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    dangling = deg == 0
    r = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        spread = adj.T @ (r * inv)
        new = damping * (spread + r[dangling].sum() / n) + (1.0 - damping) / n
        new /= new.sum()
        if np.abs(new - r).sum() < tol:
            r = new
            break
        r = new
    return r


def structural_properties(graph):
    adj = graph.adjacency
    deg = graph.degrees.astype(np.float64)
    triangles = np.asarray((adj.multiply(adj @ adj)).sum(axis=1)).ravel() / 2.0
    pairs = deg * (deg - 1) / 2.0
    clustering = np.divide(triangles, pairs, out=np.zeros_like(deg), where=deg >= 2)
    nbr_sum = adj @ deg
    avg_nbr = np.divide(nbr_sum, deg, out=np.zeros_like(deg), where=deg > 0)
    return StructuralProps(graph.degrees.astype(np.int64), clustering, pagerank(graph), avg_nbr)


# ---------------------------------------------------------------------------
# bundles


@dataclass
class MetricBundle:
    acc: float | None = None
    rda: float | None = None
    dbi: float | None = None
    silhouette: float | None = None
    homophily_k: float | None = None
    elmi: float | None = None
    esmi: float | None = None
    ncon: float | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: d.get(f.name) for f in fields(cls)})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self):
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            ["" if v is None else repr(float(v)) for v in asdict(self).values()])
        return buf.getvalue()


def embedding_metrics(emb, graph, k=DEFAULT_HOM_K, bins=DEFAULT_BINS, sample_cap=DEFAULT_SIL_CAP,
                      seed=0):
    """Every embedding-quality metric of one (embedding, graph) pair."""
    labels = graph.labels
    bundle = MetricBundle()
    bundle.dbi = davies_bouldin(emb, labels)
    bundle.silhouette = silhouette(emb, labels, sample_cap, seed)
    bundle.homophily_k = embedding_homophily(emb, labels, min(k, graph.num_nodes - 1))
    bundle.elmi = elmi(emb, labels, seed=seed)
    bundle.esmi = esmi(emb, graph, bins, seed=seed)
    if graph.num_edges:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            bundle.ncon = neighbor_consistency(emb, graph)
    return bundle
