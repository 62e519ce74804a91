import math
import warnings

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import davies_bouldin_score, silhouette_score

from poisonbench.errors import ValidationError
from poisonbench.metrics import (
    MetricBundle,
    accuracy,
    davies_bouldin,
    edge_homophily,
    elmi,
    embedding_homophily,
    embedding_metrics,
    esmi,
    esmi_per_property,
    knn_indices,
    mutual_information,
    neighbor_consistency,
    normalized_mi,
    pagerank,
    quantile_bins,
    rda,
    silhouette,
    structural_properties,
    table_mutual_information,
)
from poisonbench.tagraph import TextAttributedGraph

from conftest import random_graph


# --------------------------------------------------------------------------- brute-force references


def ref_dbi(x, y):
    cls = sorted(set(y.tolist()))
    cent = {c: [sum(x[i][d] for i in range(len(x)) if y[i] == c) / sum(1 for v in y if v == c)
                for d in range(x.shape[1])] for c in cls}
    disp = {c: sum(math.dist(x[i], cent[c]) for i in range(len(x)) if y[i] == c) / sum(1 for v in y if v == c)
            for c in cls}
    total = 0.0
    for a in cls:
        worst = 0.0
        for b in cls:
            if a != b:
                sep = math.dist(cent[a], cent[b])
                worst = max(worst, (disp[a] + disp[b]) / sep if sep > 0 else 0.0)
        total += worst
    return total / len(cls)


def ref_silhouette(x, y):
    n = len(x)
    scores = []
    for i in range(n):
        own = [math.dist(x[i], x[j]) for j in range(n) if j != i and y[j] == y[i]]
        if not own:
            scores.append(0.0)
            continue
        a = sum(own) / len(own)
        b = min(
            sum(math.dist(x[i], x[j]) for j in range(n) if y[j] == c) / sum(1 for j in range(n) if y[j] == c)
            for c in set(y.tolist()) if c != y[i]
        )
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return 100 * sum(scores) / n


def ref_homophily(x, y, k):
    n = len(x)
    hits = 0
    for i in range(n):
        order = sorted((math.dist(x[i], x[j]), j) for j in range(n) if j != i)
        hits += sum(y[j] == y[i] for _, j in order[:k])
    return 100 * hits / (n * k)


def ref_ncon(x, edges):
    total = 0.0
    pairs = [(u, v) for u, v in edges] + [(v, u) for u, v in edges]
    for u, v in pairs:
        nu, nv = math.hypot(*x[u]), math.hypot(*x[v])
        total += 0.0 if nu == 0 or nv == 0 else sum(a * b for a, b in zip(x[u], x[v])) / (nu * nv)
    return 100 * total / len(pairs)


def ref_table_mi(table):
    t = np.asarray(table, dtype=float)
    n = t.sum()
    mi = 0.0
    for i in range(t.shape[0]):
        for j in range(t.shape[1]):
            if t[i, j]:
                pij = t[i, j] / n
                mi += pij * math.log(pij / (t[i].sum() / n * t[:, j].sum() / n))
    h = lambda m: -sum(p / n * math.log(p / n) for p in m if p)
    return mi, h(t.sum(1)), h(t.sum(0))


def instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 50))
    c = int(rng.integers(2, 5))
    y = rng.integers(0, c, n)
    y[:2] = [0, 1]
    x = rng.normal(size=(n, int(rng.integers(1, 5))))
    if seed % 4 == 0:
        x = np.round(x)  # exercise ties
    return x, y


# --------------------------------------------------------------------------- RDA / accuracy


def test_rda_values():
    assert rda(85.46, 58.15) == pytest.approx(31.96, abs=0.01)
    assert rda(89.49, 70.93) == pytest.approx(20.74, abs=0.01)
    assert rda(92.17, 92.49) == pytest.approx(-0.35, abs=0.01)
    assert rda(70.0, 0.0) == 100.0
    with pytest.raises(ValidationError):
        rda(0.0, 10.0)


@given(st.floats(1, 100), st.floats(0, 100), st.floats(0, 100))
def test_rda_affine(c, a1, a2):
    assert rda(c, c) == 0
    mid = rda(c, (a1 + a2) / 2)
    assert mid == pytest.approx((rda(c, a1) + rda(c, a2)) / 2, abs=1e-9)


def test_accuracy_percent():
    assert accuracy([0, 1, 1], [0, 1, 0]) == pytest.approx(200 / 3)
    assert accuracy([0, 1, 1], [0, 1, 0], nodes=[0, 1]) == 100.0


# --------------------------------------------------------------------------- oracle sweeps


def test_dbi_oracle_sweep():
    for seed in range(100):
        x, y = instance(seed)
        assert davies_bouldin(x, y) == pytest.approx(ref_dbi(x, y), rel=1e-9, abs=1e-12)


def test_dbi_matches_sklearn():
    for seed in range(20):
        x, y = instance(seed)
        assert davies_bouldin(x, y) == pytest.approx(davies_bouldin_score(x, y), rel=1e-9)


def test_silhouette_oracle_sweep():
    for seed in range(100):
        x, y = instance(seed)
        assert silhouette(x, y) == pytest.approx(ref_silhouette(x, y), abs=1e-9)


def test_silhouette_matches_sklearn():
    for seed in range(20):
        x, y = instance(seed)
        assert silhouette(x, y) == pytest.approx(100 * silhouette_score(x, y), abs=1e-9)


def test_homophily_oracle_sweep():
    for seed in range(100):
        x, y = instance(seed)
        k = min(5, len(x) - 1)
        assert embedding_homophily(x, y, k) == pytest.approx(ref_homophily(x, y, k), abs=1e-9)


def test_ncon_and_edge_homophily_oracle_sweep():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, int(rng.integers(4, 50)), 0.3, num_classes=3)
        if g.num_edges == 0:
            continue
        x = rng.normal(size=(g.num_nodes, 3))
        assert neighbor_consistency(x, g) == pytest.approx(ref_ncon(x, g.edges.tolist()), abs=1e-9)
        same = sum(g.labels[u] == g.labels[v] for u, v in g.edges.tolist())
        assert edge_homophily(g) == pytest.approx(100 * same / g.num_edges, abs=1e-9)


# --------------------------------------------------------------------------- hand-made cases


def test_dbi_cases():
    assert davies_bouldin(np.array([[0.0], [5.0]]), np.array([0, 1])) == 0.0
    x = np.array([[0, 0], [1, 0], [5, 5], [6, 5.5]])
    y = np.array([0, 0, 1, 1])
    assert davies_bouldin(np.r_[x, x], np.r_[y, y]) == pytest.approx(davies_bouldin(x, y), rel=1e-12)


def test_silhouette_cases():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(0, 0.01, (20, 2)), rng.normal(100, 0.01, (20, 2))]
    y = np.r_[np.zeros(20, int), np.ones(20, int)]
    assert silhouette(x, y) >= 95
    assert silhouette(np.zeros((6, 2)), np.array([0, 1] * 3)) == 0.0
    z = rng.normal(size=(150, 3))
    labels = rng.integers(0, 3, 150)
    assert silhouette(z, labels, sample_cap=None) == silhouette(z, labels, sample_cap=150)
    capped = silhouette(z, labels, sample_cap=50, seed=1)
    assert capped == silhouette(z, labels, sample_cap=50, seed=1)


def test_homophily_cases():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    assert embedding_homophily(x, np.zeros(4, int), 2) == 100.0
    # labels a b a b on a line; k=1 neighbors: 0->1, 1->0 (tie 0/2 goes to 0), 2->1, 3->2
    assert embedding_homophily(x, np.array([0, 1, 0, 1]), 1) == 0.0
    assert knn_indices(x, 1).ravel().tolist() == [1, 0, 1, 2]
    x2 = np.array([[0.0], [1.0], [5.0], [6.0]])
    assert embedding_homophily(x2, np.array([0, 1, 0, 1]), 1) == 0.0
    assert embedding_homophily(x2, np.array([0, 0, 1, 1]), 1) == 100.0


def test_ncon_cases():
    tri = TextAttributedGraph(3, [(0, 1), (1, 2), (0, 2)], ["a"] * 3, [0] * 3, 1)
    assert neighbor_consistency(np.ones((3, 2)), tri) == pytest.approx(100.0)
    path = TextAttributedGraph(3, [(0, 1), (1, 2)], ["a"] * 3, [0] * 3, 1)
    assert neighbor_consistency(np.array([[1, 0], [0, 1], [1, 0]]), path) == 0.0
    x = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 2.0]])
    # cos(0,1)=1/sqrt2, cos(1,2)=1/sqrt2, cos(0,2)=0
    assert neighbor_consistency(x, tri) == pytest.approx(100 * (2 / math.sqrt(2)) / 3)
    with pytest.warns(RuntimeWarning):
        neighbor_consistency(np.array([[0.0, 0.0], [1, 1], [1, 0]]), tri)


def test_edge_homophily_cases():
    g = TextAttributedGraph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], ["a"] * 6,
                            [0, 0, 0, 1, 1, 0], 2)
    assert edge_homophily(g) == pytest.approx(60.0)
    bip = TextAttributedGraph(4, [(0, 2), (0, 3), (1, 2)], ["a"] * 4, [0, 0, 1, 1], 2)
    assert edge_homophily(bip) == 0.0


def test_structural_properties_cases():
    tri = TextAttributedGraph(3, [(0, 1), (1, 2), (0, 2)], ["a"] * 3, [0] * 3, 1)
    assert structural_properties(tri).clustering.tolist() == [1.0, 1.0, 1.0]
    star = TextAttributedGraph(5, [(0, i) for i in range(1, 5)], ["a"] * 5, [0] * 5, 1)
    sp = structural_properties(star)
    assert sp.clustering[0] == 0.0
    assert sp.avg_neighbor_degree[1:].tolist() == [4.0] * 4
    pair = TextAttributedGraph(2, [(0, 1)], ["a"] * 2, [0] * 2, 1)
    np.testing.assert_allclose(pagerank(pair), [0.5, 0.5])


def test_structural_properties_match_networkx():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 30, 0.15)
        G = nx.Graph()
        G.add_nodes_from(range(30))
        G.add_edges_from(g.edges.tolist())
        sp = structural_properties(g)
        np.testing.assert_allclose(sp.clustering, [nx.clustering(G)[i] for i in range(30)], atol=1e-12)
        pr = nx.pagerank(G, alpha=0.85, tol=1e-13)
        np.testing.assert_allclose(sp.pagerank, [pr[i] for i in range(30)], atol=1e-8)
        and_ = nx.average_neighbor_degree(G)
        np.testing.assert_allclose(sp.avg_neighbor_degree, [and_[i] for i in range(30)], atol=1e-12)


# --------------------------------------------------------------------------- mutual information


def test_table_mi_matches_reference():
    rng = np.random.default_rng(1)
    for _ in range(30):
        table = rng.integers(0, 6, size=(int(rng.integers(2, 5)), int(rng.integers(2, 5))))
        table[0, 0] += 1
        mi, ha, hb = table_mutual_information(table)
        rmi, rha, rhb = ref_table_mi(table)
        assert (mi, ha, hb) == pytest.approx((rmi, rha, rhb), abs=1e-12)


def separable_cells(table, rng):
    """Points at well-separated centers reproducing the joint table of (cell, label)."""
    cells, labels = [], []
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            cells += [i] * int(table[i, j])
            labels += [j] * int(table[i, j])
    cells, labels = np.array(cells), np.array(labels)
    centers = np.eye(table.shape[0]) * 100
    x = centers[cells] + rng.normal(0, 0.01, (len(cells), table.shape[0]))
    return x, cells, labels


def test_elmi_equals_exact_table_mi():
    rng = np.random.default_rng(2)
    for _ in range(10):
        table = rng.integers(1, 8, size=(3, 3))
        x, cells, labels = separable_cells(table, rng)
        mi, ha, hb = ref_table_mi(table)
        assert elmi(x, labels, num_clusters=3) == pytest.approx(100 * mi / min(ha, hb), abs=1e-9)


def test_elmi_perfect_and_null():
    rng = np.random.default_rng(3)
    x, cells, _ = separable_cells(np.diag([10, 12, 9]), rng)
    assert elmi(x, cells) == pytest.approx(100.0)
    z = rng.normal(size=(1000, 8))
    assert elmi(z, rng.integers(0, 5, 1000)) < 5


def test_elmi_relabel_invariance():
    rng = np.random.default_rng(4)
    x, _, labels = separable_cells(rng.integers(1, 8, size=(3, 3)), rng)
    perm = np.array([2, 0, 1])
    assert elmi(x, perm[labels]) == pytest.approx(elmi(x, labels), abs=1e-12)


def ref_bins(values, bins):
    cuts = sorted(set(np.quantile(values, [i / bins for i in range(1, bins)]).tolist()))
    return np.array([sum(v >= c for c in cuts) for v in values])


def test_esmi_equals_exact_table_mi():
    rng = np.random.default_rng(5)
    g = random_graph(rng, 30, 0.2, num_classes=3)
    G = nx.Graph()
    G.add_nodes_from(range(30))
    G.add_edges_from(g.edges.tolist())
    cells = rng.integers(0, 3, 30)
    x = np.eye(3)[cells] * 100 + rng.normal(0, 0.01, (30, 3))
    per = esmi_per_property(x, g, bins=4)
    props = {
        "degree": np.array([G.degree[i] for i in range(30)], dtype=float),
        "clustering": np.array([nx.clustering(G)[i] for i in range(30)]),
        "avg_neighbor_degree": np.array([nx.average_neighbor_degree(G)[i] for i in range(30)]),
    }
    for name, vals in props.items():
        binned = ref_bins(vals, 4)
        table = np.zeros((3, binned.max() + 1))
        for c, b in zip(cells, binned):
            table[c, b] += 1
        mi, ha, hb = ref_table_mi(table)
        want = 0.0 if min(ha, hb) == 0 else 100 * mi / min(ha, hb)
        assert per[name] == pytest.approx(want, abs=1e-9), name
    assert esmi(x, g, bins=4) == pytest.approx(np.mean(list(per.values())), abs=1e-12)


def test_esmi_regular_graph_degree_term_zero():
    n = 12
    ring = TextAttributedGraph(n, [(i, (i + 1) % n) for i in range(n)], ["a"] * n, [0, 1] * 6, 2)
    x = np.random.default_rng(0).normal(size=(n, 3))
    with pytest.warns(RuntimeWarning):
        assert esmi_per_property(x, ring)["degree"] == 0.0


def test_esmi_degree_onehot_is_100():
    star = TextAttributedGraph(8, [(0, i) for i in range(1, 8)], ["a"] * 8, [0, 1] * 4, 2)
    bins = quantile_bins(star.degrees, 10)
    x = np.eye(bins.max() + 1)[bins] * 10
    assert esmi_per_property(x, star, num_clusters=2)["degree"] == pytest.approx(100.0)


def test_normalized_mi_constant_warns():
    with pytest.warns(RuntimeWarning):
        assert normalized_mi([1, 1, 1], [0, 1, 2]) == 0.0
    mi, ha, hb = mutual_information([0, 0, 1, 1], [5, 5, 7, 7])
    assert mi == pytest.approx(math.log(2)) and ha == hb == pytest.approx(math.log(2))


# --------------------------------------------------------------------------- invariances


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_and_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 25, 0.2, num_classes=3)
    if g.num_edges == 0 or len(np.unique(g.labels)) < 2:
        return
    x = rng.normal(size=(25, 3))
    perm = rng.permutation(25)
    inv = np.argsort(perm)
    gp = TextAttributedGraph(25, inv[g.edges], ["a"] * 25, g.labels[perm], 3)
    xp = x[perm]
    assert edge_homophily(gp) == pytest.approx(edge_homophily(g), abs=1e-12)
    assert neighbor_consistency(xp, gp) == pytest.approx(neighbor_consistency(x, g), abs=1e-9)
    assert davies_bouldin(xp, g.labels[perm]) == pytest.approx(davies_bouldin(x, g.labels), rel=1e-9)
    assert silhouette(xp, g.labels[perm]) == pytest.approx(silhouette(x, g.labels), abs=1e-9)
    assert embedding_homophily(np.round(xp, 6) + 0, g.labels[perm], 3) == pytest.approx(
        embedding_homophily(np.round(x, 6) + 0, g.labels, 3), abs=1e-9)
    scale = rng.uniform(0.1, 10, size=(25, 1))
    assert neighbor_consistency(x * scale, g) == pytest.approx(neighbor_consistency(x, g), abs=1e-9)


def test_metrics_are_bitwise_repeatable(small_sbm):
    graph, _ = small_sbm
    x = np.random.default_rng(0).normal(size=(graph.num_nodes, 5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = embedding_metrics(x, graph)
        b = embedding_metrics(x, graph)
    assert a.to_dict() == b.to_dict()
    assert MetricBundle.from_dict(a.to_dict()) == a
    assert a.csv_row().count(",") == 7
