import numpy as np
import pytest
import torch

from poisonbench.embed import EmbeddingMatrix, bow_embed, build_vocab
from poisonbench.errors import ValidationError
from poisonbench.tagraph import NodeSplit, TextAttributedGraph
from poisonbench.victims import (
    GnnArch,
    GraphPredictor,
    TrainConfig,
    evaluate_accuracy,
    forward,
    gat_attention,
    graph_tensors,
    init_params,
    load_model,
    normalize_adjacency,
    predict,
    save_model,
    train_gnn,
)

from conftest import random_graph


def dense_gcn_logits(adj, x, p):
    """Plain numpy two-layer GCN, written out directly."""
    a = adj + np.eye(len(adj))
    d = 1 / np.sqrt(a.sum(1))
    a_hat = d[:, None] * a * d[None, :]
    h = np.maximum(a_hat @ x @ p["W1"] + p["b1"], 0)
    return a_hat @ h @ p["W2"] + p["b2"]


def test_normalize_adjacency_small_cases():
    one = TextAttributedGraph(1, np.zeros((0, 2)), ["a"], [0], 1)
    assert normalize_adjacency(one).toarray().tolist() == [[1.0]]
    pair = TextAttributedGraph(2, [[0, 1]], ["a", "b"], [0, 0], 1)
    np.testing.assert_allclose(normalize_adjacency(pair).toarray(), [[0.5, 0.5], [0.5, 0.5]])


def test_normalize_adjacency_regular_rows_sum_to_one():
    n = 8
    ring = TextAttributedGraph(n, [[i, (i + 1) % n] for i in range(n)], ["a"] * n, [0] * n, 1)
    np.testing.assert_allclose(normalize_adjacency(ring).sum(axis=1).A.ravel(), 1.0)


def test_gcn_forward_matches_dense_reference():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 15, 0.3)
    x = rng.normal(size=(15, 6))
    arch = GnnArch("gcn", hidden=8, dropout=0.0)
    params = init_params(arch, 6, 2, torch.Generator().manual_seed(1), torch.float64)
    ops = graph_tensors("gcn", 15, g.edges, torch.float64)
    got = forward(arch, params, ops, torch.tensor(x)).numpy()
    want = dense_gcn_logits(g.dense_adjacency(), x, {k: v.numpy() for k, v in params.items()})
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("kind", ["gcn", "sage", "gat"])
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(3)
    g = random_graph(rng, 10, 0.35, num_classes=3)
    x = torch.tensor(rng.normal(size=(10, 4)))
    y = torch.tensor(g.labels)
    arch = GnnArch(kind, hidden=8, dropout=0.0, heads_layer1=2)
    params = init_params(arch, 4, 3, torch.Generator().manual_seed(0), torch.float64)
    ops = graph_tensors(kind, 10, g.edges, torch.float64)

    def loss_fn():
        return torch.nn.functional.cross_entropy(forward(arch, params, ops, x), y)

    for t in params.values():
        t.requires_grad_(True)
    loss_fn().backward()
    eps = 1e-6
    worst = 0.0
    with torch.no_grad():
        for name, t in params.items():
            flat = t.view(-1)
            for i in range(0, flat.numel(), max(1, flat.numel() // 15)):
                old = flat[i].item()
                flat[i] = old + eps
                up = loss_fn().item()
                flat[i] = old - eps
                down = loss_fn().item()
                flat[i] = old
                fd = (up - down) / (2 * eps)
                an = t.grad.view(-1)[i].item()
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    assert worst < 1e-4


def test_gat_attention_normalized():
    rng = np.random.default_rng(5)
    g = random_graph(rng, 20, 0.2)
    ops = graph_tensors("gat", 20, g.edges, torch.float64)
    gen = torch.Generator().manual_seed(0)
    proj = torch.randn((20, 4, 3), generator=gen, dtype=torch.float64)
    att_s = torch.randn((4, 3), generator=gen, dtype=torch.float64)
    att_d = torch.randn((4, 3), generator=gen, dtype=torch.float64)
    alpha = gat_attention(proj, att_s, att_d, ops["src"], ops["dst"], 20, 0.2)
    sums = torch.zeros((20, 4), dtype=torch.float64).index_add_(0, ops["dst"], alpha)
    np.testing.assert_allclose(sums.numpy(), 1.0, atol=1e-6)
    assert torch.all(alpha > 0)


def test_sage_neighbor_order_invariance():
    rng = np.random.default_rng(7)
    g = random_graph(rng, 12, 0.4)
    arch = GnnArch("sage", hidden=8, dropout=0.0)
    params = init_params(arch, 5, 2, torch.Generator().manual_seed(2), torch.float64)
    x = torch.tensor(rng.normal(size=(12, 5)))
    a = forward(arch, params, graph_tensors("sage", 12, g.edges, torch.float64), x)
    shuffled = g.edges[rng.permutation(len(g.edges))][:, ::-1]
    b = forward(arch, params, graph_tensors("sage", 12, shuffled, torch.float64), x)
    np.testing.assert_allclose(a.numpy(), b.numpy(), atol=1e-12)


@pytest.mark.parametrize("kind", ["gcn", "gat", "sage"])
def test_permutation_equivariance(kind):
    rng = np.random.default_rng(11)
    g = random_graph(rng, 20, 0.25)
    x = rng.normal(size=(20, 6))
    arch = GnnArch(kind, hidden=8, dropout=0.0, heads_layer1=2)
    params = init_params(arch, 6, 2, torch.Generator().manual_seed(4), torch.float64)
    perm = rng.permutation(20)
    inv = np.argsort(perm)
    logits = forward(arch, params, graph_tensors(kind, 20, g.edges, torch.float64), torch.tensor(x))
    permuted_edges = inv[g.edges]
    logits_p = forward(arch, params, graph_tensors(kind, 20, permuted_edges, torch.float64),
                       torch.tensor(x[perm]))
    np.testing.assert_allclose(logits_p.numpy(), logits.numpy()[perm], atol=1e-10)


def test_two_node_separable_toy():
    g = TextAttributedGraph(2, np.zeros((0, 2)), ["a", "b"], [0, 1], 2)
    feats = EmbeddingMatrix(np.array([[-1.0], [1.0]]), "toy")
    split = NodeSplit([0, 1], [], [])
    model = train_gnn(GnnArch("gcn", hidden=16, dropout=0.0), g, feats, split,
                      TrainConfig(epochs=200, learning_rate=0.05))
    assert evaluate_accuracy(model, g, feats, [0, 1]) == 1.0


def test_zero_features_give_majority_rate(small_sbm):
    graph, split = small_sbm
    feats = EmbeddingMatrix(np.zeros((graph.num_nodes, 4)), "zeros")
    model = train_gnn(GnnArch("gcn", hidden=16), graph, feats, split, TrainConfig(epochs=50))
    pred, _ = predict(model, graph, feats)
    assert len(np.unique(pred)) == 1
    majority = np.bincount(graph.labels[split.val]).max() / len(split.val)
    assert model.val_accuracy <= majority + 1e-12


def _bow(graph):
    return bow_embed(graph.texts, build_vocab(graph.texts))


@pytest.mark.parametrize("kind", ["gcn", "gat", "sage"])
def test_training_is_bitwise_reproducible(small_sbm, kind):
    graph, split = small_sbm
    feats = _bow(graph)
    arch = GnnArch(kind, hidden=32)
    cfg = TrainConfig(epochs=20, seed=3)
    a = train_gnn(arch, graph, feats, split, cfg)
    b = train_gnn(arch, graph, feats, split, cfg)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    c = train_gnn(arch, graph, feats, split, TrainConfig(epochs=20, seed=4))
    assert not np.array_equal(a.params[next(iter(a.params))], c.params[next(iter(c.params))])


def test_predict_contract(small_sbm):
    graph, split = small_sbm
    feats = _bow(graph)
    model = train_gnn(GnnArch("gat", hidden=16, heads_layer1=4), graph, feats, split,
                      TrainConfig(epochs=15))
    pred, probs = predict(model, graph, feats)
    np.testing.assert_allclose(probs.sum(1), 1.0, atol=1e-6)
    assert np.array_equal(pred, probs.argmax(1))
    assert np.array_equal(GraphPredictor(model, feats)(graph.edges), pred)


def test_evaluate_accuracy_counts(small_sbm):
    graph, split = small_sbm
    feats = _bow(graph)
    model = train_gnn(GnnArch("gcn", hidden=16), graph, feats, split, TrainConfig(epochs=30))
    pred, _ = predict(model, graph, feats)
    right = np.flatnonzero(pred == graph.labels)
    wrong = np.flatnonzero(pred != graph.labels)
    assert evaluate_accuracy(model, graph, feats, right) == 1.0
    if len(wrong):
        assert evaluate_accuracy(model, graph, feats, wrong[:1]) == 0.0
        nodes = np.r_[right[:3], wrong[:2]] if len(wrong) >= 2 else None
        if nodes is not None:
            assert evaluate_accuracy(model, graph, feats, nodes) == pytest.approx(0.6)
    with pytest.raises(ValidationError):
        evaluate_accuracy(model, graph, feats, [])


def test_model_roundtrip(tmp_path, small_sbm):
    graph, split = small_sbm
    feats = _bow(graph)
    model = train_gnn(GnnArch("sage", hidden=16), graph, feats, split, TrainConfig(epochs=10, seed=9))
    save_model(model, tmp_path / "m")
    loaded = load_model(tmp_path / "m")
    assert loaded.arch == model.arch and loaded.seed == 9
    for k in model.params:
        assert np.array_equal(loaded.params[k], model.params[k])
    assert np.array_equal(predict(loaded, graph, feats)[0], predict(model, graph, feats)[0])


def test_shape_mismatch_rejected(small_sbm):
    graph, split = small_sbm
    with pytest.raises(ValidationError):
        train_gnn(GnnArch("gcn"), graph, np.zeros((3, 2)), split)
