import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poisonbench.defense import PurifyConfig, edge_cosine, purify
from poisonbench.errors import ConfigError, ValidationError

from conftest import random_graph


def test_threshold_minus_one_keeps_everything(small_sbm):
    g, _ = small_sbm
    x = np.random.default_rng(0).normal(size=(g.num_nodes, 4))
    assert purify(g, x, PurifyConfig(threshold=-1.0)) == g


def test_identical_embeddings_keep_everything(small_sbm):
    g, _ = small_sbm
    assert purify(g, np.ones((g.num_nodes, 3)), PurifyConfig(threshold=0.5)) == g


def test_threshold_removes_exactly_low_cosine(small_sbm):
    g, _ = small_sbm
    x = np.random.default_rng(1).normal(size=(g.num_nodes, 4))
    out = purify(g, x, PurifyConfig(threshold=0.2))
    cos = edge_cosine(x, g.edges)
    assert out.edge_set() == {tuple(e) for e, c in zip(g.edges.tolist(), cos) if c >= 0.2}


@pytest.mark.filterwarnings("ignore:purification removed every edge")
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1, 1))
def test_purify_idempotent_and_deletion_only(seed, thr):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 20, 0.3)
    x = rng.normal(size=(20, 3))
    once = purify(g, x, PurifyConfig(threshold=thr))
    assert purify(once, x, PurifyConfig(threshold=thr)) == once
    assert once.edge_set() <= g.edge_set()


def test_quantile_mode_count_and_ties(small_sbm):
    g, _ = small_sbm
    x = np.random.default_rng(2).normal(size=(g.num_nodes, 4))
    out = purify(g, x, PurifyConfig(mode="quantile", quantile=0.25))
    assert g.num_edges - out.num_edges == int(0.25 * g.num_edges)
    # with all cosines tied, the first edges in (u, v) order go
    flat = purify(g, np.ones((g.num_nodes, 2)), PurifyConfig(mode="quantile", quantile=0.1))
    k = int(0.1 * g.num_edges)
    assert np.array_equal(flat.edges, g.edges[k:])


def test_default_config():
    assert PurifyConfig.default(0.4) == PurifyConfig(mode="quantile", quantile=0.4)
    assert PurifyConfig.default() == PurifyConfig(mode="fixed_threshold", threshold=0.1)
    with pytest.raises(ConfigError):
        PurifyConfig(mode="magic")


def test_row_mismatch(small_sbm):
    g, _ = small_sbm
    with pytest.raises(ValidationError):
        purify(g, np.ones((3, 2)))


def test_all_removed_warns(small_sbm):
    g, _ = small_sbm
    x = np.random.default_rng(0).normal(size=(g.num_nodes, 3))
    with pytest.warns(RuntimeWarning):
        out = purify(g, x, PurifyConfig(threshold=1.0))
    assert out.num_edges == 0
