import numpy as np
import pytest

from poisonbench.tagraph import SbmParams, TextAttributedGraph, generate_synthetic_tag, split_nodes


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-seed experiments that take minutes")


@pytest.fixture(scope="session")
def small_sbm():
    params = SbmParams(num_nodes=120, num_classes=3, intra_edge_prob=0.12, inter_edge_prob=0.01,
                       vocab_size=120, words_per_node=20, class_word_skew=0.4, seed=11)
    graph = generate_synthetic_tag(params)
    return graph, split_nodes(graph, 0.2, 0.2, seed=0)


def random_graph(rng, n, p, num_classes=2, texts=None):
    iu, iv = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    labels = rng.integers(0, num_classes, n)
    texts = texts or ["w"] * n
    return TextAttributedGraph(n, np.column_stack([iu[keep], iv[keep]]), texts, labels, num_classes)


ACCEPTANCE_LINES = {}


def record_acceptance(number, ok, detail):
    """Store and print the one-line verdict of an acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
