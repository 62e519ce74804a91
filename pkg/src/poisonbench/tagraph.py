"""Text-attributed graphs: data model, file I/O, synthetic generation, sampling and splits.

A :class:`TextAttributedGraph` is an undirected simple graph whose nodes carry a
raw text and a class label.  Edges are stored canonically as an ``(M, 2)`` array
of ``(u, v)`` pairs with ``u < v``, sorted lexicographically, which makes equality,
hashing and set operations on edge lists cheap and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ParseError, ValidationError

logger = logging.getLogger(__name__)

EDGE_FILE = "edges.tsv"
TEXT_FILE = "texts.txt"
LABEL_FILE = "labels.txt"
MANIFEST_FILE = "manifest.json"


def canonical_edges(edges, num_nodes):
    """Symmetrize, deduplicate and drop self-loops from an edge list.

    Parameters
    ----------
    edges : array-like of shape (M, 2)
        Possibly directed pairs, duplicates allowed.
    num_nodes : int
        Valid ids are ``0 .. num_nodes - 1``.

    Returns
    -------
    edges : np.ndarray of shape (M', 2)
        Unique ``(u, v)`` pairs with ``u < v`` in lexicographic order.
    num_duplicates : int
        Input rows that collapsed onto an already present undirected edge.
    num_self_loops : int
        Input rows with ``u == v``.
    """
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
        bad = arr[(arr < 0).any(axis=1) | (arr >= num_nodes).any(axis=1)][0]
        raise ValidationError(
            f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {num_nodes})"
        )
    loops = arr[:, 0] == arr[:, 1]
    arr = arr[~loops]
    arr = np.sort(arr, axis=1)
    uniq = np.unique(arr, axis=0) if len(arr) else arr.reshape(0, 2)
    return uniq, int(len(arr) - len(uniq)), int(loops.sum())


@dataclass(frozen=True, eq=False)
class TextAttributedGraph:
    """Undirected simple graph with one text and one label per node.

    Instances are immutable; the edge and label arrays are flagged read-only.
    Constructing from a raw edge list canonicalizes it (see :func:`canonical_edges`).
    """

    num_nodes: int
    edges: np.ndarray
    texts: tuple
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 1:
            raise ValidationError("a graph needs at least one node")
        edges, _, _ = canonical_edges(self.edges, n)
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        texts = tuple(str(t) for t in self.texts)
        if len(texts) != n or len(labels) != n:
            raise ValidationError(
                f"expected {n} texts and labels, got {len(texts)} and {len(labels)}"
            )
        if self.num_classes < 1:
            raise ValidationError("num_classes must be positive")
        bad = np.flatnonzero((labels < 0) | (labels >= self.num_classes))
        if len(bad):
            i = int(bad[0])
            raise ValidationError(
                f"node {i} has label {labels[i]} outside [0, {self.num_classes})"
            )
        edges.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "num_classes", int(self.num_classes))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "texts", texts)
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other):
        if not isinstance(other, TextAttributedGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.num_classes == other.num_classes
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.labels, other.labels)
            and self.texts == other.texts
        )

    __hash__ = None

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def adjacency(self):
        """Symmetric 0/1 adjacency as a CSR matrix (float64)."""
        n = self.num_nodes
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        adj = sp.coo_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n)).tocsr()
        adj.sort_indices()
        return adj

    def dense_adjacency(self, dtype=np.float64):
        return self.adjacency.toarray().astype(dtype)

    @cached_property
    def degrees(self):
        deg = np.bincount(self.edges.ravel(), minlength=self.num_nodes)
        deg.setflags(write=False)
        return deg

    def neighbors(self, node):
        adj = self.adjacency
        return adj.indices[adj.indptr[node] : adj.indptr[node + 1]]

    def edge_set(self):
        return {(int(u), int(v)) for u, v in self.edges}

    def has_edge(self, u, v):
        u, v = (u, v) if u < v else (v, u)
        nbrs = self.neighbors(u)
        i = np.searchsorted(nbrs, v)
        return bool(i < len(nbrs) and nbrs[i] == v)

    def with_edges(self, edges):
        return TextAttributedGraph(self.num_nodes, edges, self.texts, self.labels, self.num_classes)

    def with_texts(self, texts):
        return TextAttributedGraph(self.num_nodes, self.edges, texts, self.labels, self.num_classes)

    def subgraph(self, nodes):
        """Induced subgraph over ``nodes`` (kept in ascending id order, reindexed densely)."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        remap = np.full(self.num_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        u, v = remap[self.edges[:, 0]], remap[self.edges[:, 1]]
        keep = (u >= 0) & (v >= 0)
        return TextAttributedGraph(
            len(nodes),
            np.column_stack([u[keep], v[keep]]),
            [self.texts[i] for i in nodes],
            self.labels[nodes],
            self.num_classes,
        )

    def content_hash(self):
        h = hashlib.sha256()
        h.update(f"{self.num_nodes}:{self.num_classes}".encode())
        h.update(self.edges.astype("<i8").tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        for t in self.texts:
            h.update(t.encode("utf-8") + b"\x00")
        return h.hexdigest()


@dataclass(frozen=True)
class NodeSplit:
    """Disjoint train / validation / test node-id sets (sorted arrays)."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        parts = []
        for name in ("train", "val", "test"):
            arr = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            parts.append(arr)
        if len(self.train) == 0:
            raise ValidationError("train split is empty")
        joined = np.concatenate(parts)
        if len(np.unique(joined)) != len(joined):
            raise ValidationError("train/val/test splits overlap")
        if len(joined) and joined.min() < 0:
            raise ValidationError("negative node id in split")

    def __eq__(self, other):
        if not isinstance(other, NodeSplit):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("train", "val", "test")
        )

    __hash__ = None

    @property
    def sizes(self):
        return len(self.train), len(self.val), len(self.test)

    @property
    def unlabeled(self):
        return np.union1d(self.val, self.test)

    def check(self, num_nodes):
        for name in ("train", "val", "test"):
            arr = getattr(self, name)
            if len(arr) and arr.max() >= num_nodes:
                raise ValidationError(f"{name} split references node {arr.max()} >= {num_nodes}")

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("train", "val", "test")}

    @classmethod
    def from_dict(cls, d):
        return cls(d["train"], d["val"], d["test"])


@dataclass(frozen=True)
class SbmParams:
    """Parameters of the synthetic text-attributed stochastic block model.

    Each class owns a disjoint slice of ``vocab_size // (num_classes + 1)`` words;
    the remaining words form the shared slice.  A node's text has ``words_per_node``
    tokens, each drawn from the node's class slice with probability
    ``class_word_skew`` and from the shared slice otherwise.
    """

    num_nodes: int = 1000
    num_classes: int = 5
    intra_edge_prob: float = 0.02
    inter_edge_prob: float = 0.002
    vocab_size: int = 600
    words_per_node: int = 30
    class_word_skew: float = 0.15
    seed: int = 0

    def validate(self):
        problems = []
        if self.num_nodes < 1:
            problems.append("num_nodes must be >= 1")
        if self.num_classes < 1:
            problems.append("num_classes must be >= 1")
        for name in ("intra_edge_prob", "inter_edge_prob", "class_word_skew"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                problems.append(f"{name}={p} not in [0, 1]")
        if self.intra_edge_prob <= self.inter_edge_prob and self.num_classes > 1:
            problems.append("intra_edge_prob must exceed inter_edge_prob")
        if self.vocab_size < self.num_classes + 1:
            problems.append("vocab_size must leave room for one word per class plus a shared slice")
        if self.words_per_node < 0:
            problems.append("words_per_node must be non-negative")
        if problems:
            raise ConfigError("; ".join(problems))

    def expected_edge_homophily(self):
        n, c = self.num_nodes, self.num_classes
        intra = self.intra_edge_prob * (n / c - 1)
        inter = self.inter_edge_prob * n * (c - 1) / c
        return intra / (intra + inter)


_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


def synthetic_word(index):
    """Deterministic pronounceable token for vocabulary slot ``index`` (length >= 4)."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    base = len(syllables)
    parts = []
    i = index
    while True:
        parts.append(syllables[i % base])
        i //= base
        if i == 0:
            break
    while len(parts) < 2:
        parts.append(syllables[0])
    return "".join(reversed(parts))


def generate_synthetic_tag(params):
    """Sample a text-attributed stochastic block model.

    Class sizes are balanced (differ by at most one) and class ids are assigned to
    nodes by a seeded permutation.  Same parameters and seed give an identical graph.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    n, c = params.num_nodes, params.num_classes
    labels = rng.permutation(np.arange(n) % c)

    iu, iv = np.triu_indices(n, k=1)
    same = labels[iu] == labels[iv]
    probs = np.where(same, params.intra_edge_prob, params.inter_edge_prob)
    keep = rng.random(len(iu)) < probs
    edges = np.column_stack([iu[keep], iv[keep]])

    words = [synthetic_word(i) for i in range(params.vocab_size)]
    slice_size = params.vocab_size // (c + 1)
    shared_lo = c * slice_size
    texts = []
    for y in labels:
        from_class = rng.random(params.words_per_node) < params.class_word_skew
        cls_words = rng.integers(y * slice_size, (y + 1) * slice_size, params.words_per_node)
        shared = rng.integers(shared_lo, params.vocab_size, params.words_per_node)
        idx = np.where(from_class, cls_words, shared)
        texts.append(" ".join(words[i] for i in idx))
    return TextAttributedGraph(n, edges, texts, labels, c)


def sample_subset(graph, seed_nodes, fanout, hops, seed):
    """Node-sampling subset: seeds plus up to ``fanout`` sampled neighbors per node per hop.

    ``seed_nodes`` is either a count of uniformly drawn seeds or an explicit
    array of seed ids.  Returns the induced subgraph over every visited node, reindexed densely in
    ascending original-id order.
    """
    if hops < 1:
        raise ConfigError("hops must be >= 1")
    if fanout < 0:
        raise ConfigError("fanout must be non-negative")
    rng = np.random.default_rng(seed)
    if np.ndim(seed_nodes):
        seeds = np.unique(np.asarray(seed_nodes, dtype=np.int64))
        if len(seeds) == 0 or seeds[0] < 0 or seeds[-1] >= graph.num_nodes:
            raise ConfigError("explicit seed nodes must be valid, non-empty node ids")
    else:
        if not 1 <= seed_nodes <= graph.num_nodes:
            raise ConfigError(f"seed_nodes must be in [1, {graph.num_nodes}]")
        seeds = np.sort(rng.choice(graph.num_nodes, size=seed_nodes, replace=False))
    visited = set(seeds.tolist())
    frontier = seeds
    for _ in range(hops):
        nxt = []
        for node in frontier:
            nbrs = graph.neighbors(node)
            if len(nbrs) > fanout:
                nbrs = np.sort(rng.choice(nbrs, size=fanout, replace=False))
            for j in nbrs.tolist():
                if j not in visited:
                    visited.add(j)
                    nxt.append(j)
        frontier = np.array(sorted(nxt), dtype=np.int64)
    return graph.subgraph(sorted(visited))


def split_nodes(graph_or_n, train_frac=0.1, val_frac=0.1, seed=0):
    """Seeded uniform train/val/test split with floor rounding; remainder goes to test."""
    n = graph_or_n if isinstance(graph_or_n, (int, np.integer)) else graph_or_n.num_nodes
    if train_frac < 0 or val_frac < 0 or train_frac + val_frac >= 1:
        raise ConfigError("need train_frac, val_frac >= 0 and train_frac + val_frac < 1")
    # guard against 0.29 * 100 == 28.999...
    n_train = math.floor(train_frac * n + 1e-9)
    n_val = math.floor(val_frac * n + 1e-9)
    if n_train == 0:
        raise ConfigError(f"train_frac={train_frac} leaves the train split empty for N={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return NodeSplit(perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :])


# ---------------------------------------------------------------------------
# file I/O

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPE_RE = re.compile(r"\\(.)")
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_text(text):
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def unescape_text(line):
    return _UNESCAPE_RE.sub(lambda m: _UNESCAPES.get(m.group(1), m.group(0)), line)


@dataclass
class LoadReport:
    num_input_edges: int = 0
    duplicates: int = 0
    self_loops: int = 0
    warnings: list = field(default_factory=list)


def _read_lines(path):
    with open(path, encoding="utf-8", newline="\n") as fh:
        return fh.read().split("\n")


def _read_labels(path):
    lines = _read_lines(path)
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("missing header 'C=<num_classes>'", path, 1)
    m = re.fullmatch(r"\s*C\s*=\s*(\d+)\s*", lines[0])
    if not m:
        raise ParseError(f"expected header 'C=<num_classes>', got {lines[0]!r}", path, 1)
    num_classes = int(m.group(1))
    labels = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            labels.append(int(line.strip()))
        except ValueError:
            raise ParseError(f"expected an integer label, got {line!r}", path, lineno) from None
    return num_classes, labels


def _read_texts(path):
    lines = _read_lines(path)
    if lines and lines[-1] == "":
        lines.pop()
    return [unescape_text(line) for line in lines]


def _read_edges(path, num_nodes):
    pairs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'u<TAB>v', got {line!r}", path, lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", path, lineno) from None
        for x in (u, v):
            if not 0 <= x < num_nodes:
                raise ValidationError(
                    f"{path}:{lineno}: node id {x} outside [0, {num_nodes})"
                )
        pairs.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_graph(edge_path, text_path, label_path, with_report=False):
    """Read a graph from the three-file text format.

    Directed input is symmetrized, duplicates merged and self-loops dropped; the
    counts are logged and, with ``with_report=True``, returned as a :class:`LoadReport`.
    """
    num_classes, labels = _read_labels(label_path)
    texts = _read_texts(text_path)
    if len(texts) != len(labels):
        raise ValidationError(
            f"{text_path} has {len(texts)} lines but {label_path} has {len(labels)} labels"
        )
    raw = _read_edges(edge_path, len(labels))
    edges, dupes, loops = canonical_edges(raw, len(labels))
    report = LoadReport(num_input_edges=len(raw), duplicates=dupes, self_loops=loops)
    if loops:
        report.warnings.append(f"dropped {loops} self-loop(s)")
        logger.warning("%s: dropped %d self-loop(s)", edge_path, loops)
    graph = TextAttributedGraph(len(labels), edges, texts, labels, num_classes)
    return (graph, report) if with_report else graph


def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_graph(graph, directory):
    """Write the edge, text and label files plus a JSON manifest into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / EDGE_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{u}\t{v}\n" for u, v in graph.edges)
    with open(d / TEXT_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(escape_text(t) + "\n" for t in graph.texts)
    with open(d / LABEL_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"C={graph.num_classes}\n")
        fh.writelines(f"{y}\n" for y in graph.labels)
    files = (EDGE_FILE, TEXT_FILE, LABEL_FILE)
    checksum = hashlib.sha256()
    for name in files:
        checksum.update(_sha256_file(d / name).encode())
    manifest = {
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "num_classes": graph.num_classes,
        "files": {"edges": EDGE_FILE, "texts": TEXT_FILE, "labels": LABEL_FILE},
        "checksum": checksum.hexdigest(),
    }
    (d / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_graph_dir(directory, verify=True):
    """Load a directory written by :func:`save_graph`, checking the manifest."""
    d = Path(directory)
    manifest_path = d / MANIFEST_FILE
    files = {"edges": EDGE_FILE, "texts": TEXT_FILE, "labels": LABEL_FILE}
    manifest = None
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        files.update(manifest.get("files", {}))
    graph = load_graph(d / files["edges"], d / files["texts"], d / files["labels"])
    if verify and manifest is not None:
        checksum = hashlib.sha256()
        for key in ("edges", "texts", "labels"):
            checksum.update(_sha256_file(d / files[key]).encode())
        if checksum.hexdigest() != manifest["checksum"]:
            raise ValidationError(f"{manifest_path}: checksum mismatch")
        if (graph.num_nodes, graph.num_edges) != (manifest["num_nodes"], manifest["num_edges"]):
            raise ValidationError(f"{manifest_path}: node/edge counts disagree with the files")
    return graph
