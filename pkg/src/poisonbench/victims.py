"""GNN victim models (GCN, GAT, GraphSAGE): training, prediction and persistence.

Models are kept functional: a :class:`VictimModel` is an architecture descriptor
plus a dict of named weight arrays, and :func:`forward` evaluates it on a graph.
Torch supplies autograd and the Adam optimizer; everything crossing the public
boundary is numpy.
"""

from __future__ import annotations

import contextlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import torch

from .errors import ConfigError, DivergenceError, ValidationError

ARCH_KINDS = ("gcn", "gat", "sage")


@dataclass(frozen=True)
class GnnArch:
    kind: str = "gcn"
    layers: int = 2
    hidden: int = 256
    dropout: float = 0.5
    heads_layer1: int = 8
    heads_layer2: int = 1
    sage_aggregator: str = "mean"
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise ConfigError(f"unknown architecture {self.kind!r}; choose from {ARCH_KINDS}")
        if self.layers != 2:
            raise ConfigError("only two-layer victims are supported")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.sage_aggregator != "mean":
            raise ConfigError("only the mean aggregator is supported")
        if self.kind == "gat" and self.hidden % self.heads_layer1:
            raise ConfigError("GAT hidden size must be divisible by heads_layer1")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 300
    weight_decay: float = 5e-4
    early_stop_patience: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass(eq=False)
class VictimModel:
    arch: GnnArch
    params: dict
    in_dim: int
    num_classes: int
    seed: int
    val_accuracy: float = float("nan")
    epochs_run: int = 0
    best_epoch: int = 0
    history: list = field(default_factory=list, repr=False)

    def param_order(self):
        return list(self.params)


@contextlib.contextmanager
def single_thread():
    prev = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


# ---------------------------------------------------------------------------
# graph operators


def normalize_adjacency(graph_or_adj):
    """Symmetric GCN normalization ``D^-1/2 (A + I) D^-1/2`` as a CSR matrix.

    Accepts a :class:`~poisonbench.tagraph.TextAttributedGraph` or any square
    (sparse or dense) adjacency.
    """
    adj = getattr(graph_or_adj, "adjacency", graph_or_adj)
    adj = sp.csr_matrix(adj, dtype=np.float64)
    a_tilde = adj + sp.identity(adj.shape[0], format="csr")
    d_inv_sqrt = 1.0 / np.sqrt(np.asarray(a_tilde.sum(axis=1)).ravel())
    D = sp.diags(d_inv_sqrt)
    out = (D @ a_tilde @ D).tocsr()
    out.sort_indices()
    return out


def _edge_arrays(edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]]


def _torch_sparse(mat, dtype):
    coo = sp.coo_matrix(mat)
    idx = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    vals = torch.from_numpy(coo.data).to(dtype)
    return torch.sparse_coo_tensor(idx, vals, coo.shape, check_invariants=False).coalesce()


def graph_tensors(kind, num_nodes, edges, dtype=torch.float32):
    """Precompute the message-passing operator one architecture needs."""
    src, dst = _edge_arrays(edges)
    if kind == "gcn":
        adj = sp.csr_matrix((np.ones(len(src)), (dst, src)), shape=(num_nodes, num_nodes))
        return {"adj": _torch_sparse(normalize_adjacency(adj), dtype)}
    if kind == "sage":
        adj = sp.csr_matrix((np.ones(len(src)), (dst, src)), shape=(num_nodes, num_nodes))
        deg = np.asarray(adj.sum(axis=1)).ravel()
        mean = sp.diags(np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)) @ adj
        return {"mean": _torch_sparse(mean, dtype)}
    loops = np.arange(num_nodes)
    return {
        "src": torch.from_numpy(np.r_[src, loops]),
        "dst": torch.from_numpy(np.r_[dst, loops]),
        "n": num_nodes,
    }


def _glorot(shape, gen, dtype):
    fan_in, fan_out = shape[0], shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return (torch.rand(shape, generator=gen, dtype=dtype) * 2 - 1) * bound


def init_params(arch, in_dim, num_classes, gen, dtype=torch.float32):
    h = arch.hidden
    p = {}
    if arch.kind == "gcn":
        p["W1"] = _glorot((in_dim, h), gen, dtype)
        p["b1"] = torch.zeros(h, dtype=dtype)
        p["W2"] = _glorot((h, num_classes), gen, dtype)
        p["b2"] = torch.zeros(num_classes, dtype=dtype)
    elif arch.kind == "sage":
        p["W1_neigh"] = _glorot((in_dim, h), gen, dtype)
        p["W1_self"] = _glorot((in_dim, h), gen, dtype)
        p["b1"] = torch.zeros(h, dtype=dtype)
        p["W2_neigh"] = _glorot((h, num_classes), gen, dtype)
        p["W2_self"] = _glorot((h, num_classes), gen, dtype)
        p["b2"] = torch.zeros(num_classes, dtype=dtype)
    else:
        h1, hh = arch.heads_layer1, h // arch.heads_layer1
        h2 = arch.heads_layer2
        p["W1"] = _glorot((in_dim, h1 * hh), gen, dtype)
        p["att_src1"] = _glorot((h1, hh), gen, dtype)
        p["att_dst1"] = _glorot((h1, hh), gen, dtype)
        p["b1"] = torch.zeros(h1 * hh, dtype=dtype)
        p["W2"] = _glorot((h, h2 * num_classes), gen, dtype)
        p["att_src2"] = _glorot((h2, num_classes), gen, dtype)
        p["att_dst2"] = _glorot((h2, num_classes), gen, dtype)
        p["b2"] = torch.zeros(num_classes, dtype=dtype)
    return p


def _dropout(x, rate, training, gen):
    if not training or rate == 0.0:
        return x
    keep = (torch.rand(x.shape, generator=gen, dtype=x.dtype) >= rate).to(x.dtype)
    return x * keep / (1.0 - rate)


def gat_attention(proj, att_src, att_dst, src, dst, n, negative_slope):
    """Attention coefficients per (edge, head); they sum to one over each node's in-edges.

    ``proj`` has shape ``(N, heads, F)``; returns ``(E, heads)``.
    """
    a_src = (proj * att_src).sum(-1)
    a_dst = (proj * att_dst).sum(-1)
    scores = torch.nn.functional.leaky_relu(a_src[src] + a_dst[dst], negative_slope)
    heads = scores.shape[1]
    smax = torch.full((n, heads), -torch.inf, dtype=scores.dtype)
    smax = smax.scatter_reduce(0, dst[:, None].expand(-1, heads), scores, "amax", include_self=True)
    ex = torch.exp(scores - smax[dst])
    denom = torch.zeros((n, heads), dtype=scores.dtype).index_add_(0, dst, ex)
    return ex / denom[dst]


def _gat_layer(x_proj, att_src, att_dst, bias, g, heads, concat, slope):
    n = g["n"]
    proj = x_proj.view(n, heads, -1)
    alpha = gat_attention(proj, att_src, att_dst, g["src"], g["dst"], n, slope)
    msg = proj[g["src"]] * alpha[..., None]
    out = torch.zeros_like(proj).index_add_(0, g["dst"], msg)
    out = out.reshape(n, -1) if concat else out.mean(dim=1)
    return out + bias


def first_layer_projection(arch, params, x):
    """Graph-independent part of layer one (no dropout), reusable across graphs."""
    if arch.kind == "sage":
        return x @ params["W1_neigh"], x @ params["W1_self"]
    return x @ params["W1"]


def forward_from_projection(arch, params, proj, g, training=False, gen=None):
    if arch.kind == "gcn":
        h = torch.relu(torch.sparse.mm(g["adj"], proj) + params["b1"])
        h = _dropout(h, arch.dropout, training, gen)
        return torch.sparse.mm(g["adj"], h @ params["W2"]) + params["b2"]
    if arch.kind == "sage":
        neigh, self_ = proj
        h = torch.relu(torch.sparse.mm(g["mean"], neigh) + self_ + params["b1"])
        h = _dropout(h, arch.dropout, training, gen)
        return (
            torch.sparse.mm(g["mean"], h @ params["W2_neigh"]) + h @ params["W2_self"] + params["b2"]
        )
    slope = arch.negative_slope
    h = _gat_layer(proj, params["att_src1"], params["att_dst1"], params["b1"], g,
                   arch.heads_layer1, True, slope)
    h = torch.nn.functional.elu(h)
    h = _dropout(h, arch.dropout, training, gen)
    return _gat_layer(h @ params["W2"], params["att_src2"], params["att_dst2"], params["b2"], g,
                      arch.heads_layer2, False, slope)


def forward(arch, params, g, x, training=False, gen=None):
    """Logits of a two-layer victim; dropout is applied only when ``training``."""
    x = _dropout(x, arch.dropout, training, gen)
    return forward_from_projection(arch, params, first_layer_projection(arch, params, x), g,
                                   training, gen)


# ---------------------------------------------------------------------------
# training / inference


def _as_tensor(features, dtype=torch.float32):
    vals = getattr(features, "values", features)
    return torch.tensor(np.asarray(vals), dtype=dtype)


def train_gnn(arch, graph, features, split, cfg=TrainConfig()):
    """Fit a victim with Adam on the train nodes, early-stopping on validation accuracy.

    The returned weights are those of the best validation epoch.  Results are
    bitwise reproducible for a fixed seed (training runs single-threaded).
    """
    vals = getattr(features, "values", features)
    if vals.shape[0] != graph.num_nodes:
        raise ValidationError(f"features have {vals.shape[0]} rows, graph has {graph.num_nodes} nodes")
    split.check(graph.num_nodes)
    with single_thread():
        gen = torch.Generator().manual_seed(int(cfg.seed))
        x = _as_tensor(features)
        y = torch.tensor(graph.labels)
        g = graph_tensors(arch.kind, graph.num_nodes, graph.edges)
        params = init_params(arch, x.shape[1], graph.num_classes, gen)
        for t in params.values():
            t.requires_grad_(True)
        opt = torch.optim.Adam(params.values(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        train_idx = torch.tensor(split.train)
        val_idx = torch.tensor(split.val)
        has_val = len(split.val) > 0

        best = (-1.0, 0, {k: v.detach().clone() for k, v in params.items()})
        history = []
        since_best = 0
        epoch = 0
        for epoch in range(1, cfg.epochs + 1):
            opt.zero_grad()
            logits = forward(arch, params, g, x, training=True, gen=gen)
            loss = torch.nn.functional.cross_entropy(logits[train_idx], y[train_idx])
            if not torch.isfinite(loss):
                raise DivergenceError(epoch, float(loss))
            loss.backward()
            opt.step()
            if has_val:
                with torch.no_grad():
                    pred = forward(arch, params, g, x).argmax(1)
                    val_acc = (pred[val_idx] == y[val_idx]).double().mean().item()
            else:
                val_acc = float("nan")
            history.append((loss.item(), val_acc))
            if not has_val or val_acc > best[0]:
                best = (val_acc, epoch, {k: v.detach().clone() for k, v in params.items()})
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.early_stop_patience:
                    break
    return VictimModel(
        arch=arch,
        params={k: v.numpy() for k, v in best[2].items()},
        in_dim=x.shape[1],
        num_classes=graph.num_classes,
        seed=int(cfg.seed),
        val_accuracy=best[0],
        epochs_run=epoch,
        best_epoch=best[1],
        history=history,
    )


def _torch_params(model, dtype=torch.float32):
    return {k: torch.tensor(v, dtype=dtype) for k, v in model.params.items()}


def _check_shapes(model, graph, features):
    vals = getattr(features, "values", features)
    if vals.shape != (graph.num_nodes, model.in_dim):
        raise ValidationError(
            f"features of shape {vals.shape} do not fit a model with input dim {model.in_dim} "
            f"on {graph.num_nodes} nodes"
        )


def predict_proba(model, graph, features):
    _check_shapes(model, graph, features)
    with single_thread(), torch.no_grad():
        g = graph_tensors(model.arch.kind, graph.num_nodes, graph.edges)
        logits = forward(model.arch, _torch_params(model), g, _as_tensor(features))
        probs = torch.softmax(logits.double(), dim=1).numpy()
    return probs


def predict(model, graph, features):
    """Class and softmax probability vector for every node (dropout disabled)."""
    probs = predict_proba(model, graph, features)
    return probs.argmax(axis=1), probs


def evaluate_accuracy(model, graph, features, node_set):
    nodes = np.asarray(node_set, dtype=np.int64)
    if len(nodes) == 0:
        raise ValidationError("node_set is empty")
    pred, _ = predict(model, graph, features)
    return float((pred[nodes] == graph.labels[nodes]).mean())


class GraphPredictor:
    """Repeated inference of one model on many graphs over the same node features.

    The graph-independent first-layer projection is computed once, which makes
    Monte-Carlo smoothing over thousands of sampled graphs affordable.
    """

    def __init__(self, model, features):
        self.model = model
        self._params = _torch_params(model)
        with torch.no_grad():
            self._proj = first_layer_projection(model.arch, self._params, _as_tensor(features))
        self.num_nodes = getattr(features, "values", features).shape[0]

    def logits(self, edges):
        with single_thread(), torch.no_grad():
            g = graph_tensors(self.model.arch.kind, self.num_nodes, edges)
            return forward_from_projection(self.model.arch, self._params, self._proj, g).numpy()

    def __call__(self, edges):
        return self.logits(edges).argmax(axis=1)


# ---------------------------------------------------------------------------
# persistence: JSON manifest + little-endian float32 blob

MODEL_MANIFEST = "model.json"
MODEL_BLOB = "weights.bin"


def save_model(model, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layout = []
    offset = 0
    with open(d / MODEL_BLOB, "wb") as fh:
        for name, arr in model.params.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(a.tobytes())
            layout.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.size
    manifest = {
        "arch": asdict(model.arch),
        "in_dim": model.in_dim,
        "num_classes": model.num_classes,
        "seed": model.seed,
        "val_accuracy": model.val_accuracy,
        "epochs_run": model.epochs_run,
        "best_epoch": model.best_epoch,
        "dtype": "float32-le",
        "layers": layout,
    }
    (d / MODEL_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return d


def load_model(directory):
    d = Path(directory)
    manifest = json.loads((d / MODEL_MANIFEST).read_text())
    blob = np.frombuffer((d / MODEL_BLOB).read_bytes(), dtype="<f4")
    params = {}
    for entry in manifest["layers"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        params[entry["name"]] = blob[start : start + size].reshape(entry["shape"]).astype(np.float32)
    return VictimModel(
        arch=GnnArch(**manifest["arch"]),
        params=params,
        in_dim=manifest["in_dim"],
        num_classes=manifest["num_classes"],
        seed=manifest["seed"],
        val_accuracy=manifest["val_accuracy"],
        epochs_run=manifest.get("epochs_run", 0),
        best_epoch=manifest.get("best_epoch", 0),
    )


def arch_from_name(kind, **overrides):
    return replace(GnnArch(kind=kind), **overrides)
