"""Structural poisoning: target selection, DICE, random baselines, meta-gradient and targeted attacks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import BudgetError, ConfigError, ValidationError
from ..surrogate import surrogate_predict, train_surrogate
from ..victims import single_thread
from .perturbation import BudgetSpec, PerturbationSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TargetSet:
    nodes: tuple
    min_degree: int
    sample_rate: float
    seed: int


def select_targets(graph, split, min_degree=10, sample_rate=1.0, seed=0):
    """Seeded sample of test nodes whose degree exceeds ``min_degree``.

    ``floor(sample_rate * #qualifying)`` nodes are drawn, but never fewer than one.
    """
    if not 0.0 < sample_rate <= 1.0:
        raise ConfigError("sample_rate must be in (0, 1]")
    test = np.asarray(split.test)
    qualifying = np.sort(test[graph.degrees[test] > min_degree])
    if len(qualifying) == 0:
        raise BudgetError(f"no test node has degree > {min_degree}")
    k = max(1, math.floor(sample_rate * len(qualifying) + 1e-9))
    rng = np.random.default_rng(seed)
    chosen = qualifying if k == len(qualifying) else np.sort(rng.choice(qualifying, k, replace=False))
    return TargetSet(tuple(int(t) for t in chosen), min_degree, sample_rate, seed)


def attacker_labels(graph, features, split, oracle_labels=False, seed=0):
    """Labels an attacker may use: true on the train split, surrogate predictions elsewhere."""
    if oracle_labels:
        return np.array(graph.labels)
    model = train_surrogate(graph, features, split.train, seed=seed)
    pred, _ = surrogate_predict(model, graph, features)
    pred[split.train] = graph.labels[split.train]
    return pred


def _require_rate(budget):
    if budget.structural_mode != "global_rate":
        raise ConfigError("this attack needs a global_rate budget")


def dice_attack(graph, labels, budget, seed):
    """Delete intra-class edges / insert inter-class edges (coin flip per unit of budget).

    ``labels`` is the attacker's view of the classes (see :func:`attacker_labels`).
    When one pool is exhausted the other move is used; if both are, the set is
    returned short with a warning.
    """
    _require_rate(budget)
    labels = np.asarray(labels)
    n_flips = budget.num_flips(graph.num_edges)
    pset = PerturbationSet("dice", seed, budget)
    rng = np.random.default_rng(seed)
    edges = graph.edges
    intra = [tuple(e) for e in edges[labels[edges[:, 0]] == labels[edges[:, 1]]].tolist()]
    rng.shuffle(intra)
    n = graph.num_nodes
    counts = np.bincount(labels, minlength=max(graph.num_classes, labels.max() + 1))
    inter_pairs = (counts.sum() ** 2 - (counts**2).sum()) // 2
    n_inter_edges = int((labels[edges[:, 0]] != labels[edges[:, 1]]).sum())
    existing = graph.edge_set()
    added = set()

    for _ in range(n_flips):
        free_inter = inter_pairs - n_inter_edges - len(added)
        remove = rng.random() < 0.5
        if remove and not intra:
            remove = False
        if not remove and free_inter <= 0:
            remove = bool(intra)
        if remove:
            u, v = intra.pop()
            pset.edge_flips.append((u, v, "remove"))
        elif free_inter > 0:
            while True:
                u, v = rng.integers(0, n, 2)
                if labels[u] == labels[v]:
                    continue
                key = (int(min(u, v)), int(max(u, v)))
                if key in existing or key in added:
                    continue
                break
            added.add(key)
            pset.edge_flips.append((key[0], key[1], "add"))
        else:
            pset.warnings.append(
                f"partial budget: {len(pset.edge_flips)} of {n_flips} flips, both pools exhausted"
            )
            break
    return pset


def random_attack(graph, budget, seed):
    """Flip uniformly random node pairs (mostly insertions on sparse graphs)."""
    _require_rate(budget)
    n = graph.num_nodes
    n_flips = budget.num_flips(graph.num_edges)
    total = n * (n - 1) // 2
    if n_flips > total:
        raise BudgetError("budget exceeds the number of node pairs")
    rng = np.random.default_rng(seed)
    existing = graph.edge_set()
    seen = set()
    pset = PerturbationSet("random", seed, budget)
    while len(pset.edge_flips) < n_flips:
        u, v = rng.integers(0, n, 2)
        if u == v:
            continue
        key = (int(min(u, v)), int(max(u, v)))
        if key in seen:
            continue
        seen.add(key)
        pset.edge_flips.append((key[0], key[1], "remove" if key in existing else "add"))
    return pset


def random_target_attack(graph, target, per_target_budget, seed):
    """Baseline for targeted attacks: flip random pairs incident to ``target``."""
    budget = BudgetSpec.targeted(per_target_budget)
    others = np.delete(np.arange(graph.num_nodes), target)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(others, size=min(per_target_budget, len(others)), replace=False)
    pset = PerturbationSet("random_target", seed, budget, info={"target": int(target)})
    for v in chosen.tolist():
        key = (min(target, v), max(target, v))
        pset.edge_flips.append((key[0], key[1], "remove" if graph.has_edge(*key) else "add"))
    return pset


# ---------------------------------------------------------------------------
# meta-gradient attack


def _normalize_dense(adj):
    a_tilde = adj + torch.eye(adj.shape[0], dtype=adj.dtype)
    d = a_tilde.sum(1).pow(-0.5)
    return d[:, None] * a_tilde * d[None, :]


def meta_gradient_attack(graph, features, labels, split, budget, seed, train_iters=100,
                         inner_lr=0.01, momentum=0.9, dtype=torch.float32):
    """Greedy edge flips scored by the meta-gradient of a self-training attacker loss.

    Each step unrolls ``train_iters`` momentum-SGD steps of the linearized GCN
    ``softmax(A_hat^2 X W + b)`` on the train nodes, differentiates the
    cross-entropy on the unlabeled nodes (against pseudo-labels) through the
    unrolled training with respect to the dense adjacency, and flips the feasible
    pair whose flip direction most increases that loss.

    ``labels`` supplies the train-node labels; the remaining labels are ignored
    and replaced by surrogate pseudo-labels.
    """
    _require_rate(budget)
    n_flips = budget.num_flips(graph.num_edges)
    pset = PerturbationSet("meta", seed, budget)
    if n_flips == 0:
        return pset
    labels = np.asarray(labels)
    train = np.asarray(split.train)
    unlabeled = np.setdiff1d(np.arange(graph.num_nodes), train)

    sur = train_surrogate(graph, features, train, labels=labels, seed=seed)
    pseudo, _ = surrogate_predict(sur, graph, features)
    pseudo[train] = labels[train]

    x_np = np.asarray(getattr(features, "values", features))
    n, c = graph.num_nodes, graph.num_classes
    with single_thread():
        gen = torch.Generator().manual_seed(int(seed))
        x = torch.tensor(x_np, dtype=dtype)
        bound = math.sqrt(6.0 / (x.shape[1] + c))
        w0 = (torch.rand((x.shape[1], c), generator=gen, dtype=dtype) * 2 - 1) * bound
        b0 = torch.zeros(c, dtype=dtype)
        y_train = torch.tensor(pseudo[train])
        y_unl = torch.tensor(pseudo[unlabeled])
        t_train = torch.tensor(train)
        t_unl = torch.tensor(unlabeled)

        adj = torch.tensor(graph.dense_adjacency(np.float64), dtype=dtype)
        flipped = torch.zeros((n, n), dtype=torch.bool)
        flipped.fill_diagonal_(True)
        is_labeled = torch.zeros(n, dtype=torch.bool)
        is_labeled[t_train] = True
        upper = torch.triu(torch.ones((n, n), dtype=torch.bool), diagonal=1)

        for step in range(n_flips):
            a_var = adj.clone().requires_grad_(True)
            a_hat = _normalize_dense(a_var)
            z = a_hat @ (a_hat @ x)
            z_train = z[t_train]
            w, b = w0.clone().requires_grad_(True), b0.clone().requires_grad_(True)
            vw, vb = torch.zeros_like(w), torch.zeros_like(b)
            for _ in range(train_iters):
                loss = torch.nn.functional.cross_entropy(z_train @ w + b, y_train)
                gw, gb = torch.autograd.grad(loss, (w, b), create_graph=True)
                vw = momentum * vw + gw
                vb = momentum * vb + gb
                w = w - inner_lr * vw
                b = b - inner_lr * vb
            atk_loss = torch.nn.functional.cross_entropy(z[t_unl] @ w + b, y_unl)
            (grad,) = torch.autograd.grad(atk_loss, a_var)
            grad = grad + grad.T

            score = grad * (1 - 2 * adj)
            deg = adj.sum(1)
            lonely = is_labeled & (deg <= 1)
            protect = (adj > 0) & (lonely[:, None] | lonely[None, :])
            feasible = upper & ~flipped & ~protect
            if not bool(feasible.any()):
                pset.warnings.append(
                    f"partial budget: {step} of {n_flips} flips, no feasible pair left"
                )
                break
            score = torch.where(feasible, score, torch.tensor(-torch.inf, dtype=dtype))
            idx = int(torch.argmax(score))
            u, v = divmod(idx, n)
            op = "remove" if adj[u, v] > 0 else "add"
            adj[u, v] = adj[v, u] = 1.0 - adj[u, v]
            flipped[u, v] = flipped[v, u] = True
            pset.edge_flips.append((u, v, op))
    return pset


# ---------------------------------------------------------------------------
# targeted attack on the linearized surrogate


def _target_logits_all(adj, H, bias, t):
    """Exact surrogate logits of ``t`` for every candidate flip, grouped by first endpoint.

    Uses the two-hop structure of ``A_hat^2 H``: with ``q_j = H_j / sqrt(d_j)`` and
    ``R_k = sum_{j in N~(k)} q_j`` the target logit is
    ``d_t^{-1/2} sum_{k in N~(t)} R_k / d_k`` (``d`` counts the self-loop).  A
    flip ``(u, v)`` only touches ``d_u, d_v, q_u, q_v`` and the two neighborhoods,
    so each candidate is updated in closed form.  Candidates are all pairs
    ``(u, v)`` with ``u`` the target or one of its neighbors.

    Returns a list of ``(u, vs, logits)`` with ``logits`` of shape ``(len(vs), C)``.
    """
    n = adj.shape[0]
    a_tilde = adj + np.eye(n)
    dt = a_tilde.sum(1)
    w = 1.0 / dt
    q = H / np.sqrt(dt)[:, None]
    R = a_tilde @ q
    in_t = a_tilde[t] > 0
    T = np.flatnonzero(in_t)
    base = (R[T] * w[T, None]).sum(0)
    s_v = a_tilde[:, T] @ w[T]

    out = []
    for u in [t] + [int(k) for k in T if k != t]:
        mask = np.ones(n, dtype=bool)
        mask[u] = False
        if u != t:
            mask[t] = False
        vs = np.flatnonzero(mask)
        in_u = a_tilde[u, vs] > 0
        inT_v = in_t[vs]
        sigma = np.where(in_u, -1.0, 1.0)
        du = dt[u] + sigma
        dv = dt[vs] + sigma
        qu_new = H[u][None, :] / np.sqrt(du)[:, None]
        qv_new = H[vs] / np.sqrt(dv)[:, None]
        dqu = qu_new - q[u]
        dqv = qv_new - q[vs]
        s_u = s_v[u]
        wv = w[vs]

        base_o = base - R[u] * w[u] - (inT_v * wv)[:, None] * R[vs]
        a_coef = s_u - w[u] - inT_v * in_u * wv
        b_coef = s_v[vs] - in_u * w[u] - inT_v * wv
        other = base_o + a_coef[:, None] * dqu + b_coef[:, None] * dqv

        r_u = R[u] + dqu + in_u[:, None] * dqv + sigma[:, None] * qv_new
        term_u = r_u / du[:, None]
        r_v = R[vs] + in_u[:, None] * dqu + dqv + sigma[:, None] * qu_new
        term_v = r_v / dv[:, None]
        if u == t:
            keep_v = sigma > 0
            scale = 1.0 / np.sqrt(dt[t] + sigma)
        else:
            keep_v = inT_v
            scale = np.full(len(vs), 1.0 / np.sqrt(dt[t]))
        logits = (other + term_u + keep_v[:, None] * term_v) * scale[:, None] + bias
        out.append((u, vs, logits))
    return out


def _margin(logits, label):
    other = np.delete(logits, label, axis=-1)
    return logits[..., label] - other.max(axis=-1)


def surrogate_margin(adj, H, bias, t, label):
    """Margin of ``t`` under ``A_hat^2 H + b`` computed from scratch (dense)."""
    n = adj.shape[0]
    a_tilde = adj + np.eye(n)
    d = 1.0 / np.sqrt(a_tilde.sum(1))
    a_hat = d[:, None] * a_tilde * d[None, :]
    return float(_margin(a_hat[t] @ (a_hat @ H) + bias, label))


def targeted_gradient_attack(graph, features, target, per_target_budget, surrogate=None,
                             labeled_nodes=None, label=None, seed=0, rel_tol=1e-12,
                             exclude=()):
    """Greedy structure attack on one node against the linearized surrogate.

    Candidates are flips incident to the target or to one of its neighbors.  Each
    step evaluates the exact surrogate margin (reference-class logit minus best
    other logit) of the target after every candidate flip and applies the one
    with the smallest margin; ties go to the lexicographically smallest pair.
    A flip that would raise the margin is never applied: if no candidate keeps
    the margin from increasing, the set ends early with a warning.

    ``label`` defaults to the surrogate's clean prediction for the target.
    """
    if not 1 <= per_target_budget <= 5:
        raise ConfigError("per_target_budget must be in [1, 5]")
    budget = BudgetSpec.targeted(per_target_budget)
    target = int(target)
    if surrogate is None:
        if labeled_nodes is None:
            raise ConfigError("need either a surrogate or labeled_nodes to train one")
        surrogate = train_surrogate(graph, features, labeled_nodes, seed=seed)
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    H = x @ surrogate.W
    bias = surrogate.b
    adj = graph.dense_adjacency(np.float64)
    if graph.num_nodes < 2:
        raise BudgetError(f"target {target} has no candidate flips")
    if label is None:
        label = int(np.argmax(surrogate_predict(surrogate, graph, features)[1][target]))

    pset = PerturbationSet("targeted", seed, budget, info={"target": target, "label": int(label)})
    margins = [surrogate_margin(adj, H, bias, target, label)]
    flipped = set(exclude)
    for step in range(per_target_budget):
        best = None
        for u, vs, logits in _target_logits_all(adj, H, bias, target):
            m = _margin(logits, label)
            for v, mv in zip(vs.tolist(), m.tolist()):
                key = (min(u, v), max(u, v))
                if key in flipped:
                    continue
                if best is None or mv < best[0] - rel_tol * max(1.0, abs(best[0])):
                    best = (mv, key)
                elif mv <= best[0] + rel_tol * max(1.0, abs(best[0])) and key < best[1]:
                    best = (min(mv, best[0]), key)
        if best is None:
            if step == 0:
                raise BudgetError(f"target {target} has no candidate flips")
            pset.warnings.append(f"partial budget: {step} of {per_target_budget}, pool exhausted")
            break
        mv, (u, v) = best
        if mv > margins[-1] + rel_tol * max(1.0, abs(margins[-1])):
            pset.warnings.append(
                f"partial budget: {step} of {per_target_budget}, every flip raises the margin"
            )
            break
        op = "remove" if adj[u, v] > 0 else "add"
        adj[u, v] = adj[v, u] = 1.0 - adj[u, v]
        flipped.add((u, v))
        pset.edge_flips.append((u, v, op))
        margins.append(mv)
    pset.info["margins"] = margins
    return pset


def targeted_attack_many(graph, features, targets, per_target_budget, labeled_nodes, seed=0,
                         baseline=False):
    """Attack several targets into one poisoned graph.

    Targets are processed in order on the graph left by the previous ones; a pair
    flipped for an earlier target is not flipped again.  The surrogate is trained
    once on the clean graph.  ``baseline=True`` swaps in random incident flips.
    Per-target seeds are ``seed + target``.
    """
    from .perturbation import apply_perturbation

    nodes = targets.nodes if isinstance(targets, TargetSet) else tuple(int(t) for t in targets)
    name = "random_target" if baseline else "targeted"
    pset = PerturbationSet(name, seed, BudgetSpec.targeted(per_target_budget),
                           info={"targets": list(nodes)})
    surrogate = None if baseline else train_surrogate(graph, features, labeled_nodes, seed=seed)
    current = graph
    touched = set()
    for t in nodes:
        if baseline:
            sub = random_target_attack(current, t, per_target_budget, seed + t)
        else:
            sub = targeted_gradient_attack(current, features, t, per_target_budget,
                                           surrogate=surrogate, seed=seed + t, exclude=touched)
        sub.edge_flips = [f for f in sub.edge_flips if (f[0], f[1]) not in touched]
        touched.update((u, v) for u, v, _ in sub.edge_flips)
        current = apply_perturbation(current, sub)
        pset.edge_flips.extend(sub.edge_flips)
        pset.warnings.extend(f"target {t}: {w}" for w in sub.warnings)
    return pset
