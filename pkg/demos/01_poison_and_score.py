"""Poison a synthetic text-attributed graph and watch a GCN degrade.

Run:  python demos/01_poison_and_score.py

A small stochastic block model is generated with class-informative texts.
We train a GCN on the clean graph, then on three poisoned versions
(random flips, DICE and the meta-gradient attack at the same 20% budget)
and report accuracy, RDA and a few embedding-space metrics.
"""

from poisonbench import (
    BudgetSpec,
    GnnArch,
    SbmParams,
    TrainConfig,
    apply_perturbation,
    bow_embed,
    build_vocab,
    evaluate_accuracy,
    generate_synthetic_tag,
    rda,
    split_nodes,
    structural_attack,
    train_gnn,
)
from poisonbench.metrics import edge_homophily

graph = generate_synthetic_tag(SbmParams(num_nodes=300, num_classes=3, intra_edge_prob=0.06,
                                         inter_edge_prob=0.006, seed=1))
features = bow_embed(graph.texts, build_vocab(graph.texts))
split = split_nodes(graph, 0.1, 0.1, seed=1)
print(f"graph: {graph.num_nodes} nodes, {graph.num_edges} edges, "
      f"edge homophily {edge_homophily(graph):.1f}%")


def accuracy_on(g):
    model = train_gnn(GnnArch("gcn", hidden=64), g, features, split, TrainConfig(seed=1))
    return 100 * evaluate_accuracy(model, g, features, split.test)


clean = accuracy_on(graph)
print(f"clean GCN accuracy: {clean:.1f}%")

for name in ("random", "dice", "meta"):
    pset = structural_attack(name, graph, features, split, BudgetSpec.rate(0.2), seed=1)
    poisoned = apply_perturbation(graph, pset)
    acc = accuracy_on(poisoned)
    print(f"{name:>6}: {len(pset.edge_flips):3d} flips, homophily {edge_homophily(poisoned):5.1f}%, "
          f"accuracy {acc:5.1f}%, RDA {rda(clean, acc):5.1f}")
