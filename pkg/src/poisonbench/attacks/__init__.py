"""Poisoning attacks on text-attributed graphs.

Every attack returns a :class:`PerturbationSet`; :func:`apply_perturbation`
turns it into the poisoned graph that victims are then trained on.
"""

from ..embed import build_vocab
from ..errors import ConfigError
from .perturbation import (
    BudgetSpec,
    PerturbationSet,
    TextEdit,
    apply_perturbation,
    apply_text_edit,
    merge,
)
from .structural import (
    TargetSet,
    attacker_labels,
    dice_attack,
    meta_gradient_attack,
    random_attack,
    random_target_attack,
    select_targets,
    targeted_attack_many,
    targeted_gradient_attack,
)
from .textual import (
    TextSurrogate,
    char_attack,
    random_char_edits,
    train_text_surrogate,
    word_attack,
)

STRUCTURAL_ATTACKS = ("dice", "meta", "random", "targeted", "random_target")
TEXTUAL_ATTACKS = ("char", "word", "random_char")


def structural_attack(name, graph, features, split, budget, seed, oracle_labels=False,
                      targets=None, **options):
    """Run a structural attack by name on the clean graph."""
    if name == "dice":
        labels = attacker_labels(graph, features, split, oracle_labels, seed=seed)
        return dice_attack(graph, labels, budget, seed)
    if name == "meta":
        return meta_gradient_attack(graph, features, graph.labels, split, budget, seed, **options)
    if name == "random":
        return random_attack(graph, budget, seed)
    if name in ("targeted", "random_target"):
        if targets is None:
            raise ConfigError(f"{name} attack needs a target set")
        return targeted_attack_many(graph, features, targets, budget.per_target, split.train,
                                    seed=seed, baseline=name == "random_target")
    raise ConfigError(f"unknown structural attack {name!r}; choose from {STRUCTURAL_ATTACKS}")


def textual_attack(name, graph, split, edits_per_node, seed, nodes=None, top_k=50):
    """Run a textual attack by name against a BoW surrogate fitted on the train split."""
    if name == "random_char":
        return random_char_edits(graph.texts, edits_per_node, seed, nodes)
    if name not in TEXTUAL_ATTACKS:
        raise ConfigError(f"unknown textual attack {name!r}; choose from {TEXTUAL_ATTACKS}")
    vocab = build_vocab(graph.texts)
    clf = train_text_surrogate(graph.texts, graph.labels, split.train, vocab, graph.num_classes)
    if name == "char":
        return char_attack(graph.texts, clf, edits_per_node, seed, nodes)
    return word_attack(graph.texts, clf, vocab, edits_per_node, seed, nodes, top_k)


def combined_attack(graph, features, split, structural, textual, seed, text_seed=None, **options):
    """Independent structural and textual poisoning of the clean inputs, recorded as one set.

    ``structural`` is ``(name, BudgetSpec)`` and ``textual`` is
    ``(name, edits_per_node)``.  A zero budget on either side returns the other
    side's set unchanged.
    """
    s_name, s_budget = structural
    t_name, t_edits = textual
    s_zero = (s_budget.structural_mode == "global_rate" and s_budget.num_flips(graph.num_edges) == 0)
    t_seed = seed if text_seed is None else text_seed
    s_set = None if s_zero else structural_attack(s_name, graph, features, split, s_budget, seed, **options)
    t_set = None if t_edits == 0 else textual_attack(t_name, graph, split, t_edits, t_seed)
    if t_set is None and s_set is None:
        return PerturbationSet(f"{s_name}+{t_name}", seed, s_budget)
    if t_set is None:
        return s_set
    if s_set is None:
        return t_set
    budget = BudgetSpec(s_budget.structural_mode, s_budget.global_rate, s_budget.per_target, t_edits)
    out = merge(f"{s_name}+{t_name}", seed, budget, s_set, t_set)
    out.info = {"structural": s_set.info, "textual_seed": t_seed}
    return out


__all__ = [
    "BudgetSpec",
    "PerturbationSet",
    "TextEdit",
    "TargetSet",
    "TextSurrogate",
    "apply_perturbation",
    "apply_text_edit",
    "attacker_labels",
    "char_attack",
    "combined_attack",
    "dice_attack",
    "meta_gradient_attack",
    "random_attack",
    "random_char_edits",
    "random_target_attack",
    "select_targets",
    "structural_attack",
    "targeted_attack_many",
    "targeted_gradient_attack",
    "textual_attack",
    "train_text_surrogate",
    "word_attack",
]
