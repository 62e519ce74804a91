"""Poisoning attacks, victims, metrics, purification and certification for text-attributed graphs."""

from .errors import (
    BudgetError,
    ConfigError,
    DivergenceError,
    ParseError,
    PoisonBenchError,
    ValidationError,
)
from .tagraph import (
    NodeSplit,
    SbmParams,
    TextAttributedGraph,
    generate_synthetic_tag,
    load_graph,
    load_graph_dir,
    sample_subset,
    save_graph,
    split_nodes,
)
from .embed import EmbeddingMatrix, Vocabulary, bow_embed, build_vocab, load_embeddings, tfidf_embed
from .victims import GnnArch, TrainConfig, VictimModel, evaluate_accuracy, predict, train_gnn
from .attacks import (
    BudgetSpec,
    PerturbationSet,
    apply_perturbation,
    combined_attack,
    structural_attack,
    textual_attack,
)
from .metrics import MetricBundle, embedding_metrics, rda
from .defense import PurifyConfig, purify
from .certify import CertResult, SmoothingConfig, certified_radius, certify_set, clopper_pearson_lower
from .bench import ExperimentConfig, RobustnessReport, emit_report, load_config, run_experiment

__version__ = "0.1.0"
