"""Cyclic adversarial post-specialization of word embeddings.

Two generators learn a one-to-one mapping between a distributional embedding
space (X) and its knowledge-retrofitted counterpart (Y), trained with
adversarial, cycle-consistency, identity, max-margin, and conditional-cycle
losses.  The package also ships the evaluation stack: Spearman similarity
benchmarks with constrained/unconstrained splits, an out-of-knowledge
scalability harness, loss ablations, and a synthetic corpus generator for
desk-scale experiments.
"""

from .embeddings import (
    EmbeddingTable,
    PairedCorpus,
    align_pairs,
    load_table,
    nearest_neighbors,
    post_specialize,
    preprocess,
    save_table,
)
from .errors import RetroGanError
from .evaluation import (
    EvalReport,
    SimilarityDataset,
    ablation_harness,
    evaluate_similarity,
    load_similarity_dataset,
    ook_harness,
    spearman_rho,
    split_disjoint_full,
    synthesize_paired_corpus,
)
from .losses import LossBreakdown, LossToggles, LossWeights
from .models import ArchConfig, RetroGanModel, build_model, count_parameters
from .trainer import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "EmbeddingTable",
    "EvalReport",
    "LossBreakdown",
    "LossToggles",
    "LossWeights",
    "PairedCorpus",
    "RetroGanError",
    "RetroGanModel",
    "SimilarityDataset",
    "TrainConfig",
    "ablation_harness",
    "align_pairs",
    "build_model",
    "count_parameters",
    "evaluate_similarity",
    "load_checkpoint",
    "load_similarity_dataset",
    "load_table",
    "nearest_neighbors",
    "ook_harness",
    "post_specialize",
    "preprocess",
    "save_checkpoint",
    "save_table",
    "spearman_rho",
    "split_disjoint_full",
    "synthesize_paired_corpus",
    "train",
    "train_step",
]
