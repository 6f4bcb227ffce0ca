"""Process-knowledge rule engine over text embeddings.

Layers explicit condition->label decision rules (clinical assessment
scales expressed in a small DSL) on top of precomputed embeddings,
learns per-condition similarity thresholds from labeled data, and emits
predictions with condition-level explanations, plus a human review
service for building process-knowledge-augmented datasets.
"""

from .embeddings import (
    EmbeddingStore,
    KernelConfig,
    build_store,
    hash_embed,
    hash_embedder,
    load_store,
    save_store,
    similarity,
)
from .engine import (
    ConditionEvaluation,
    LabelDistribution,
    ThresholdModel,
    evaluate_conditions,
    hard_label,
    load_model,
    predict,
    save_model,
    soft_label_distribution,
)
from .errors import PkEngineError
from .pk import NO_MATCH, Condition, ProcessKnowledge, Rule, parse_pk, serialize_pk
from .training import TrainConfig, TrainReport, cross_entropy_loss, fit_gammas, train

__version__ = "0.1.0"

__all__ = [
    "Condition",
    "ConditionEvaluation",
    "EmbeddingStore",
    "KernelConfig",
    "LabelDistribution",
    "NO_MATCH",
    "PkEngineError",
    "ProcessKnowledge",
    "Rule",
    "ThresholdModel",
    "TrainConfig",
    "TrainReport",
    "build_store",
    "cross_entropy_loss",
    "evaluate_conditions",
    "fit_gammas",
    "hard_label",
    "hash_embed",
    "hash_embedder",
    "load_model",
    "load_store",
    "parse_pk",
    "predict",
    "save_model",
    "save_store",
    "serialize_pk",
    "similarity",
    "soft_label_distribution",
    "train",
]
