"""Sentence-level CEFR assessment over precomputed sentence embeddings.

The package trains a prototype-based metric classifier on frozen embedding
vectors, provides kNN and bag-of-words baselines, the shared evaluation
protocol (per-level F1, macro-F1, quadratic weighted kappa, trimmed
multi-run summaries), and corpus preparation utilities (similarity-aware
splitting, sentence selection, lexical profiling, label cross-tabulation).
"""
from .core import (
    Dataset,
    DatasetError,
    EmbeddingRecord,
    LabeledSentence,
    Level,
    NUM_LEVELS,
    Source,
    TokenAnnotation,
    cosine_similarity,
    mean_pool,
    parse_dataset,
    reconcile_annotations,
    serialize_dataset,
    write_dataset,
)
from .metric_head import PrototypeModel, init_prototypes, softmax
from .training import (
    AdamW,
    LossWeights,
    TrainConfig,
    TrainLog,
    batch_loss,
    loss_gradients,
    loss_weights,
    train,
    weighted_ce_loss,
)
from .baselines import (
    BowModel,
    KnnIndex,
    SparseCounts,
    bow_featurize,
    bow_predict,
    bow_predict_dataset,
    bow_train,
    build_vocabulary,
    knn_predict,
    knn_predict_dataset,
    knn_votes,
)
from .evaluation import (
    EvalReport,
    MultiRunSummary,
    confusion_and_f1,
    format_report,
    multi_run_summary,
    pearson,
    quadratic_weighted_kappa,
    resolve_gold,
)
from .corpus_tools import (
    Crosstab,
    ProfileRow,
    SelectionResult,
    SelectionRules,
    SplitQuotas,
    SplitResult,
    Wordlist,
    average_cosine_distances,
    level_crosstab,
    lexical_profile,
    load_allowlist,
    profile_to_tsv,
    select_sentences,
    split_corpus,
    write_split,
)
from .container import (
    ContainerError,
    load_any,
    load_bow_model,
    load_knn_index,
    load_prototype_model,
    save_bow_model,
    save_knn_index,
    save_prototype_model,
    write_json_mirror,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "BowModel",
    "ContainerError",
    "Crosstab",
    "Dataset",
    "DatasetError",
    "EmbeddingRecord",
    "EvalReport",
    "KnnIndex",
    "LabeledSentence",
    "Level",
    "LossWeights",
    "MultiRunSummary",
    "NUM_LEVELS",
    "ProfileRow",
    "PrototypeModel",
    "SelectionResult",
    "SelectionRules",
    "Source",
    "SparseCounts",
    "SplitQuotas",
    "SplitResult",
    "TokenAnnotation",
    "TrainConfig",
    "TrainLog",
    "Wordlist",
    "average_cosine_distances",
    "batch_loss",
    "bow_featurize",
    "bow_predict",
    "bow_predict_dataset",
    "bow_train",
    "build_vocabulary",
    "confusion_and_f1",
    "cosine_similarity",
    "format_report",
    "init_prototypes",
    "knn_predict",
    "knn_predict_dataset",
    "knn_votes",
    "level_crosstab",
    "lexical_profile",
    "load_allowlist",
    "load_any",
    "load_bow_model",
    "load_knn_index",
    "load_prototype_model",
    "loss_gradients",
    "loss_weights",
    "mean_pool",
    "multi_run_summary",
    "parse_dataset",
    "pearson",
    "profile_to_tsv",
    "quadratic_weighted_kappa",
    "reconcile_annotations",
    "resolve_gold",
    "save_bow_model",
    "save_knn_index",
    "save_prototype_model",
    "select_sentences",
    "serialize_dataset",
    "softmax",
    "split_corpus",
    "train",
    "weighted_ce_loss",
    "write_dataset",
    "write_json_mirror",
    "write_split",
]
