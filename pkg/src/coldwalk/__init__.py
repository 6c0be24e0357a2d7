"""Graph random-walk recommenders for item cold-start.

Interactions and item features form a tripartite user-item-feature graph;
three-step walks over it score cold items, and a learner fits strictly
positive feature weights so the weighted content walk mimics collaborative
co-occurrence probabilities.
"""

from .data import (
    Dataset,
    DatasetError,
    FileFormat,
    FilterConfig,
    Interaction,
    SplitOutput,
    apply_filters,
    binarize_interactions,
    build_matrices,
    cold_item_split,
    load_features,
    load_interactions,
)
from .evaluation import EvalResult, ap_at_n, evaluate, ndcg_at_n, recall_at_n
from .learner import (
    DivergenceError,
    FeatureWeightLearner,
    TrainConfig,
    TrainReport,
    ValidationContext,
    full_objective,
    sgd_train,
)
from .paths import (
    PathMatrices,
    TargetMatrix,
    build_path_matrices,
    collaborative_target,
    content_item_item,
    item_popularity,
    p3_user_scores,
    rerank_target,
)
from .recommenders import (
    ALGORITHMS,
    ColdItemRecommender,
    ItemItemModel,
    build_item_item,
    cbf_similarity,
    idf_weights,
    score_and_rank,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ColdItemRecommender",
    "Dataset",
    "DatasetError",
    "DivergenceError",
    "EvalResult",
    "FeatureWeightLearner",
    "FileFormat",
    "FilterConfig",
    "Interaction",
    "ItemItemModel",
    "PathMatrices",
    "SplitOutput",
    "TargetMatrix",
    "TrainConfig",
    "TrainReport",
    "ValidationContext",
    "ap_at_n",
    "apply_filters",
    "binarize_interactions",
    "build_item_item",
    "build_matrices",
    "build_path_matrices",
    "cbf_similarity",
    "cold_item_split",
    "collaborative_target",
    "content_item_item",
    "evaluate",
    "full_objective",
    "idf_weights",
    "item_popularity",
    "load_features",
    "load_interactions",
    "ndcg_at_n",
    "p3_user_scores",
    "recall_at_n",
    "rerank_target",
    "score_and_rank",
    "sgd_train",
]
