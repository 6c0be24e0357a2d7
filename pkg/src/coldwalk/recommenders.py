"""The five compared recommenders and the shared top-N ranking routine.

Kinds: "cbf" and "cbf_idf" are item KNN over content with cosine
similarity (plain and IDF-weighted); "cp3" is the plain content walk;
"hp3" and "hp3_r" are content walks whose item->feature edges carry
learned weights. The two hybrid kinds differ only in the target their
weights were trained against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .paths import PathMatrices, build_path_matrices, content_item_item
from .sparse import check_csr, scale_columns, spmm, top_k_per_column, transpose

GRAPH_KINDS = ("cp3", "hp3", "hp3_r")
KNN_KINDS = ("cbf", "cbf_idf")
ALGORITHMS = KNN_KINDS + GRAPH_KINDS


@dataclass(frozen=True)
class ItemItemModel:
    s: sp.csr_matrix
    kind: str


def idf_weights(icm) -> np.ndarray:
    """ln(n_items / document_frequency) per feature."""
    icm = check_csr(icm)
    df = np.asarray(icm.getnnz(axis=0), dtype=np.float64)
    if np.any(df == 0):
        empty = np.flatnonzero(df == 0)
        raise ValueError(f"features with zero document frequency: {empty[:10].tolist()}")
    return np.log(icm.shape[0] / df)


def cbf_similarity(icm, feature_weights=None, knn_k: int = 100, shrink: float = 0.0) -> sp.csr_matrix:
    """Weighted cosine similarity between item feature vectors.

    The diagonal is zeroed and each column is truncated to its knn_k
    largest entries, so every item (cold ones included) keeps its best
    warm neighbors. Items with no features simply have empty rows and
    columns.
    """
    if knn_k < 1:
        raise ValueError("knn_k must be >= 1")
    if shrink < 0:
        raise ValueError("shrink must be >= 0")
    icm = check_csr(icm)
    x = icm if feature_weights is None else scale_columns(icm, feature_weights)
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
    gram = spmm(x, transpose(x))
    rows = np.repeat(np.arange(gram.shape[0]), np.diff(gram.indptr))
    gram.data = gram.data / (norms[rows] * norms[gram.indices] + shrink)
    gram.data[rows == gram.indices] = 0.0
    gram.eliminate_zeros()
    return top_k_per_column(gram, knn_k)


def build_item_item(
    kind: str,
    paths: PathMatrices,
    weights=None,
    knn_k: int = 100,
    shrink: float = 0.0,
) -> ItemItemModel:
    """Construct the item-item matrix behind one algorithm kind."""
    if kind not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {kind!r}; expected one of {ALGORITHMS}")
    if kind in ("hp3", "hp3_r"):
        if weights is None:
            raise ValueError(f"{kind} requires learned feature weights")
        s = content_item_item(paths, weights)
    else:
        if weights is not None:
            raise ValueError(f"{kind} does not take feature weights")
        if kind == "cp3":
            s = content_item_item(paths)
        elif kind == "cbf":
            s = cbf_similarity(paths.icm, None, knn_k=knn_k, shrink=shrink)
        else:  # cbf_idf
            s = cbf_similarity(paths.icm, idf_weights(paths.icm), knn_k=knn_k, shrink=shrink)
    return ItemItemModel(s=s, kind=kind)


def score_and_rank(user_profiles, item_item, candidates, top_n: int = 5) -> dict[int, list[tuple[int, float]]]:
    """Rank candidate items per user by profile . similarity scores.

    Returns {user: [(item, score), ...]} for every user row. Only
    positively scored candidates are ranked (a zero score means the item is
    unreachable for that user); exact ties go to the smaller item index.
    Users whose candidate scores are all zero get an empty list, which the
    evaluator counts as skipped.
    """
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    profiles = check_csr(user_profiles)
    s = item_item.s if isinstance(item_item, ItemItemModel) else check_csr(item_item)
    candidates = np.asarray(sorted(int(c) for c in candidates), dtype=np.int64)
    scores = spmm(profiles, s[:, candidates])
    ranked: dict[int, list[tuple[int, float]]] = {}
    for user in range(scores.shape[0]):
        lo, hi = scores.indptr[user], scores.indptr[user + 1]
        cols = scores.indices[lo:hi]
        vals = scores.data[lo:hi]
        positive = vals > 0
        cols, vals = cols[positive], vals[positive]
        # stable sort on negated values: exact ties keep ascending
        # candidate order, i.e. the smaller item index ranks first
        order = np.argsort(-vals, kind="stable")[:top_n]
        ranked[user] = [(int(candidates[c]), float(v)) for c, v in zip(cols[order], vals[order])]
    return ranked


class ColdItemRecommender(BaseEstimator):
    """Scores cold-start candidate items for every user of a training URM.

    Hyperparameters live in the constructor so the estimator plays well
    with sklearn tooling; ``fit`` takes the interaction and content
    matrices and ``recommend`` produces per-user ranked candidate lists.
    """

    def __init__(
        self,
        algorithm: str = "cp3",
        knn_k: int = 100,
        shrink: float = 0.0,
        feature_weights=None,
        top_n: int = 5,
    ):
        self.algorithm = algorithm
        self.knn_k = knn_k
        self.shrink = shrink
        self.feature_weights = feature_weights
        self.top_n = top_n

    def fit(self, urm, icm):
        paths = build_path_matrices(urm, icm)
        self.model_ = build_item_item(
            self.algorithm,
            paths,
            weights=self.feature_weights,
            knn_k=self.knn_k,
            shrink=self.shrink,
        )
        # KNN kinds score with raw interaction strengths, walk kinds with
        # the user's transition probabilities
        self.user_profiles_ = check_csr(urm) if self.algorithm in KNN_KINDS else paths.p_ui
        return self

    def recommend(self, candidates, top_n: int | None = None) -> dict[int, list[tuple[int, float]]]:
        if not hasattr(self, "model_"):
            raise RuntimeError("recommender is not fitted; call fit(urm, icm) first")
        return score_and_rank(
            self.user_profiles_,
            self.model_,
            candidates,
            top_n=self.top_n if top_n is None else top_n,
        )
