"""Three-step random-walk machinery over the user-item-feature graph.

The full transition matrix of the tripartite graph never materializes:
its four nonzero blocks are kept separately as row-stochastic matrices,
and every walk of interest is a product of three of them. Cold items have
empty user columns, so they are reachable only along item->feature->item
hops; that is the whole cold-start mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import check_csr, row_normalize, scale_columns, spmm, transpose

DENSE_ORACLE_NODE_LIMIT = 200


@dataclass(frozen=True)
class PathMatrices:
    """Row-stochastic one-step transitions, plus the binary item-feature
    matrix they were derived from (needed to re-weight item->feature edges)."""

    p_ui: sp.csr_matrix
    p_iu: sp.csr_matrix
    p_if: sp.csr_matrix
    p_fi: sp.csr_matrix
    icm: sp.csr_matrix

    @property
    def n_users(self) -> int:
        return self.p_ui.shape[0]

    @property
    def n_items(self) -> int:
        return self.p_ui.shape[1]

    @property
    def n_features(self) -> int:
        return self.p_if.shape[1]


@dataclass(frozen=True)
class TargetMatrix:
    """Item-item probability matrix a weight learner can regress against."""

    t: sp.csr_matrix
    kind: str  # "collaborative" | "reranked"
    beta: float | None = None


def build_path_matrices(urm, icm) -> PathMatrices:
    """Derive the four transition blocks from the interaction and content matrices."""
    urm = check_csr(urm)
    icm = check_csr(icm)
    if urm.shape[1] != icm.shape[0]:
        raise ValueError(
            f"URM has {urm.shape[1]} items but ICM has {icm.shape[0]} rows"
        )
    return PathMatrices(
        p_ui=row_normalize(urm),
        p_iu=row_normalize(transpose(urm)),
        p_if=row_normalize(icm),
        p_fi=row_normalize(transpose(icm)),
        icm=icm,
    )


def collaborative_target(paths: PathMatrices) -> TargetMatrix:
    """Two-step item->user->item probabilities; rows and columns of cold
    items are zero because they have no user edges."""
    return TargetMatrix(t=spmm(paths.p_iu, paths.p_ui), kind="collaborative")


def item_popularity(urm) -> np.ndarray:
    """Training interaction count per item (zero exactly for cold items)."""
    return np.asarray(check_csr(urm).getnnz(axis=0), dtype=np.int64)


def rerank_target(target: TargetMatrix, pop: np.ndarray, beta: float) -> TargetMatrix:
    """Divide each column by pop[k]**beta, discounting popular items.

    beta=0 leaves the matrix bit-identical; columns of zero-popularity
    items stay zero.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if target.kind != "collaborative":
        raise ValueError(f"can only re-rank a collaborative target, got {target.kind!r}")
    pop = np.asarray(pop, dtype=np.float64).ravel()
    factors = np.zeros_like(pop)
    warm = pop > 0
    factors[warm] = pop[warm] ** (-beta)
    return TargetMatrix(t=scale_columns(target.t, factors), kind="reranked", beta=beta)


def weighted_item_transitions(icm, weights) -> sp.csr_matrix:
    """Item->feature transitions with re-weighted edges.

    Weights scale the binary item-feature edges before row normalization,
    so they act as relative transition preferences. They must be strictly
    positive; a weight vector that is constant across features reproduces
    the unweighted transitions exactly.
    """
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size == 0 or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise ValueError("feature weights must be strictly positive and finite")
    return row_normalize(scale_columns(check_csr(icm), weights))


def content_item_item(paths: PathMatrices, weights=None) -> sp.csr_matrix:
    """Item-item probabilities along the item->feature->item hop.

    With ``weights`` the first hop uses re-weighted edges; without, it is
    the plain content transition.
    """
    if weights is None:
        return spmm(paths.p_if, paths.p_fi)
    return spmm(weighted_item_transitions(paths.icm, weights), paths.p_fi)


def p3_user_scores(paths: PathMatrices, item_item) -> sp.csr_matrix:
    """User-item scores for a 3-step walk: first hop user->item, then the
    given 2-step item-item matrix."""
    item_item = check_csr(item_item)
    if item_item.shape != (paths.n_items, paths.n_items):
        raise ValueError(
            f"item-item matrix is {item_item.shape}, expected "
            f"({paths.n_items}, {paths.n_items})"
        )
    return spmm(paths.p_ui, item_item)


def oracle_p3_block(urm, icm, path_kind: str) -> np.ndarray:
    """Dense verification oracle: cube the full graph transition matrix.

    Builds the complete (users+items+features)^2 adjacency matrix, removes
    the edges excluded by ``path_kind`` ("collaborative" drops item->feature
    edges, "content" drops item->user edges), row-normalizes, cubes with
    dense matmul, and returns the user x item block. Deliberately avoids the
    sparse kernels so it can check them; test scale only.
    """
    urm_d = np.asarray(urm.toarray() if sp.issparse(urm) else urm, dtype=np.float64)
    icm_d = np.asarray(icm.toarray() if sp.issparse(icm) else icm, dtype=np.float64)
    n_users, n_items = urm_d.shape
    n_features = icm_d.shape[1]
    if icm_d.shape[0] != n_items:
        raise ValueError("URM and ICM disagree on the number of items")
    n = n_users + n_items + n_features
    if n > DENSE_ORACLE_NODE_LIMIT:
        raise ValueError(f"oracle limited to {DENSE_ORACLE_NODE_LIMIT} nodes, got {n}")

    users = slice(0, n_users)
    items = slice(n_users, n_users + n_items)
    features = slice(n_users + n_items, n)
    adjacency = np.zeros((n, n))
    adjacency[users, items] = urm_d
    adjacency[features, items] = icm_d.T
    if path_kind == "collaborative":
        adjacency[items, users] = urm_d.T
    elif path_kind == "content":
        adjacency[items, features] = icm_d
    else:
        raise ValueError(f"unknown path kind {path_kind!r}")

    sums = adjacency.sum(axis=1, keepdims=True)
    p = np.divide(adjacency, sums, out=np.zeros_like(adjacency), where=sums != 0)
    p3 = p @ p @ p
    return p3[users, items]
