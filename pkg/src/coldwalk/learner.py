"""Learns strictly positive feature weights by projected SGD.

The model: weighted item->feature transitions followed by feature->item
transitions give an item-item matrix S_w with

    S_w[j,k] = sum_f icm[j,f] * w[f] / d_j * p_fi[f,k],   d_j = sum_f icm[j,f] * w[f]

and the learner minimizes sum_{j,k} (S_w[j,k] - t[j,k])^2 against a
collaborative target t. Because each row of S_w is normalized by d_j, the
objective is invariant under global rescaling of w: learned weights are
identifiable only up to a positive constant.

One epoch visits every nonzero of the target once in shuffled order plus
``negatives_per_positive`` sampled zero-target pairs per positive. The
epoch stream is a pure function of the seed (the generator is reseeded
each epoch), which keeps training bit-reproducible and makes a zero
learning rate yield identical epoch losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .evaluation import evaluate
from .paths import TargetMatrix, weighted_item_transitions
from .recommenders import score_and_rank
from .sparse import check_csr, spmm

# Give up rejection sampling after this many draws and sample the
# complement set directly (tiny toy targets can be nearly dense).
_REJECTION_ATTEMPTS = 30


class DivergenceError(RuntimeError):
    """Raised when the epoch loss blows past 10x its initial value."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 50
    negatives_per_positive: int = 3
    epsilon_pos: float = 1e-6
    l2_toward_uniform: float = 0.0
    seed: int = 0
    early_stop_patience: int = 5

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.negatives_per_positive < 0:
            raise ValueError("negatives_per_positive must be >= 0")
        if self.epsilon_pos <= 0:
            raise ValueError("epsilon_pos must be > 0")
        if self.l2_toward_uniform < 0:
            raise ValueError("l2_toward_uniform must be >= 0")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass
class TrainReport:
    epoch_losses: list[float]
    validation_scores: list[float]
    best_epoch: int
    final_weights: np.ndarray


@dataclass(frozen=True)
class ValidationContext:
    """Everything needed to score ranking quality on validation-cold items."""

    p_ui: sp.csr_matrix
    candidates: np.ndarray
    truth: dict[int, set[int]]
    top_n: int = 5


def _target_csr(t) -> sp.csr_matrix:
    return check_csr(t.t if isinstance(t, TargetMatrix) else t)


class _PairEvaluator:
    """Fast per-pair residual/gradient terms over the CSR/CSC slices."""

    def __init__(self, icm, p_fi, t):
        self.icm = check_csr(icm)
        p_fi = check_csr(p_fi)
        if self.icm.shape[1] != p_fi.shape[0]:
            raise ValueError(
                f"ICM has {self.icm.shape[1]} features but p_fi has {p_fi.shape[0]} rows"
            )
        self.p_fi_csc = p_fi.tocsc()
        self.p_fi_csc.sort_indices()
        self.t = _target_csr(t)
        n_items = self.icm.shape[0]
        if self.t.shape != (n_items, n_items):
            raise ValueError(
                f"target is {self.t.shape}, expected ({n_items}, {n_items}) to match the ICM"
            )

    def features_of(self, j: int) -> np.ndarray:
        return self.icm.indices[self.icm.indptr[j] : self.icm.indptr[j + 1]]

    def _p_fi_column(self, feats: np.ndarray, k: int) -> np.ndarray:
        lo, hi = self.p_fi_csc.indptr[k], self.p_fi_csc.indptr[k + 1]
        rows = self.p_fi_csc.indices[lo:hi]
        out = np.zeros(feats.size)
        if rows.size:
            # clipped searchsorted: out-of-range positions fail the
            # equality test, so no bounds mask is needed
            pos = rows.searchsorted(feats)
            np.minimum(pos, rows.size - 1, out=pos)
            hit = rows[pos] == feats
            out[hit] = self.p_fi_csc.data[lo:hi][pos[hit]]
        return out

    def target_value(self, j: int, k: int) -> float:
        lo, hi = self.t.indptr[j], self.t.indptr[j + 1]
        cols = self.t.indices[lo:hi]
        pos = cols.searchsorted(k)
        if pos < cols.size and cols[pos] == k:
            return float(self.t.data[lo + pos])
        return 0.0

    def residual_terms(self, w: np.ndarray, j: int, k: int):
        """Returns (features of j, their p_fi[:,k] values, d_j, S_w[j,k], residual)."""
        feats = self.features_of(j)
        if feats.size == 0:
            raise ValueError(f"item {j} has no features; its weighted transition is undefined")
        wf = w[feats]
        d = float(wf.sum())
        pvals = self._p_fi_column(feats, k)
        s = float((wf * pvals).sum()) / d
        r = s - self.target_value(j, k)
        return feats, pvals, d, s, r


def pair_loss(w, j: int, k: int, icm, p_fi, t) -> float:
    """Squared residual (S_w[j,k] - t[j,k])^2 for one item pair."""
    w = np.asarray(w, dtype=np.float64)
    _, _, _, _, r = _PairEvaluator(icm, p_fi, t).residual_terms(w, j, k)
    return r * r


def pair_gradient(w, j: int, k: int, icm, p_fi, t) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of pair_loss w.r.t. the weights of item j's features.

    Returns (feature indices, gradient values); components for features
    item j lacks are identically zero and omitted. Differentiating the
    row-normalized form gives d loss / d w_g = 2 r (p_fi[g,k] - S_w[j,k]) / d_j.
    """
    w = np.asarray(w, dtype=np.float64)
    feats, pvals, d, s, r = _PairEvaluator(icm, p_fi, t).residual_terms(w, j, k)
    return feats, (2.0 * r / d) * (pvals - s)


def sample_pairs(t, icm, config: TrainConfig, rng: np.random.Generator):
    """One epoch of training pairs: every target nonzero once, shuffled,
    each followed by sampled zero-target pairs from the same row.

    Positives whose item has no features are skipped. Negative columns are
    drawn uniformly from the items that appear as target columns (the warm
    items); a positive yields fewer negatives only when its row has no
    zero-target column left.
    """
    t = _target_csr(t)
    icm = check_csr(icm)
    feature_counts = np.diff(icm.indptr)
    warm = np.unique(t.indices)
    rows, cols = t.nonzero()
    usable = feature_counts[rows] > 0
    rows, cols = rows[usable], cols[usable]
    order = rng.permutation(rows.size)
    for idx in order:
        j = int(rows[idx])
        yield j, int(cols[idx])
        row_cols = t.indices[t.indptr[j] : t.indptr[j + 1]]
        if warm.size <= row_cols.size:
            continue  # every warm item is already a positive for this row
        for _ in range(config.negatives_per_positive):
            neg = -1
            for _ in range(_REJECTION_ATTEMPTS):
                cand = int(warm[rng.integers(warm.size)])
                pos = row_cols.searchsorted(cand)
                if pos >= row_cols.size or row_cols[pos] != cand:
                    neg = cand
                    break
            if neg < 0:
                complement = np.setdiff1d(warm, row_cols)
                neg = int(complement[rng.integers(complement.size)])
            yield j, neg


def full_objective(w, icm, p_fi, t) -> float:
    """Exhaustive residual sum of squares over the union of supports.

    Pairs where both S_w and the target are zero contribute nothing and
    are never enumerated.
    """
    w = np.asarray(w, dtype=np.float64)
    s = spmm(weighted_item_transitions(icm, w), p_fi)
    diff = (s - _target_csr(t)).tocsr()
    return float(diff.multiply(diff).sum())


def validation_ndcg(w, icm, p_fi, context: ValidationContext) -> float:
    """Mean NDCG on validation-cold candidates under the weighted content walk."""
    s = spmm(weighted_item_transitions(icm, w), p_fi)
    lists = score_and_rank(context.p_ui, s, context.candidates, top_n=context.top_n)
    return evaluate(lists, context.truth, n=context.top_n).ndcg


def sgd_train(
    icm,
    p_fi,
    t,
    validation: ValidationContext | None,
    config: TrainConfig,
) -> TrainReport:
    """Projected SGD from uniform weights toward the target item-item matrix.

    Each update touches only the features of the sampled row item and is
    clipped at ``epsilon_pos`` to keep weights strictly positive. With a
    validation context, epochs are scored by NDCG and training stops after
    ``early_stop_patience`` epochs without improvement, returning the best
    epoch's weights; without one, the final epoch wins.
    """
    evaluator = _PairEvaluator(icm, p_fi, t)
    if evaluator.t.nnz == 0:
        raise ValueError("target matrix is empty; nothing to learn from")
    n_features = evaluator.icm.shape[1]
    w = np.ones(n_features)
    lr = config.learning_rate
    pull = config.l2_toward_uniform

    epoch_losses: list[float] = []
    validation_scores: list[float] = []
    best_epoch = 0
    best_weights = w.copy()
    best_score = -np.inf
    stale = 0

    for epoch in range(config.epochs):
        rng = np.random.default_rng(config.seed)
        total = 0.0
        n_pairs = 0
        for j, k in sample_pairs(evaluator.t, evaluator.icm, config, rng):
            feats, pvals, d, s, r = evaluator.residual_terms(w, j, k)
            total += r * r
            n_pairs += 1
            step = lr * (2.0 * r / d) * (pvals - s)
            if pull:
                step += lr * pull * (w[feats] - 1.0)
            w[feats] = np.maximum(w[feats] - step, config.epsilon_pos)
        mean_loss = total / n_pairs if n_pairs else 0.0
        epoch_losses.append(mean_loss)
        if epoch_losses[0] > 0 and mean_loss > 10.0 * epoch_losses[0]:
            raise DivergenceError(
                f"epoch {epoch} mean pair loss {mean_loss:.3e} exceeds 10x the "
                f"initial {epoch_losses[0]:.3e}; lower the learning rate"
            )
        if validation is not None:
            score = validation_ndcg(w, evaluator.icm, p_fi, validation)
            validation_scores.append(score)
            if score > best_score:
                best_score = score
                best_epoch = epoch
                best_weights = w.copy()
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
        else:
            best_epoch = epoch
            best_weights = w.copy()

    return TrainReport(
        epoch_losses=epoch_losses,
        validation_scores=validation_scores,
        best_epoch=best_epoch,
        final_weights=best_weights,
    )


class FeatureWeightLearner(BaseEstimator):
    """sklearn-style wrapper around ``sgd_train``.

    After ``fit``, ``weights_`` holds the learned strictly positive
    feature weight vector and ``report_`` the full training trace.
    """

    def __init__(
        self,
        learning_rate: float = 0.05,
        epochs: int = 50,
        negatives_per_positive: int = 3,
        epsilon_pos: float = 1e-6,
        l2_toward_uniform: float = 0.0,
        seed: int = 0,
        early_stop_patience: int = 5,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.negatives_per_positive = negatives_per_positive
        self.epsilon_pos = epsilon_pos
        self.l2_toward_uniform = l2_toward_uniform
        self.seed = seed
        self.early_stop_patience = early_stop_patience

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            negatives_per_positive=self.negatives_per_positive,
            epsilon_pos=self.epsilon_pos,
            l2_toward_uniform=self.l2_toward_uniform,
            seed=self.seed,
            early_stop_patience=self.early_stop_patience,
        )

    def fit(self, icm, p_fi, target, validation: ValidationContext | None = None):
        self.report_ = sgd_train(icm, p_fi, target, validation, self._config())
        self.weights_ = self.report_.final_weights
        return self
