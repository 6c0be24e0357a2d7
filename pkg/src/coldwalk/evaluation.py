"""Top-N ranking accuracy over binary relevance.

Metric conventions, pinned so reported numbers are reproducible:

* Recall@N  = |top-N hits| / |relevant|
* AP@N      = sum of precision@i at each hit rank i <= N, divided by
  min(N, |relevant|); MAP is its mean over users.
* NDCG@N    = DCG / IDCG with binary gains and 1/log2(rank+1) discount
  (1-based ranks); IDCG places min(N, |relevant|) hits at the top.

Users with an empty relevant set or an empty recommendation list are
skipped and counted, never zero-filled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

METRIC_DEFINITIONS = (
    "recall@n = hits_in_top_n / n_relevant; "
    "ap@n = sum(precision@hit_rank) / min(n, n_relevant); "
    "ndcg@n = sum(1/log2(rank+1) over hits) / ideal, binary gains; "
    "users with empty truth or empty lists are skipped, not zero-filled"
)


def recall_at_n(ranked: Sequence, relevant: Iterable, n: int = 5) -> float:
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty; skip the user upstream")
    hits = sum(1 for item in ranked[:n] if item in relevant)
    return hits / len(relevant)


def ap_at_n(ranked: Sequence, relevant: Iterable, n: int = 5) -> float:
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty; skip the user upstream")
    hits = 0
    score = 0.0
    for rank, item in enumerate(ranked[:n], start=1):
        if item in relevant:
            hits += 1
            score += hits / rank
    return score / min(n, len(relevant))


def ndcg_at_n(ranked: Sequence, relevant: Iterable, n: int = 5) -> float:
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty; skip the user upstream")
    dcg = 0.0
    for rank, item in enumerate(ranked[:n], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(n, len(relevant)) + 1))
    return dcg / ideal


@dataclass(frozen=True)
class EvalResult:
    """Aggregated metrics for one algorithm."""

    recall: float
    map: float
    ndcg: float
    n_users_evaluated: int
    n_users_skipped: int


def evaluate(lists: Mapping, truth: Mapping, n: int = 5) -> EvalResult:
    """Average the three metrics over users with nonempty truth and lists.

    ``lists`` maps user to a ranked sequence of items; entries may also be
    (item, score) pairs, in which case scores are ignored. Users present in
    ``truth`` but missing from ``lists`` (or with an empty list or empty
    relevant set) are counted as skipped. Aggregation iterates users in
    sorted order, so the result is independent of mapping order.
    """
    recalls, aps, ndcgs = [], [], []
    skipped = 0
    for user in sorted(truth):
        relevant = truth[user]
        ranked = list(lists.get(user, ()))
        if ranked and ranked[0].__class__ is tuple:
            ranked = [item for item, _ in ranked]
        if not relevant or not ranked:
            skipped += 1
            continue
        recalls.append(recall_at_n(ranked, relevant, n))
        aps.append(ap_at_n(ranked, relevant, n))
        ndcgs.append(ndcg_at_n(ranked, relevant, n))
    if recalls:
        result = EvalResult(
            recall=float(sum(recalls) / len(recalls)),
            map=float(sum(aps) / len(aps)),
            ndcg=float(sum(ndcgs) / len(ndcgs)),
            n_users_evaluated=len(recalls),
            n_users_skipped=skipped,
        )
    else:
        result = EvalResult(0.0, 0.0, 0.0, 0, skipped)
    return result


def format_report(results: Mapping[str, EvalResult]) -> str:
    """Fixed-width report, one line per algorithm, 5-decimal metrics."""
    lines = [f"# {METRIC_DEFINITIONS}"]
    lines.append("algorithm recall map ndcg n_users n_skipped")
    for name in results:
        r = results[name]
        lines.append(
            f"{name} {r.recall:.5f} {r.map:.5f} {r.ndcg:.5f} "
            f"{r.n_users_evaluated} {r.n_users_skipped}"
        )
    return "\n".join(lines) + "\n"
