"""Interaction/feature ingestion, noise filtering, and the cold-item split.

The item universe is the set of items that appear in the (filtered)
interaction log; feature records for unknown items are dropped. Id maps
assign contiguous 0-based indices in sorted token order, so rebuilding a
dataset from the same files is fully deterministic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .sparse import check_csr

logger = logging.getLogger(__name__)


class DatasetError(Exception):
    """Fatal data condition: empty result, bad ratios, unknown tokens."""


class Interaction(NamedTuple):
    user: str
    item: str
    rating: float


@dataclass(frozen=True)
class FileFormat:
    """Layout of a delimiter-separated interaction or feature file."""

    delimiter: str = ","
    header: bool = False
    columns: tuple[str, ...] = ("user", "item", "rating")

    def column_index(self, role: str) -> int:
        try:
            return self.columns.index(role)
        except ValueError:
            raise DatasetError(f"format declares no '{role}' column: {self.columns}") from None


@dataclass(frozen=True)
class FilterConfig:
    min_user_interactions: int = 5
    min_item_interactions: int = 5
    min_item_features: int = 2
    max_item_features: int = 200
    min_feature_frequency: int = 5

    def __post_init__(self):
        for name in (
            "min_user_interactions",
            "min_item_interactions",
            "min_item_features",
            "max_item_features",
            "min_feature_frequency",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.min_item_features > self.max_item_features:
            raise ValueError("min_item_features must not exceed max_item_features")


NO_FILTERS = FilterConfig(0, 0, 0, 10**9, 0)


def load_interactions(path, fmt: FileFormat) -> tuple[list[Interaction], list[str]]:
    """Parse an interaction file; returns (records, reported bad lines).

    Lines with too few columns, a non-numeric rating, or a non-positive
    rating are skipped and reported as "line <n>: <reason>" strings.
    """
    u_col = fmt.column_index("user")
    i_col = fmt.column_index("item")
    r_col = fmt.column_index("rating")
    records: list[Interaction] = []
    errors: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if fmt.header and line_no == 1:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(fmt.delimiter)
            if len(parts) < len(fmt.columns):
                errors.append(f"line {line_no}: expected {len(fmt.columns)} columns, got {len(parts)}")
                continue
            try:
                rating = float(parts[r_col])
            except ValueError:
                errors.append(f"line {line_no}: non-numeric rating {parts[r_col]!r}")
                continue
            if rating <= 0:
                errors.append(f"line {line_no}: non-positive rating {rating} dropped")
                continue
            records.append(Interaction(parts[u_col].strip(), parts[i_col].strip(), rating))
    for message in errors:
        logger.warning("%s: %s", path, message)
    return records, errors


def load_features(path, fmt: FileFormat) -> tuple[list[tuple[str, str]], list[str]]:
    """Parse an item-feature file; duplicates collapse later, at matrix build."""
    i_col = fmt.column_index("item")
    f_col = fmt.column_index("feature")
    records: list[tuple[str, str]] = []
    errors: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if fmt.header and line_no == 1:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(fmt.delimiter)
            if len(parts) < len(fmt.columns):
                errors.append(f"line {line_no}: expected {len(fmt.columns)} columns, got {len(parts)}")
                continue
            records.append((parts[i_col].strip(), parts[f_col].strip()))
    for message in errors:
        logger.warning("%s: %s", path, message)
    return records, errors


def binarize_interactions(records: Iterable[Interaction], threshold: float) -> list[Interaction]:
    """Implicit-feedback conversion: rating >= threshold becomes 1, rest dropped."""
    return [r._replace(rating=1.0) for r in records if r.rating >= threshold]


def apply_filters(
    interactions: list[Interaction],
    features: list[tuple[str, str]],
    config: FilterConfig,
) -> tuple[list[Interaction], list[tuple[str, str]]]:
    """Remove noisy users, items, and features.

    User/item interaction-count thresholds are applied repeatedly until a
    fixpoint, since removing a user can push an item below its threshold
    and vice versa. The feature-frequency and item-feature-count filters
    then run once; items failing the feature-count filter are dropped with
    their interactions.
    """
    inter = list(interactions)
    while True:
        user_counts: dict[str, int] = {}
        item_counts: dict[str, int] = {}
        for rec in inter:
            user_counts[rec.user] = user_counts.get(rec.user, 0) + 1
            item_counts[rec.item] = item_counts.get(rec.item, 0) + 1
        kept = [
            rec
            for rec in inter
            if user_counts[rec.user] >= config.min_user_interactions
            and item_counts[rec.item] >= config.min_item_interactions
        ]
        if len(kept) == len(inter):
            break
        inter = kept
    if not inter:
        raise DatasetError("interaction filters removed every interaction")

    items = {rec.item for rec in inter}
    feats = sorted({(i, f) for i, f in features if i in items})

    if config.min_feature_frequency > 0:
        freq: dict[str, int] = {}
        for _, f in feats:
            freq[f] = freq.get(f, 0) + 1
        feats = [(i, f) for i, f in feats if freq[f] >= config.min_feature_frequency]

    feature_counts: dict[str, int] = {}
    for i, _ in feats:
        feature_counts[i] = feature_counts.get(i, 0) + 1
    ok_items = {
        i
        for i in items
        if config.min_item_features <= feature_counts.get(i, 0) <= config.max_item_features
    }
    inter = [rec for rec in inter if rec.item in ok_items]
    feats = [(i, f) for i, f in feats if i in ok_items]
    if not inter:
        raise DatasetError("feature-count filter removed every item")
    return inter, feats


class IdMap:
    """Bidirectional token <-> contiguous index map in sorted token order."""

    def __init__(self, tokens: Iterable[str]):
        self.tokens = sorted(set(tokens))
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise DatasetError(f"token {token!r} absent from id map") from None

    def token(self, idx: int) -> str:
        return self.tokens[idx]


@dataclass
class Dataset:
    """Training view: URM over warm items only, ICM over all items."""

    urm: sp.csr_matrix
    icm: sp.csr_matrix
    user_ids: IdMap
    item_ids: IdMap
    feature_ids: IdMap
    warm_items: np.ndarray
    cold_items: np.ndarray


@dataclass
class SplitOutput:
    train: Dataset
    validation_items: np.ndarray
    test_items: np.ndarray
    validation_truth: dict[int, set[int]] = field(default_factory=dict)
    test_truth: dict[int, set[int]] = field(default_factory=dict)


def build_matrices(
    interactions: Iterable[Interaction],
    features: Iterable[tuple[str, str]],
    user_ids: IdMap,
    item_ids: IdMap,
    feature_ids: IdMap,
) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """URM[u,i] = rating (last duplicate wins) and binary ICM[i,f] = 1."""
    cells: dict[tuple[int, int], float] = {}
    for rec in interactions:
        cells[(user_ids[rec.user], item_ids[rec.item])] = rec.rating
    urm = _matrix_from_cells(cells, (len(user_ids), len(item_ids)))
    feat_cells = {(item_ids[i], feature_ids[f]): 1.0 for i, f in features}
    icm = _matrix_from_cells(feat_cells, (len(item_ids), len(feature_ids)))
    return urm, icm


def _matrix_from_cells(cells: dict[tuple[int, int], float], shape) -> sp.csr_matrix:
    if not cells:
        return sp.csr_matrix(shape)
    keys = sorted(cells)
    rows = np.fromiter((r for r, _ in keys), dtype=np.int64, count=len(keys))
    cols = np.fromiter((c for _, c in keys), dtype=np.int64, count=len(keys))
    vals = np.fromiter((cells[k] for k in keys), dtype=np.float64, count=len(keys))
    return check_csr(sp.coo_matrix((vals, (rows, cols)), shape=shape))


def split_from_assignment(
    interactions: list[Interaction],
    features: list[tuple[str, str]],
    assignment: dict[str, str],
) -> SplitOutput:
    """Build a SplitOutput from an explicit item -> {warm|validation|test} map."""
    user_ids = IdMap(rec.user for rec in interactions)
    item_ids = IdMap(rec.item for rec in interactions)
    known_items = set(item_ids.tokens)
    features = [(i, f) for i, f in features if i in known_items]
    feature_ids = IdMap(f for _, f in features)

    unknown = set(assignment) - known_items
    if unknown or set(assignment) != known_items:
        missing = known_items - set(assignment)
        raise DatasetError(
            f"split assignment does not cover the item universe "
            f"(missing={sorted(missing)[:5]}, unknown={sorted(unknown)[:5]})"
        )

    groups: dict[str, list[int]] = {"warm": [], "validation": [], "test": []}
    for token, label in assignment.items():
        if label not in groups:
            raise DatasetError(f"unknown split label {label!r} for item {token!r}")
        groups[label].append(item_ids[token])
    warm = np.array(sorted(groups["warm"]), dtype=np.int64)
    validation = np.array(sorted(groups["validation"]), dtype=np.int64)
    test = np.array(sorted(groups["test"]), dtype=np.int64)
    if warm.size == 0:
        raise DatasetError("split leaves no warm items to train on")

    val_set, test_set = set(validation.tolist()), set(test.tolist())
    train_records = []
    validation_truth: dict[int, set[int]] = {}
    test_truth: dict[int, set[int]] = {}
    for rec in interactions:
        u, i = user_ids[rec.user], item_ids[rec.item]
        if i in test_set:
            test_truth.setdefault(u, set()).add(i)
        elif i in val_set:
            validation_truth.setdefault(u, set()).add(i)
        else:
            train_records.append(rec)
    if not train_records:
        raise DatasetError("split leaves no training interactions")

    urm, icm = build_matrices(train_records, features, user_ids, item_ids, feature_ids)
    cold = np.array(sorted(val_set | test_set), dtype=np.int64)
    train = Dataset(
        urm=urm,
        icm=icm,
        user_ids=user_ids,
        item_ids=item_ids,
        feature_ids=feature_ids,
        warm_items=warm,
        cold_items=cold,
    )
    return SplitOutput(
        train=train,
        validation_items=validation,
        test_items=test,
        validation_truth=validation_truth,
        test_truth=test_truth,
    )


def cold_item_split(
    interactions: list[Interaction],
    features: list[tuple[str, str]],
    test_ratio: float,
    validation_ratio: float,
    seed: int,
) -> SplitOutput:
    """Hold out random items wholesale: their interactions become ground truth.

    A ceil(test_ratio * |I|) item sample becomes test-cold; of the remaining
    items, ceil(validation_ratio * rest) become validation-cold. Items are
    drawn by a seeded shuffle over the sorted item index range, so the same
    seed always yields the same partition.
    """
    for name, ratio in (("test_ratio", test_ratio), ("validation_ratio", validation_ratio)):
        if not 0.0 < ratio < 1.0:
            raise DatasetError(f"{name} must lie strictly between 0 and 1, got {ratio}")
    item_tokens = sorted({rec.item for rec in interactions})
    n_items = len(item_tokens)
    if n_items == 0:
        raise DatasetError("no interactions to split")
    n_test = math.ceil(test_ratio * n_items)
    n_validation = math.ceil(validation_ratio * (n_items - n_test))
    if n_test == 0 or n_validation == 0:
        raise DatasetError("split ratios produce zero cold items")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_items)
    test_idx = set(perm[:n_test].tolist())
    validation_idx = set(perm[n_test : n_test + n_validation].tolist())
    assignment = {}
    for pos, token in enumerate(item_tokens):
        if pos in test_idx:
            assignment[token] = "test"
        elif pos in validation_idx:
            assignment[token] = "validation"
        else:
            assignment[token] = "warm"
    return split_from_assignment(interactions, features, assignment)


def split_assignment(split: SplitOutput) -> dict[str, str]:
    """Item token -> {warm|validation|test} labels for the audit manifest."""
    item_ids = split.train.item_ids
    labels = {}
    for idx in split.train.warm_items:
        labels[item_ids.token(int(idx))] = "warm"
    for idx in split.validation_items:
        labels[item_ids.token(int(idx))] = "validation"
    for idx in split.test_items:
        labels[item_ids.token(int(idx))] = "test"
    return labels
