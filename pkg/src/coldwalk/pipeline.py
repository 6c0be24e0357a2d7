"""Batch pipeline: prepare data, train weights, evaluate recommenders.

Stages communicate through files in the configured output directory, so
each one can be rerun independently. Every stage is a pure function of its
inputs, the config, and the seeds: rerunning a stage with the same config
produces byte-identical artifacts.

Artifacts
  prepare   interactions_filtered.tsv, features_filtered.tsv,
            split_manifest.tsv, prepare_summary.txt
  train     weights_<kind>.tsv, train_log_<kind>.tsv, beta_selection.tsv
  evaluate  report.txt, recommendations_<kind>.tsv
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    FileFormat,
    FilterConfig,
    Interaction,
    SplitOutput,
    apply_filters,
    binarize_interactions,
    cold_item_split,
    load_features,
    load_interactions,
    split_assignment,
    split_from_assignment,
)
from .evaluation import evaluate, format_report
from .learner import TrainConfig, TrainReport, ValidationContext, sgd_train
from .paths import (
    build_path_matrices,
    collaborative_target,
    item_popularity,
    rerank_target,
)
from .recommenders import ALGORITHMS, KNN_KINDS, build_item_item, score_and_rank

logger = logging.getLogger(__name__)

INTERACTIONS_FILE = "interactions_filtered.tsv"
FEATURES_FILE = "features_filtered.tsv"
MANIFEST_FILE = "split_manifest.tsv"
SUMMARY_FILE = "prepare_summary.txt"
REPORT_FILE = "report.txt"
BETA_FILE = "beta_selection.tsv"

DEFAULT_BETA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

PREPARED_FORMAT = FileFormat(delimiter="\t", header=False, columns=("user", "item", "rating"))
PREPARED_FEATURE_FORMAT = FileFormat(delimiter="\t", header=False, columns=("item", "feature"))


class ConfigError(Exception):
    """Invalid or incomplete pipeline configuration."""


class PipelineError(RuntimeError):
    """Stage failed at runtime (missing artifacts, divergence, bad data)."""


@dataclass(frozen=True)
class SplitConfig:
    test_ratio: float = 0.2
    validation_ratio: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class BinarizeConfig:
    enabled: bool = True
    threshold: float = 3.5


@dataclass(frozen=True)
class RecConfig:
    knn_k: int = 100
    shrink: float = 0.0
    top_n: int = 5


@dataclass(frozen=True)
class PipelineConfig:
    interactions: Path
    features: Path
    output_dir: Path
    interaction_format: FileFormat = FileFormat()
    feature_format: FileFormat = FileFormat(columns=("item", "feature"))
    filters: FilterConfig = FilterConfig()
    split: SplitConfig = SplitConfig()
    binarize: BinarizeConfig = BinarizeConfig()
    train: TrainConfig = TrainConfig()
    rec: RecConfig = RecConfig()
    beta_grid: tuple[float, ...] = DEFAULT_BETA_GRID
    algorithms: tuple[str, ...] = ALGORITHMS
    write_recommendations: bool = True


def _build_section(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    if "columns" in raw:
        raw = dict(raw, columns=tuple(raw["columns"]))
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


def load_config(path, output_override=None) -> PipelineConfig:
    """Parse and validate a JSON pipeline config file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    known = {
        "interactions",
        "features",
        "output_dir",
        "interaction_format",
        "feature_format",
        "filters",
        "split",
        "binarize",
        "train",
        "rec",
        "beta_grid",
        "algorithms",
        "write_recommendations",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("interactions", "features"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")

    split_raw = raw.get("split", {})
    if "seed" not in split_raw:
        raise ConfigError("config must pin 'split.seed'; no implicit randomness")
    train_raw = dict(raw.get("train", {}))
    train_raw.setdefault("seed", split_raw["seed"])

    base = path.parent
    interactions = (base / raw["interactions"]).resolve()
    features = (base / raw["features"]).resolve()
    if output_override is not None:
        output_dir = Path(output_override)
    elif "output_dir" in raw:
        output_dir = base / raw["output_dir"]
    else:
        raise ConfigError("config needs 'output_dir' (or pass --output)")

    config = PipelineConfig(
        interactions=interactions,
        features=features,
        output_dir=Path(output_dir),
        interaction_format=_build_section(
            FileFormat, raw.get("interaction_format", {}), "interaction_format"
        ),
        feature_format=_build_section(
            FileFormat, dict({"columns": ("item", "feature")}, **raw.get("feature_format", {})),
            "feature_format",
        ),
        filters=_build_section(FilterConfig, raw.get("filters", {}), "filters"),
        split=_build_section(SplitConfig, split_raw, "split"),
        binarize=_build_section(BinarizeConfig, raw.get("binarize", {}), "binarize"),
        train=_build_section(TrainConfig, train_raw, "train"),
        rec=_build_section(RecConfig, raw.get("rec", {}), "rec"),
        beta_grid=tuple(raw.get("beta_grid", DEFAULT_BETA_GRID)),
        algorithms=tuple(raw.get("algorithms", ALGORITHMS)),
        write_recommendations=bool(raw.get("write_recommendations", True)),
    )

    if not config.algorithms:
        raise ConfigError("'algorithms' must name at least one recommender")
    for algo in config.algorithms:
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    if any(beta < 0 for beta in config.beta_grid) or not config.beta_grid:
        raise ConfigError("beta_grid must be a nonempty list of values >= 0")
    if not config.interactions.is_file():
        raise ConfigError(f"interaction file does not exist: {config.interactions}")
    if not config.features.is_file():
        raise ConfigError(f"feature file does not exist: {config.features}")
    return config


def weights_file(kind: str) -> str:
    return f"weights_{kind}.tsv"


def train_log_file(kind: str) -> str:
    return f"train_log_{kind}.tsv"


def recommendations_file(kind: str) -> str:
    return f"recommendations_{kind}.tsv"


def cmd_prepare(config: PipelineConfig) -> Path:
    """Filter the raw files, split cold items, and persist the artifacts."""
    interactions, _ = load_interactions(config.interactions, config.interaction_format)
    features, _ = load_features(config.features, config.feature_format)
    if config.binarize.enabled:
        interactions = binarize_interactions(interactions, config.binarize.threshold)
    interactions, features = apply_filters(interactions, features, config.filters)
    split = cold_item_split(
        interactions,
        features,
        config.split.test_ratio,
        config.split.validation_ratio,
        config.split.seed,
    )

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / INTERACTIONS_FILE, "w", encoding="utf-8") as handle:
        for rec in interactions:
            handle.write(f"{rec.user}\t{rec.item}\t{rec.rating!r}\n")
    with open(out / FEATURES_FILE, "w", encoding="utf-8") as handle:
        for item, feat in features:
            handle.write(f"{item}\t{feat}\n")
    labels = split_assignment(split)
    with open(out / MANIFEST_FILE, "w", encoding="utf-8") as handle:
        for token in sorted(labels):
            handle.write(f"{token}\t{labels[token]}\n")
    train = split.train
    summary = "\n".join(
        [
            f"n_users {len(train.user_ids)}",
            f"n_items {len(train.item_ids)}",
            f"n_features {len(train.feature_ids)}",
            f"urm_nnz {train.urm.nnz}",
            f"icm_nnz {train.icm.nnz}",
            f"warm_items {train.warm_items.size}",
            f"validation_items {split.validation_items.size}",
            f"test_items {split.test_items.size}",
        ]
    )
    (out / SUMMARY_FILE).write_text(summary + "\n", encoding="utf-8")
    logger.info("prepared %s: %s", out, summary.replace("\n", ", "))
    return out


def load_prepared(config: PipelineConfig) -> SplitOutput:
    """Rebuild the split from prepared artifacts (never re-randomizes)."""
    out = config.output_dir
    for name in (INTERACTIONS_FILE, FEATURES_FILE, MANIFEST_FILE):
        if not (out / name).is_file():
            raise PipelineError(f"missing prepared artifact {out / name}; run prepare first")
    interactions, _ = load_interactions(out / INTERACTIONS_FILE, PREPARED_FORMAT)
    features, _ = load_features(out / FEATURES_FILE, PREPARED_FEATURE_FORMAT)
    assignment = {}
    with open(out / MANIFEST_FILE, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            token, label = line.split("\t")
            assignment[token] = label
    return split_from_assignment(interactions, features, assignment)


def _write_weights(path: Path, weights: np.ndarray, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for idx, value in enumerate(weights):
            handle.write(f"{dataset.feature_ids.token(idx)}\t{float(value)!r}\n")


def read_weights(path: Path, dataset: Dataset) -> np.ndarray:
    """Load a feature_token<TAB>weight file against the dataset's feature map."""
    weights = np.full(len(dataset.feature_ids), np.nan)
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            token, value = line.split("\t")
            weights[dataset.feature_ids[token]] = float(value)
    if np.isnan(weights).any():
        missing = [
            dataset.feature_ids.token(i) for i in np.flatnonzero(np.isnan(weights))[:5]
        ]
        raise PipelineError(f"weights file {path} lacks features, e.g. {missing}")
    return weights


def _write_train_log(path: Path, report: TrainReport) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch\tmean_pair_loss\tvalidation_ndcg\n")
        for epoch, loss in enumerate(report.epoch_losses):
            score = report.validation_scores[epoch] if epoch < len(report.validation_scores) else float("nan")
            handle.write(f"{epoch}\t{loss:.10e}\t{score:.10f}\n")
        handle.write(f"# best_epoch {report.best_epoch}\n")


def cmd_train(config: PipelineConfig) -> list[Path]:
    """Learn feature weights for the hybrid kinds requested in the config."""
    hybrids = [kind for kind in config.algorithms if kind in ("hp3", "hp3_r")]
    if not hybrids:
        logger.info("no hybrid algorithms requested; nothing to train")
        return []
    split = load_prepared(config)
    dataset = split.train
    paths_m = build_path_matrices(dataset.urm, dataset.icm)
    target = collaborative_target(paths_m)
    validation = ValidationContext(
        p_ui=paths_m.p_ui,
        candidates=split.validation_items,
        truth=split.validation_truth,
        top_n=config.rec.top_n,
    )
    written: list[Path] = []
    out = config.output_dir

    if "hp3" in hybrids:
        logger.info("training hp3 weights against the collaborative target")
        report = sgd_train(dataset.icm, paths_m.p_fi, target, validation, config.train)
        _write_weights(out / weights_file("hp3"), report.final_weights, dataset)
        _write_train_log(out / train_log_file("hp3"), report)
        written.append(out / weights_file("hp3"))

    if "hp3_r" in hybrids:
        pop = item_popularity(dataset.urm)
        best = None
        lines = ["beta\tvalidation_ndcg"]
        for beta in config.beta_grid:
            reranked = rerank_target(target, pop, beta)
            report = sgd_train(dataset.icm, paths_m.p_fi, reranked, validation, config.train)
            score = max(report.validation_scores) if report.validation_scores else 0.0
            lines.append(f"{beta!r}\t{score:.10f}")
            logger.info("hp3_r beta=%s validation ndcg=%.5f", beta, score)
            if best is None or score > best[1]:
                best = (beta, score, report)
        beta, score, report = best
        lines.append(f"# selected beta {beta!r} (ndcg {score:.10f})")
        (out / BETA_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_weights(out / weights_file("hp3_r"), report.final_weights, dataset)
        _write_train_log(out / train_log_file("hp3_r"), report)
        written.append(out / weights_file("hp3_r"))

    return written


def cmd_evaluate(config: PipelineConfig) -> Path:
    """Score test-cold candidates with every requested algorithm and report."""
    split = load_prepared(config)
    dataset = split.train
    paths_m = build_path_matrices(dataset.urm, dataset.icm)
    out = config.output_dir
    results = {}
    for kind in config.algorithms:
        weights = None
        if kind in ("hp3", "hp3_r"):
            wpath = out / weights_file(kind)
            if not wpath.is_file():
                raise PipelineError(f"{kind} requested but {wpath} is missing; run train first")
            weights = read_weights(wpath, dataset)
        model = build_item_item(
            kind, paths_m, weights=weights, knn_k=config.rec.knn_k, shrink=config.rec.shrink
        )
        profiles = dataset.urm if kind in KNN_KINDS else paths_m.p_ui
        lists = score_and_rank(profiles, model, split.test_items, top_n=config.rec.top_n)
        results[kind] = evaluate(lists, split.test_truth, n=config.rec.top_n)
        logger.info(
            "%s: recall=%.5f map=%.5f ndcg=%.5f over %d users",
            kind,
            results[kind].recall,
            results[kind].map,
            results[kind].ndcg,
            results[kind].n_users_evaluated,
        )
        if config.write_recommendations:
            with open(out / recommendations_file(kind), "w", encoding="utf-8") as handle:
                for user in sorted(lists):
                    for rank, (item, score) in enumerate(lists[user], start=1):
                        handle.write(
                            f"{dataset.user_ids.token(user)}\t"
                            f"{dataset.item_ids.token(item)}\t{rank}\t{score!r}\n"
                        )
    report_path = out / REPORT_FILE
    report_path.write_text(format_report(results), encoding="utf-8")
    return report_path
