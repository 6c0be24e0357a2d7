import json

import numpy as np
import pytest


@pytest.fixture
def toy_corpus(tmp_path):
    """Small clustered corpus: 20 users, 15 items, 5 features.

    Users favor one of three item clusters; every item carries its cluster
    feature plus a parity feature, so cold items stay reachable through
    shared features.
    """
    rng = np.random.default_rng(1234)
    interactions = []
    for u in range(20):
        cluster = u % 3
        liked = [i for i in range(15) if i % 3 == cluster]
        extra = rng.choice([i for i in range(15) if i % 3 != cluster], size=2, replace=False)
        for i in liked + list(extra):
            rating = int(rng.integers(3, 6))
            interactions.append(f"u{u:02d},i{i:02d},{rating}.0,86400")
    features = []
    for i in range(15):
        features.append(f"i{i:02d},genre{i % 3}")
        features.append(f"i{i:02d},parity{i % 2}")
    interactions_path = tmp_path / "ratings.csv"
    interactions_path.write_text("\n".join(interactions) + "\n", encoding="utf-8")
    features_path = tmp_path / "features.csv"
    features_path.write_text("\n".join(features) + "\n", encoding="utf-8")
    return interactions_path, features_path


def write_config(tmp_path, interactions, features, name="config.json", **overrides):
    config = {
        "interactions": str(interactions),
        "features": str(features),
        "output_dir": str(tmp_path / "out"),
        "interaction_format": {
            "delimiter": ",",
            "header": False,
            "columns": ["user", "item", "rating", "timestamp"],
        },
        "filters": {
            "min_user_interactions": 1,
            "min_item_interactions": 1,
            "min_item_features": 1,
            "max_item_features": 10,
            "min_feature_frequency": 1,
        },
        "split": {"test_ratio": 0.2, "validation_ratio": 0.2, "seed": 7},
        "binarize": {"enabled": True, "threshold": 3.5},
        "train": {"learning_rate": 0.5, "epochs": 8, "negatives_per_positive": 2, "seed": 3},
        "rec": {"knn_k": 100, "shrink": 0.0, "top_n": 5},
        "algorithms": ["cbf", "cbf_idf", "cp3", "hp3", "hp3_r"],
    }
    config.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path
