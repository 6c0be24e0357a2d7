import numpy as np
import pytest
import scipy.sparse as sp
from scipy.stats import spearmanr

from coldwalk.learner import (
    DivergenceError,
    FeatureWeightLearner,
    TrainConfig,
    full_objective,
    pair_gradient,
    pair_loss,
    sample_pairs,
    sgd_train,
)
from coldwalk.sparse import check_csr


def dense_normalize(a):
    sums = a.sum(axis=1, keepdims=True)
    return np.divide(a, sums, out=np.zeros_like(a), where=sums != 0)


def dense_weighted_item_item(icm, w, p_fi):
    """Brute-force S_w for the oracle side of every comparison."""
    weighted = icm * w
    return dense_normalize(weighted) @ p_fi


def random_content_instance(rng, n_items=6, n_features=4):
    icm = (rng.random((n_items, n_features)) < 0.6).astype(float)
    icm[icm.sum(axis=1) == 0, 0] = 1.0
    icm[:, icm.sum(axis=0) == 0] = 1.0
    p_fi = dense_normalize(icm.T)
    return icm, p_fi


def random_target(rng, n_items, density=0.5):
    t = (rng.random((n_items, n_items)) < density) * rng.random((n_items, n_items))
    return check_csr(t)


class TestPairLoss:
    def test_perfect_fit_single_item(self):
        icm = np.array([[1.0]])
        p_fi = np.array([[1.0]])
        t = check_csr([[1.0]])
        assert pair_loss(np.array([2.0]), 0, 0, icm, p_fi, t) == 0.0

    def test_disjoint_support_zero_loss(self):
        icm = np.array([[1.0, 0.0], [0.0, 1.0]])
        p_fi = dense_normalize(icm.T)
        t = check_csr(np.zeros((2, 2)))
        assert pair_loss(np.array([1.0, 1.0]), 0, 1, icm, p_fi, t) == 0.0

    def test_matches_dense_objective_summand(self):
        rng = np.random.default_rng(0)
        icm, p_fi = random_content_instance(rng)
        t = random_target(rng, 6)
        w = rng.uniform(0.2, 3.0, size=4)
        s_dense = dense_weighted_item_item(icm, w, p_fi)
        t_dense = t.toarray()
        for j in range(6):
            for k in range(6):
                expected = (s_dense[j, k] - t_dense[j, k]) ** 2
                got = pair_loss(w, j, k, icm, p_fi, t)
                assert got == pytest.approx(expected, abs=1e-12)

    def test_featureless_item_rejected(self):
        icm = np.array([[0.0, 0.0], [1.0, 0.0]])
        p_fi = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="no features"):
            pair_loss(np.ones(2), 0, 1, icm, p_fi, check_csr(np.zeros((2, 2))))


def fd_gradient(w, j, k, icm, p_fi, t, step=1e-6):
    feats, _ = pair_gradient(w, j, k, icm, p_fi, t)
    grads = []
    for f in feats:
        up = w.copy()
        up[f] += step
        down = w.copy()
        down[f] -= step
        grads.append((pair_loss(up, j, k, icm, p_fi, t) - pair_loss(down, j, k, icm, p_fi, t)) / (2 * step))
    return feats, np.array(grads)


class TestPairGradient:
    def test_zero_residual_gives_zero_gradient(self):
        icm = np.array([[1.0, 1.0]])
        p_fi = np.array([[1.0], [1.0]])
        t = check_csr([[1.0]])
        # S = 1 regardless of w, so r = 0
        _, grad = pair_gradient(np.array([0.3, 2.0]), 0, 0, icm, p_fi, t)
        np.testing.assert_array_equal(grad, 0.0)

    def test_equal_transition_values_give_zero_gradient(self):
        # both features reach item 1 with the same probability, so under
        # uniform weights every term equals S and the gradient vanishes
        icm = np.array([[1.0, 1.0], [1.0, 1.0]])
        p_fi = dense_normalize(icm.T)
        t = check_csr(np.zeros((2, 2)))
        _, grad = pair_gradient(np.ones(2), 0, 1, icm, p_fi, t)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            n_items = int(rng.integers(2, 11))
            n_features = int(rng.integers(2, 9))
            icm, p_fi = random_content_instance(rng, n_items, n_features)
            t = random_target(rng, n_items)
            w = rng.uniform(0.3, 3.0, size=n_features)
            j = int(rng.integers(n_items))
            k = int(rng.integers(n_items))
            feats, analytic = pair_gradient(w, j, k, icm, p_fi, t)
            _, numeric = fd_gradient(w, j, k, icm, p_fi, t)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


class TestSamplePairs:
    def make_toy(self):
        icm = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        # warm columns {0, 1, 2}; every positive row has a zero-target column
        t = check_csr(np.array([[0.3, 0.0, 0.7], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        return icm, t

    def test_pair_count(self):
        icm, t = self.make_toy()
        config = TrainConfig(negatives_per_positive=1)
        pairs = list(sample_pairs(t, icm, config, np.random.default_rng(3)))
        assert len(pairs) == 6  # 3 positives + 1 negative each

    def test_same_seed_same_sequence(self):
        icm, t = self.make_toy()
        config = TrainConfig(negatives_per_positive=2)
        a = list(sample_pairs(t, icm, config, np.random.default_rng(5)))
        b = list(sample_pairs(t, icm, config, np.random.default_rng(5)))
        assert a == b

    def test_positives_cover_target_support_once(self):
        icm, t = self.make_toy()
        config = TrainConfig(negatives_per_positive=0)
        pairs = list(sample_pairs(t, icm, config, np.random.default_rng(7)))
        assert sorted(pairs) == [(0, 0), (0, 2), (2, 1)]

    def test_negatives_never_collide_with_positives(self):
        rng = np.random.default_rng(9)
        icm = (rng.random((10, 5)) < 0.7).astype(float)
        icm[icm.sum(axis=1) == 0, 0] = 1.0
        t = random_target(rng, 10, density=0.4)
        t_dense = t.toarray()
        config = TrainConfig(negatives_per_positive=3)
        positives = {(j, k) for j, k in zip(*t.nonzero())}
        seen_positive = []
        for j, k in sample_pairs(t, icm, config, np.random.default_rng(11)):
            if (j, k) in positives:
                seen_positive.append((j, k))
            else:
                assert t_dense[j, k] == 0.0
        assert sorted(seen_positive) == sorted(positives)

    def test_featureless_items_skipped(self):
        icm = np.array([[0.0, 0.0], [1.0, 1.0]])
        t = check_csr(np.array([[0.5, 0.5], [0.5, 0.5]]))
        config = TrainConfig(negatives_per_positive=0)
        pairs = list(sample_pairs(t, icm, config, np.random.default_rng(13)))
        assert all(j == 1 for j, _ in pairs)


class TestFullObjective:
    def test_zero_at_exact_fit(self):
        rng = np.random.default_rng(15)
        icm, p_fi = random_content_instance(rng, 8, 5)
        w_star = rng.uniform(0.5, 2.0, size=5)
        t = check_csr(dense_weighted_item_item(icm, w_star, p_fi))
        assert full_objective(w_star, icm, p_fi, t) == pytest.approx(0.0, abs=1e-24)

    def test_scale_invariance(self):
        rng = np.random.default_rng(17)
        icm, p_fi = random_content_instance(rng, 8, 5)
        t = random_target(rng, 8)
        w = rng.uniform(0.3, 3.0, size=5)
        base = full_objective(w, icm, p_fi, t)
        for c in (0.1, 1.0, 7.0, 100.0):
            assert full_objective(c * w, icm, p_fi, t) == pytest.approx(base, abs=1e-10)

    def test_matches_brute_force_double_loop(self):
        rng = np.random.default_rng(19)
        icm, p_fi = random_content_instance(rng, 8, 5)
        t = random_target(rng, 8)
        w = rng.uniform(0.3, 3.0, size=5)
        s_dense = dense_weighted_item_item(icm, w, p_fi)
        t_dense = t.toarray()
        expected = sum(
            (s_dense[j, k] - t_dense[j, k]) ** 2 for j in range(8) for k in range(8)
        )
        assert full_objective(w, icm, p_fi, t) == pytest.approx(expected, abs=1e-12)


def planted_instance(seed, n_items=20, n_features=8):
    rng = np.random.default_rng(seed)
    icm = (rng.random((n_items, n_features)) < 0.45).astype(float)
    icm[icm.sum(axis=1) == 0, 0] = 1.0
    icm[:, icm.sum(axis=0) == 0] = 1.0
    p_fi = dense_normalize(icm.T)
    w_star = np.exp(rng.uniform(np.log(0.2), np.log(5.0), size=n_features))
    t = check_csr(dense_weighted_item_item(icm, w_star, p_fi))
    return icm, p_fi, t, w_star


class TestSgdTrain:
    def test_zero_learning_rate_freezes_weights(self):
        icm, p_fi, t, _ = planted_instance(21)
        config = TrainConfig(learning_rate=0.0, epochs=4, seed=3)
        report = sgd_train(icm, p_fi, t, None, config)
        np.testing.assert_array_equal(report.final_weights, np.ones(icm.shape[1]))
        assert len(set(report.epoch_losses)) == 1

    def test_same_seed_bit_identical(self):
        icm, p_fi, t, _ = planted_instance(23)
        config = TrainConfig(epochs=5, seed=7)
        a = sgd_train(icm, p_fi, t, None, config)
        b = sgd_train(icm, p_fi, t, None, config)
        assert a.epoch_losses == b.epoch_losses
        np.testing.assert_array_equal(a.final_weights, b.final_weights)
        assert a.best_epoch == b.best_epoch

    def test_planted_weights_recovered(self):
        icm, p_fi, t, w_star = planted_instance(25)
        config = TrainConfig(learning_rate=1.0, epochs=80, negatives_per_positive=2, seed=1)
        report = sgd_train(icm, p_fi, t, None, config)
        initial = full_objective(np.ones(icm.shape[1]), icm, p_fi, t)
        final = full_objective(report.final_weights, icm, p_fi, t)
        assert final < 0.01 * initial
        rho = spearmanr(report.final_weights, w_star).statistic
        assert rho > 0.9

    def test_weights_stay_strictly_positive(self):
        icm, p_fi, t, _ = planted_instance(27)
        config = TrainConfig(learning_rate=2.0, epochs=10, epsilon_pos=1e-6, seed=5)
        report = sgd_train(icm, p_fi, t, None, config)
        assert report.final_weights.min() >= 1e-6

    def test_objective_improves_over_initialization(self):
        icm, p_fi, t, _ = planted_instance(29)
        config = TrainConfig(learning_rate=0.3, epochs=20, seed=9)
        report = sgd_train(icm, p_fi, t, None, config)
        initial = full_objective(np.ones(icm.shape[1]), icm, p_fi, t)
        assert full_objective(report.final_weights, icm, p_fi, t) < initial

    def test_divergence_aborts(self):
        icm = np.array([[1.0, 1.0], [0.0, 1.0]])
        p_fi = dense_normalize(icm.T)
        t = check_csr(np.array([[0.76, 0.0], [0.0, 0.0]]))
        config = TrainConfig(learning_rate=1e3, epochs=5, negatives_per_positive=0, seed=1)
        with pytest.raises(DivergenceError, match="learning rate"):
            sgd_train(icm, p_fi, t, None, config)

    def test_empty_target_rejected(self):
        icm = np.array([[1.0]])
        p_fi = np.array([[1.0]])
        with pytest.raises(ValueError, match="empty"):
            sgd_train(icm, p_fi, check_csr(np.zeros((1, 1))), None, TrainConfig())

    def test_epoch_losses_shrink_on_planted_instance(self):
        icm, p_fi, t, _ = planted_instance(31)
        config = TrainConfig(learning_rate=0.5, epochs=30, seed=2)
        report = sgd_train(icm, p_fi, t, None, config)
        assert report.epoch_losses[-1] < report.epoch_losses[0]


class TestFeatureWeightLearner:
    def test_fit_exposes_weights_and_report(self):
        icm, p_fi, t, _ = planted_instance(33)
        learner = FeatureWeightLearner(learning_rate=0.3, epochs=5, seed=4)
        out = learner.fit(icm, p_fi, t)
        assert out is learner
        assert learner.weights_.shape == (icm.shape[1],)
        assert len(learner.report_.epoch_losses) == 5

    def test_get_params_matches_constructor(self):
        learner = FeatureWeightLearner(learning_rate=0.1, epochs=3, seed=42)
        params = learner.get_params()
        assert params["learning_rate"] == 0.1
        assert params["epochs"] == 3
        assert params["seed"] == 42

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            FeatureWeightLearner(learning_rate=-1.0).fit(
                np.array([[1.0]]), np.array([[1.0]]), check_csr([[1.0]])
            )
