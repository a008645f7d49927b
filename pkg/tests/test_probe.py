import numpy as np
import pytest

from syntaxprobe.probe import (
    ProbeModel,
    TrainConfig,
    evaluate,
    forward,
    init_probe,
    load_checkpoint,
    loss_and_gradient,
    make_arc_features,
    save_checkpoint,
    train,
)
from syntaxprobe.repstore import AlignedDataset
from syntaxprobe.tasks import LabelVocabulary


def vocab_of(*labels):
    labels = tuple(sorted(labels))
    return LabelVocabulary(labels=labels, index={l: i for i, l in enumerate(labels)})


def dataset(X, y, task="t"):
    return AlignedDataset(
        features=np.asarray(X, dtype=np.float32),
        label_indices=np.asarray(y, dtype=np.int64),
        layer=0,
        task_name=task,
    )


class TestForward:
    def test_zero_weights_give_uniform(self):
        model = init_probe(4, vocab_of("a", "b", "c"), hidden_dim=5, seed=0)
        for name in ("W1", "b1", "W2", "b2"):
            getattr(model, name)[...] = 0.0
        p = forward(model, np.ones(4))
        assert np.allclose(p, 1.0 / 3.0)

    def test_engineered_logits(self):
        # hidden activation fixed at [1]; W2 rows make logits (ln 3, 0).
        vocab = vocab_of("a", "b")
        model = ProbeModel(
            W1=np.zeros((1, 2)), b1=np.ones(1),
            W2=np.array([[np.log(3.0)], [0.0]]), b2=np.zeros(2),
            vocab=vocab,
        )
        p = forward(model, np.zeros(2))
        assert np.allclose(p, [0.75, 0.25])

    def test_sums_to_one_many_random_cases(self):
        rng = np.random.default_rng(0)
        model = init_probe(6, vocab_of("a", "b", "c", "d"), hidden_dim=9, seed=1)
        for _ in range(1000):
            p = forward(model, rng.standard_normal(6) * 10)
            assert abs(p.sum() - 1.0) < 1e-6
            assert np.all(p >= 0)

    def test_dimension_mismatch(self):
        model = init_probe(4, vocab_of("a", "b"), hidden_dim=3, seed=0)
        with pytest.raises(ValueError):
            forward(model, np.zeros(5))

    def test_w2_scaling_preserves_argmax(self):
        rng = np.random.default_rng(2)
        model = init_probe(5, vocab_of("a", "b", "c"), hidden_dim=7, seed=3)
        x = rng.standard_normal(5)
        base = forward(model, x).argmax()
        model.W2 *= 4.0
        model.b2 *= 4.0
        assert forward(model, x).argmax() == base


class TestLossAndGradient:
    def test_uniform_loss_is_ln_k(self):
        vocab = vocab_of("a", "b", "c", "d", "e")
        model = init_probe(3, vocab, hidden_dim=4, seed=0)
        for name in ("W1", "b1", "W2", "b2"):
            getattr(model, name)[...] = 0.0
        loss, _ = loss_and_gradient(model, np.ones((6, 3)), np.zeros(6, dtype=int))
        assert abs(loss - np.log(5)) < 1e-12

    def test_duplicated_batch_invariant(self):
        rng = np.random.default_rng(1)
        model = init_probe(4, vocab_of("a", "b"), hidden_dim=5, seed=2)
        X = rng.standard_normal((8, 4))
        y = rng.integers(0, 2, size=8)
        loss1, g1 = loss_and_gradient(model, X, y)
        loss2, g2 = loss_and_gradient(model, np.vstack([X, X]), np.concatenate([y, y]))
        assert abs(loss1 - loss2) < 1e-12
        for k in g1:
            assert np.allclose(g1[k], g2[k], atol=1e-12)

    def test_unk_label_in_training_rejected(self):
        model = init_probe(3, vocab_of("a", "b"), hidden_dim=4, seed=0)
        with pytest.raises(ValueError):
            loss_and_gradient(model, np.ones((1, 3)), np.array([2]))

    @pytest.mark.parametrize("case", range(20))
    def test_gradients_match_finite_differences(self, case):
        rng = np.random.default_rng(100 + case)
        vocab = vocab_of("a", "b", "c")
        model = init_probe(5, vocab, hidden_dim=7, seed=200 + case)
        X = rng.standard_normal((4, 5))
        y = rng.integers(0, 3, size=4)
        # Keep ReLU inputs away from the kink.
        pre = X @ model.W1.T + model.b1
        bump = (np.abs(pre) < 1e-3)
        model.b1[...] += (bump.any(axis=0) * 2e-3)
        _, grads = loss_and_gradient(model, X, y)
        eps = 1e-4
        for name in ("W1", "b1", "W2", "b2"):
            param = getattr(model, name)
            flat = param.reshape(-1)
            for idx in rng.choice(flat.size, size=min(10, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + eps
                lp, _ = loss_and_gradient(model, X, y)
                flat[idx] = orig - eps
                lm, _ = loss_and_gradient(model, X, y)
                flat[idx] = orig
                numeric = (lp - lm) / (2 * eps)
                analytic = grads[name].reshape(-1)[idx]
                denom = max(abs(numeric), abs(analytic), 1e-8)
                assert abs(numeric - analytic) / denom < 1e-4


def separable_blobs(n=200, dim=10, seed=5):
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.vstack([
        rng.standard_normal((half, dim)) + 4.0,
        rng.standard_normal((n - half, dim)) - 4.0,
    ])
    y = np.array([0] * half + [1] * (n - half))
    perm = rng.permutation(n)
    return X[perm], y[perm]


def perceptron_separable(X, y, max_iters=2000):
    """Independent oracle: the pocket perceptron finds a separating plane."""
    w = np.zeros(X.shape[1] + 1)
    Xb = np.hstack([X, np.ones((len(X), 1))])
    sign = np.where(y == 0, 1.0, -1.0)
    for _ in range(max_iters):
        margins = sign * (Xb @ w)
        wrong = np.where(margins <= 0)[0]
        if len(wrong) == 0:
            return True
        i = wrong[0]
        w += sign[i] * Xb[i]
    return False


class TestTrain:
    def test_separable_blobs_reach_perfect_holdout(self):
        X, y = separable_blobs()
        assert perceptron_separable(X, y)
        vocab = vocab_of("neg", "pos")
        config = TrainConfig(max_epochs=20, patience=20, seed=11, hidden_dim=30)
        model, holdout_acc = train(dataset(X, y), vocab, config)
        assert holdout_acc == 1.0

    def test_deterministic_given_seed(self):
        X, y = separable_blobs(n=80, seed=6)
        vocab = vocab_of("neg", "pos")
        config = TrainConfig(max_epochs=5, seed=3, hidden_dim=8)
        m1, _ = train(dataset(X, y), vocab, config)
        m2, _ = train(dataset(X, y), vocab, config)
        for name in ("W1", "b1", "W2", "b2"):
            assert np.array_equal(getattr(m1, name), getattr(m2, name))

    def test_label_shuffle_falls_to_majority(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((400, 10))
        y = np.array([0] * 240 + [1] * 160)
        rng.shuffle(y)
        majority_rate = max(np.mean(y == 0), np.mean(y == 1))
        vocab = vocab_of("neg", "pos")
        config = TrainConfig(max_epochs=15, seed=8, hidden_dim=20, holdout_fraction=0.25)
        _, holdout_acc = train(dataset(X, y), vocab, config)
        assert abs(holdout_acc - majority_rate) <= 0.05

    def test_trained_model_beats_majority_on_holdout(self):
        X, y = separable_blobs(n=300, seed=9)
        vocab = vocab_of("neg", "pos")
        config = TrainConfig(max_epochs=20, seed=10, hidden_dim=30)
        model, holdout_acc = train(dataset(X, y), vocab, config)
        majority_rate = max(np.mean(y == 0), np.mean(y == 1))
        assert holdout_acc >= majority_rate

    def test_training_log_written(self, tmp_path):
        X, y = separable_blobs(n=60, seed=12)
        config = TrainConfig(max_epochs=3, seed=1, hidden_dim=5)
        log = tmp_path / "log.csv"
        train(dataset(X, y), vocab_of("a", "b"), config, log_path=log)
        lines = log.read_text().strip().splitlines()
        assert lines[0] == "epoch,loss,holdout_acc"
        assert len(lines) >= 2

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            train(dataset(np.zeros((0, 3)), []), vocab_of("a"), TrainConfig())


class TestEvaluate:
    def test_all_correct(self):
        vocab = vocab_of("a", "b")
        model = ProbeModel(
            W1=np.eye(2), b1=np.zeros(2),
            W2=np.array([[5.0, 0.0], [0.0, 5.0]]), b2=np.zeros(2), vocab=vocab,
        )
        data = dataset([[1, 0], [0, 1]], [0, 1])
        assert evaluate(model, data) == 1.0

    def test_three_of_four(self):
        vocab = vocab_of("a", "b")
        model = ProbeModel(
            W1=np.eye(2), b1=np.zeros(2),
            W2=np.array([[5.0, 0.0], [0.0, 5.0]]), b2=np.zeros(2), vocab=vocab,
        )
        data = dataset([[1, 0], [0, 1], [1, 0], [1, 0]], [0, 1, 0, 1])
        assert evaluate(model, data) == 0.75

    def test_unk_gold_counts_wrong(self):
        vocab = vocab_of("a", "b")
        model = init_probe(2, vocab, hidden_dim=3, seed=0)
        data = dataset([[1, 0]], [vocab.unk_index])
        assert evaluate(model, data) == 0.0

    def test_order_invariant(self):
        rng = np.random.default_rng(13)
        model = init_probe(4, vocab_of("a", "b", "c"), hidden_dim=6, seed=1)
        X = rng.standard_normal((50, 4))
        y = rng.integers(0, 3, size=50)
        perm = rng.permutation(50)
        assert evaluate(model, dataset(X, y)) == evaluate(model, dataset(X[perm], y[perm]))

    def test_empty_eval_rejected(self):
        model = init_probe(2, vocab_of("a"), hidden_dim=2, seed=0)
        with pytest.raises(ValueError):
            evaluate(model, dataset(np.zeros((0, 2)), []))


class TestArcFeatures:
    def test_definition(self):
        out = make_arc_features(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert out.tolist() == [1, 2, 3, 4, 3, 8]

    def test_zero_child_zeroes_product(self):
        out = make_arc_features(np.zeros(3), np.array([1.0, 2.0, 3.0]))
        assert out[6:].tolist() == [0, 0, 0]
        assert out[3:6].tolist() == [1, 2, 3]

    def test_asymmetric(self):
        a, b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
        ab = make_arc_features(a, b)
        ba = make_arc_features(b, a)
        assert not np.array_equal(ab, ba)
        assert np.array_equal(ab[4:], ba[4:])  # product block unchanged

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            make_arc_features(np.zeros(2), np.zeros(3))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        X, y = separable_blobs(n=60, seed=14)
        vocab = vocab_of("neg", "pos")
        model, _ = train(dataset(X, y), vocab, TrainConfig(max_epochs=3, seed=2, hidden_dim=6))
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.vocab.labels == model.vocab.labels
        # Weights survive as float32.
        for name in ("W1", "b1", "W2", "b2"):
            assert np.allclose(getattr(loaded, name),
                               getattr(model, name).astype(np.float32))
        assert evaluate(loaded, dataset(X, y)) == evaluate(model, dataset(X, y))
