import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gradcheck import numeric_grad, rel_error
from kgstruct.evaluation import FilterIndex, evaluate
from kgstruct.exceptions import ValidationError
from kgstruct.nn import MLP, sigmoid
from kgstruct.synthetic import planted_kg
from kgstruct.twigi import TwigI, random_scorer


@pytest.fixture(scope="module")
def small_planted():
    return planted_kg(n_entities=60, n_triples=500, seed=5)


class TestMLP:
    def test_output_range_and_shape(self):
        net = MLP([4, 6, 1], rng=np.random.default_rng(0))
        y = net.predict(np.random.default_rng(1).normal(size=(10, 4)))
        assert y.shape == (10, 1) and ((y > 0) & (y < 1)).all()

    def test_init_bounds(self):
        net = MLP([9, 5, 1], rng=np.random.default_rng(0))
        assert np.abs(net.weights[0]).max() <= 1 / 3
        assert not any(b.any() for b in net.biases)

    def test_width_mismatch(self):
        with pytest.raises(ValidationError):
            MLP([3, 1]).forward(np.zeros((2, 4)))

    def test_bad_construction(self):
        with pytest.raises(ValidationError):
            MLP([3])
        with pytest.raises(ValidationError):
            MLP([3, 1], hidden="tanh")
        with pytest.raises(ValidationError):
            MLP([3, 1], dropout=1.0)

    def test_sigmoid_stable(self):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        assert_array_equal(out, [0.0, 0.5, 1.0])

    @pytest.mark.parametrize("hidden,output", [("relu", "sigmoid"), ("relu", "relu"), ("sigmoid", "identity")])
    def test_backward_matches_finite_difference(self, hidden, output):
        rng = np.random.default_rng(2)
        net = MLP([5, 7, 4, 2], hidden=hidden, output=output, rng=rng)
        X = rng.normal(size=(6, 5))
        W = rng.normal(size=(6, 2))
        loss = lambda: float((net.predict(X) * W).sum())
        _, cache = net.forward(X)
        grads, dX = net.backward(cache, W)
        assert rel_error(grads, numeric_grad(loss, net.params)) < 1e-4
        assert rel_error([dX], numeric_grad(loss, [X])) < 1e-4

    def test_dropout_is_inverted_and_train_only(self):
        net = MLP([3, 200, 1], output="identity", dropout=0.5, rng=np.random.default_rng(0))
        X = np.ones((1, 3))
        assert_array_equal(net.predict(X), net.predict(X))
        with pytest.raises(ValidationError):
            net.forward(X, training=True)
        _, cache = net.forward(X, training=True, rng=np.random.default_rng(1))
        keep = cache[0][3]
        assert set(np.unique(keep)) <= {0.0, 2.0}

    def test_state_roundtrip(self):
        a, b = MLP([3, 4, 1], rng=np.random.default_rng(0)), MLP([3, 4, 1], rng=np.random.default_rng(9))
        b.set_state(a.get_state())
        X = np.random.default_rng(3).normal(size=(5, 3))
        assert_array_equal(a.predict(X), b.predict(X))
        with pytest.raises(ValidationError):
            b.set_state(a.get_state()[:-1])


class TestTwigI:
    def test_batch_gradient_matches_finite_difference(self, small_planted):
        model = TwigI(npp=3, margin=0.5).init_network().attach(small_planted)
        rng = np.random.default_rng(0)
        for w in model.network_.weights:
            w[...] = rng.normal(size=w.shape)
        pos = small_planted.train[:6]
        neg = small_planted.train[rng.integers(0, len(small_planted.train), 18)]
        _, grads = model._batch_gradients(pos, neg)
        num = numeric_grad(lambda: model.batch_loss(pos, neg), model.network_.params)
        assert rel_error(grads, num) < 1e-4

    def test_network_shape_follows_ablation(self):
        model = TwigI(ablation=("so_cofreq", "s_deg")).init_network()
        assert model.network_.sizes == [20, 24, 8, 1]
        assert "so_cofreq" not in model.feature_names_

    def test_zero_lr_is_a_no_op(self, small_planted):
        fitted = TwigI(lr=0.0, epochs=2).fit(small_planted)
        fresh = TwigI().init_network()
        for a, b in zip(fitted.network_.params, fresh.network_.params):
            assert_array_equal(a, b)

    def test_zero_epochs_keeps_init(self, small_planted):
        model = TwigI(epochs=0).fit(small_planted)
        assert model.loss_history_ == [] and model.stages_ == 1

    @pytest.mark.parametrize("bad", [{"lr": -1.0}, {"npp": 0}, {"margin": -0.1}, {"epochs": -1}])
    def test_invalid_params(self, small_planted, bad):
        with pytest.raises(ValidationError):
            TwigI(**bad).fit(small_planted)

    def test_determinism(self, small_planted):
        a = TwigI(epochs=2, seed=3).fit(small_planted)
        b = TwigI(epochs=2, seed=3).fit(small_planted)
        assert a.loss_history_ == b.loss_history_
        assert a.score(small_planted) == b.score(small_planted)

    def test_training_beats_random(self, small_planted):
        model = TwigI(epochs=5).fit(small_planted)
        rand = evaluate(random_scorer(0), small_planted.valid, small_planted.n_entities,
                        FilterIndex.from_kg(small_planted)).mrr
        assert model.score(small_planted) > rand

    def test_finetune_counts_stages_and_reattaches(self, small_planted):
        other = planted_kg(n_entities=40, n_triples=300, seed=6, name="other")
        model = TwigI(epochs=1).fit(small_planted)
        first = [p.copy() for p in model.network_.params]
        model.finetune(other, epochs=1, lr=1e-3)
        assert model.stages_ == 2 and model.kg_name_ == "other" and model.lr == 1e-3
        assert len(model.loss_history_) == 2
        assert any(not np.array_equal(a, b) for a, b in zip(first, model.network_.params))

    def test_finetune_requires_fit(self, small_planted):
        with pytest.raises(Exception):
            TwigI().finetune(small_planted)

    def test_scorer_for_other_graph(self, small_planted):
        other = planted_kg(n_entities=40, n_triples=300, seed=6)
        model = TwigI(epochs=1).fit(small_planted)
        scores = model.scorer_for(other)(other.test[:5])
        assert scores.shape == (5,)

    def test_random_scorer_reproducible(self):
        t = np.zeros((4, 3), dtype=int)
        assert_array_equal(random_scorer(1)(t), random_scorer(1)(t))


def test_planted_kg_properties():
    kg = planted_kg(n_entities=100, n_triples=800, seed=0)
    assert kg.n_entities <= 100
    all_t = kg.all_triples()
    assert (all_t[:, 0] != all_t[:, 2]).all()
    assert len({tuple(t) for t in all_t.tolist()}) == len(all_t)
    fresh = planted_kg(n_entities=100, n_triples=800, seed=0, fresh_test_pairs=True)
    train_pairs = {(s, o) for s, _, o in fresh.train.tolist()}
    assert not any((s, o) in train_pairs for s, _, o in fresh.test.tolist())
