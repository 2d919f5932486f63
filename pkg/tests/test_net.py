import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import treematch.net as net
from helpers import (dense_sgd_reference, finite_difference_check, greedy_replay, random_net,
                     random_vec, sigmoid_ref)
from treematch.featurizer import SparseFeatureVector
from treematch.net import (Architecture, ModelParams, NetError, TrainConfig,
                           forward, forward_batch, group_p_at_1, init_params, learn_architecture,
                           linear_architecture, load_model, save_model, sgd_step, train,
                           train_linear)


def _vec(active, dim):
    return SparseFeatureVector(np.array(sorted(active), dtype=np.int64), dim)


class TestArchitecture:
    def test_fully_connected(self):
        arch = learn_architecture([5, 3, 1], h1=4, k=4)
        assert (arch.connectivity == np.arange(4)).all()
        assert len(set(arch.loads([5, 3, 1]))) == 1

    def test_equal_frequencies_split_evenly(self):
        arch = learn_architecture([2, 2, 2, 2], h1=2, k=1, hidden=(2,))
        assert np.bincount(arch.connectivity.ravel()).tolist() == [2, 2]

    @pytest.mark.parametrize("k", [0, 5])
    def test_bad_density(self, k):
        with pytest.raises(NetError):
            learn_architecture([1, 2], h1=4, k=k)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_greedy_replay_and_balance(self, seed):
        rng = np.random.default_rng(seed)
        h1 = int(rng.integers(1, 30))
        k = int(rng.integers(1, h1 + 1))
        freq = rng.integers(0, 6, size=int(rng.integers(0, 80))).astype(float)
        arch = learn_architecture(freq, h1, k, seed=seed % 1000, hidden=(h1,))
        conn, loads = greedy_replay(freq, h1, k, seed % 1000)
        assert arch.connectivity.tolist() == conn
        loads = arch.loads(freq)
        assert all(len(set(row)) == k for row in arch.connectivity.tolist())
        bound = freq.max() if freq.size else 0.0
        assert loads.max() - loads.min() <= bound

    def test_validation(self):
        with pytest.raises(NetError, match="twice"):
            Architecture(1, (3,), np.array([[1, 1]]))
        with pytest.raises(NetError, match="outside"):
            Architecture(1, (3,), np.array([[3]]))


class TestForward:
    def test_zero_weights(self):
        arch = learn_architecture([1, 1, 1], 4, 2, hidden=(4, 3))
        p = init_params(arch)
        for a in [p.w1] + p.weights:
            a[...] = 0.0
        assert forward(p, arch, _vec([0, 2], 3)) == 0.0

    def test_hand_computed_chain(self):
        arch = Architecture(2, (2, 2, 2), np.array([[0], [1]]))
        p = ModelParams(np.ones((2, 1)), np.zeros(2), [np.ones((2, 2)), np.ones((2, 2)), np.ones((1, 2))],
                        [np.zeros(2), np.zeros(2), np.zeros(1)])

        def sg(z):
            return 1.0 / (1.0 + math.exp(-z))

        a1 = (sg(1.0), sg(0.0))
        a2 = sg(a1[0] + a1[1])
        a3 = sg(2 * a2)
        assert forward(p, arch, _vec([0], 2)) == pytest.approx(2 * a3, rel=1e-14)

    def test_dimension_mismatch(self):
        arch = linear_architecture(3)
        with pytest.raises(NetError, match="dimension"):
            forward(init_params(arch), arch, _vec([0], 4))

    def test_inverted_dropout(self):
        arch = Architecture(1, (2,), np.array([[0, 1]]))
        p = ModelParams(np.array([[0.5, -0.5]]), np.zeros(2), [np.array([[1.0, 1.0]])], [np.zeros(1)])
        x = _vec([0], 1)
        masks = [np.array([0.0, 1 / 0.8])]
        assert forward(p, arch, x, masks) == pytest.approx(sigmoid_ref(-0.5) / 0.8)
        assert forward(p, arch, x, [np.ones(2)]) == forward(p, arch, x)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_connectivity_storage_order(self, seed):
        rng = np.random.default_rng(seed)
        arch, p = random_net(rng)
        perm = np.array([rng.permutation(arch.k) for _ in range(arch.input_dim)])
        rows = np.arange(arch.input_dim)[:, None]
        arch2 = Architecture(arch.input_dim, arch.hidden, arch.connectivity[rows, perm])
        p2 = p.copy()
        p2.w1 = p.w1[rows, perm]
        xs = [random_vec(rng, arch.input_dim) for _ in range(5)]
        assert np.array_equal(forward_batch(p, arch, xs), forward_batch(p2, arch2, xs))

    def test_pure(self):
        rng = np.random.default_rng(0)
        arch, p = random_net(rng)
        x = random_vec(rng, arch.input_dim)
        assert forward(p, arch, x) == forward(p, arch, _vec(x.active.tolist(), arch.input_dim))


class TestBackward:
    @pytest.mark.parametrize("seed", range(8))
    def test_finite_differences(self, seed):
        assert finite_difference_check(np.random.default_rng(seed), True) < 1e-4

    @pytest.mark.parametrize("seed", range(4))
    def test_inactive_hinge(self, seed):
        finite_difference_check(np.random.default_rng(seed), False)

    @given(st.integers(0, 2**32 - 1), st.booleans())
    @settings(max_examples=40, deadline=None)
    def test_sparse_step_equals_dense_reference(self, seed, dropout):
        rng = np.random.default_rng(seed)
        arch, p = random_net(rng)
        xp, xn = random_vec(rng, arch.input_dim), random_vec(rng, arch.input_dim)
        margin = abs(forward(p, arch, xp) - forward(p, arch, xn)) + 0.5
        masks = None
        if dropout:
            masks = [(rng.random((2, h)) < 0.8) / 0.8 for h in arch.hidden]
        w1, b1, ws, bs, ref_loss = dense_sgd_reference(p, arch, xp, xn, margin, 0.3, 1e-3, masks)
        before = p.copy()
        loss, grad = net.backward_batch(p, arch, [xp], [xn], margin, masks)
        sgd_step(p, grad, 0.3, 1e-3)
        assert loss == ref_loss
        # first-layer rows are decayed lazily: only rows that received gradient move
        touched = set(xp.active.tolist()) | set(xn.active.tolist()) if loss > 0 else set()
        for i in range(arch.input_dim):
            if i in touched:
                assert np.array_equal(p.w1[i], w1[i, arch.connectivity[i]])
            else:
                assert np.array_equal(p.w1[i], before.w1[i])
        assert np.array_equal(p.b1, b1)
        for a, b in zip(p.weights + p.biases, ws + bs):
            assert np.array_equal(a, b)


def _toy_triples(rng, n, dim):
    triples = []
    for _ in range(n):
        pos = set(np.flatnonzero(rng.random(dim) < 0.3).tolist()) | {0}
        neg = set(np.flatnonzero(rng.random(dim) < 0.3).tolist()) - {0}
        triples.append((_vec(pos, dim), _vec(neg, dim)))
    return triples


def _groups(triples):
    return [[a, b] for a, b in triples]


class TestTrain:
    def test_zero_learning_rate(self):
        rng = np.random.default_rng(0)
        triples = _toy_triples(rng, 20, 6)
        arch = learn_architecture(np.ones(6), 5, 2, hidden=(5, 3))
        p0 = init_params(arch, 3)
        out = train(triples, arch, TrainConfig(lr=0.0, max_epochs=5, patience=5), _groups(triples), p0)
        assert np.array_equal(out.flat(), p0.flat())

    def test_dropout_path_with_unit_masks_is_identical(self, monkeypatch):
        rng = np.random.default_rng(1)
        triples = _toy_triples(rng, 40, 8)
        arch = learn_architecture(np.ones(8), 6, 2, hidden=(6, 4))
        cfg = TrainConfig(lr=0.5, dropout=0.0, max_epochs=4, patience=4, batch_size=8)
        h1, h2 = [], []
        a = train(triples, arch, cfg, _groups(triples), history=h1)
        monkeypatch.setattr(net, "_masks", lambda rng, arch, batch, rate:
                            [np.ones((batch, h)) for h in arch.hidden])
        b = train(triples, arch, cfg, _groups(triples), history=h2)
        assert np.array_equal(a.flat(), b.flat()) and h1 == h2

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        triples = _toy_triples(rng, 40, 8)
        arch = learn_architecture(np.ones(8), 6, 2, hidden=(6, 4))
        cfg = TrainConfig(max_epochs=3, seed=9)
        a = train(triples, arch, cfg, _groups(triples))
        b = train(triples, arch, cfg, _groups(triples))
        assert np.array_equal(a.flat(), b.flat())

    def test_loss_decreases_on_a_smoke_set(self):
        rng = np.random.default_rng(3)
        triples = _toy_triples(rng, 10, 6)
        arch = learn_architecture(np.ones(6), 5, 2, hidden=(5, 4, 3))
        hist = []
        train(triples, arch, TrainConfig(lr=0.05, dropout=0.0, max_epochs=8, patience=8),
              _groups(triples), history=hist)
        losses = [r.loss for r in hist[:5]]
        assert len(losses) == 5
        assert all(b <= a for a, b in zip(losses, losses[1:]))

    def test_learns_the_separating_feature(self):
        rng = np.random.default_rng(4)
        triples = _toy_triples(rng, 60, 6)
        arch, p = train_linear(triples, TrainConfig(dropout=0.0, max_epochs=10), _groups(triples))
        assert p.w1[0, 0] > 0
        assert group_p_at_1(lambda xs: forward_batch(p, arch, xs), _groups(triples)) == 1.0

    def test_no_features_means_no_wins(self):
        empty = _vec([], 4)
        triples = [(empty, empty)] * 5
        arch, p = train_linear(triples, TrainConfig(max_epochs=3), _groups(triples))
        scores = forward_batch(p, arch, [empty, empty])
        assert scores[0] == scores[1]
        # strict ties never count as a win
        assert group_p_at_1(lambda xs: forward_batch(p, arch, xs), _groups(triples)) == 0.0

    def test_empty_sets(self):
        arch = linear_architecture(2)
        with pytest.raises(NetError):
            train([], arch, TrainConfig(), [[_vec([], 2)]])

    @pytest.mark.parametrize("kw", [{"margin": 0}, {"dropout": 1.0}, {"patience": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(NetError):
            TrainConfig(**kw)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        arch, p = random_net(rng)
        save_model(tmp_path / "m.json", arch, p, {"seed": 1})
        arch2, p2, meta = load_model(tmp_path / "m.json")
        assert np.array_equal(arch2.connectivity, arch.connectivity) and arch2.hidden == arch.hidden
        assert np.array_equal(p2.flat(), p.flat()) and meta == {"seed": 1}

    def test_linear_round_trip(self, tmp_path):
        arch = linear_architecture(3)
        p = init_params(arch)
        save_model(tmp_path / "m.json", arch, p)
        arch2, p2, _ = load_model(tmp_path / "m.json")
        assert arch2.hidden == () and np.array_equal(p2.flat(), p.flat())

    def test_shape_errors(self, tmp_path):
        arch = learn_architecture([1, 1], 3, 2, hidden=(3, 2))
        p = init_params(arch)
        p.weights[0] = np.zeros((3, 3))
        save_model(tmp_path / "m.json", arch, p)
        with pytest.raises(NetError, match="dense layer"):
            load_model(tmp_path / "m.json")

    def test_wrong_format(self, tmp_path):
        (tmp_path / "m.json").write_text('{"format": "other"}')
        with pytest.raises(NetError, match="not a"):
            load_model(tmp_path / "m.json")
