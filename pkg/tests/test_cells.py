import numpy as np
import pytest

from cogtrans import cells, tensor as T
from cogtrans.cells import (
    bidirectional_encode,
    cell_step,
    dropout,
    gru_step,
    init_cell_params,
    init_embedding,
    lstm_step,
    zero_state,
)
from cogtrans.errors import EmptyInput, InvalidArgument, InvalidShape


def _zeroed(kind, in_dim, h):
    p = init_cell_params(kind, in_dim, h, np.random.default_rng(0))
    for t in p.weights.values():
        t.data[...] = 0.0
    return p


def _rand(kind, in_dim, h, seed=0):
    return init_cell_params(kind, in_dim, h, np.random.default_rng(seed))


class TestLSTM:
    def test_zero_weights_zero_output(self):
        p = _zeroed("lstm", 3, 2)
        h, c = lstm_step(T.Tensor(np.ones(3)), T.Tensor(np.zeros(2)),
                         T.Tensor(np.zeros(2)), p)
        assert np.allclose(h.data, 0.0)
        assert np.allclose(c.data, 0.0)

    def test_saturated_gates_carry_cell(self):
        p = _zeroed("lstm", 2, 2)
        p.weights["b_f"].data[...] = 50.0
        p.weights["b_i"].data[...] = -50.0
        c0 = np.array([0.3, -0.7])
        _, c1 = lstm_step(T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)),
                          T.Tensor(c0), p)
        assert np.allclose(c1.data, c0, atol=1e-12)

    def test_matches_scalar_oracle(self):
        p = _rand("lstm", 2, 2, seed=3)
        x = np.array([0.3, -0.4])
        h0 = np.array([0.1, 0.2])
        c0 = np.array([-0.2, 0.5])
        h1, c1 = lstm_step(T.Tensor(x), T.Tensor(h0), T.Tensor(c0), p)
        z = np.concatenate([x, h0])

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        w = {k: t.data for k, t in p.weights.items()}
        i = sig(z @ w["W_i"] + w["b_i"])
        f = sig(z @ w["W_f"] + w["b_f"])
        g = np.tanh(z @ w["W_g"] + w["b_g"])
        o = sig(z @ w["W_o"] + w["b_o"])
        c_ref = f * c0 + i * g
        h_ref = o * np.tanh(c_ref)
        assert np.allclose(c1.data, c_ref, atol=1e-12)
        assert np.allclose(h1.data, h_ref, atol=1e-12)

    def test_dim_mismatch(self):
        p = _rand("lstm", 3, 2)
        with pytest.raises(InvalidShape):
            lstm_step(T.Tensor(np.ones(4)), T.Tensor(np.zeros(2)),
                      T.Tensor(np.zeros(2)), p)

    def test_forget_bias_initialized_positive(self):
        p = _rand("lstm", 3, 4, seed=1)
        assert (p.weights["b_f"].data >= 1.0 - 0.09).all()


class TestGRU:
    def test_zero_weights_halve_state(self):
        p = _zeroed("gru", 3, 2)
        h0 = np.array([0.4, -0.8])
        h1 = gru_step(T.Tensor(np.ones(3)), T.Tensor(h0), p)
        assert np.allclose(h1.data, 0.5 * h0)

    def test_saturated_update_gate_carries_state(self):
        p = _zeroed("gru", 2, 2)
        p.weights["b_z"].data[...] = 50.0
        h0 = np.array([0.3, -0.1])
        h1 = gru_step(T.Tensor(np.ones(2)), T.Tensor(h0), p)
        assert np.allclose(h1.data, h0, atol=1e-12)

    def test_matches_scalar_oracle(self):
        p = _rand("gru", 2, 2, seed=5)
        x = np.array([0.2, -0.6])
        h0 = np.array([0.4, 0.1])
        h1 = gru_step(T.Tensor(x), T.Tensor(h0), p)

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        w = {k: t.data for k, t in p.weights.items()}
        zc = np.concatenate([x, h0])
        z = sig(zc @ w["W_z"] + w["b_z"])
        r = sig(zc @ w["W_r"] + w["b_r"])
        n = np.tanh(np.concatenate([x, r * h0]) @ w["W_n"] + w["b_n"])
        h_ref = z * h0 + (1.0 - z) * n
        assert np.allclose(h1.data, h_ref, atol=1e-12)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_cell_step_gradients(kind):
    p = _rand(kind, 3, 4, seed=7)
    x = T.Tensor(np.random.default_rng(1).normal(size=(2, 3)))

    def f():
        state = zero_state(p, batch=2)
        h, state = cell_step(x, state, p)
        h, state = cell_step(x, state, p)
        return T.tsum(T.mul(h, h))

    assert T.finite_diff_check(f, p.weights) < 1e-4


class TestBidirectional:
    def test_length_and_dim(self):
        pf, pb = _rand("lstm", 3, 80, 0), _rand("lstm", 3, 80, 1)
        seq = [T.Tensor(np.random.default_rng(i).normal(size=3))
               for i in range(4)]
        out = bidirectional_encode(seq, pf, pb)
        assert len(out) == 4
        assert out[0].shape[-1] == 160

    def test_single_step_is_concat_of_both_directions(self):
        pf, pb = _rand("gru", 3, 2, 0), _rand("gru", 3, 2, 1)
        x = T.Tensor(np.array([0.1, 0.2, 0.3]))
        out = bidirectional_encode([x], pf, pb)
        hf = gru_step(x, T.Tensor(np.zeros(2)), pf)
        hb = gru_step(x, T.Tensor(np.zeros(2)), pb)
        assert np.allclose(out[0].data,
                           np.concatenate([hf.data, hb.data]))

    def test_reversal_symmetry(self):
        pf, pb = _rand("lstm", 3, 2, 0), _rand("lstm", 3, 2, 1)
        seq = [T.Tensor(np.random.default_rng(i).normal(size=3))
               for i in range(5)]
        ab = bidirectional_encode(seq, pf, pb)
        ba = bidirectional_encode(seq[::-1], pb, pf)
        h = 2
        for t in range(5):
            fwd, bwd = ab[t].data[:h], ab[t].data[h:]
            rb, rf = ba[4 - t].data[:h], ba[4 - t].data[h:]
            assert np.allclose(fwd, rf) and np.allclose(bwd, rb)

    def test_empty_sequence(self):
        pf, pb = _rand("lstm", 3, 2, 0), _rand("lstm", 3, 2, 1)
        with pytest.raises(EmptyInput):
            bidirectional_encode([], pf, pb)


class TestDropout:
    def test_rate_zero_identity(self):
        x = T.Tensor(np.arange(6.0).reshape(2, 3))
        r = np.random.default_rng(0)
        for mode in ("train", "eval"):
            assert np.array_equal(dropout(x, 0.0, mode, r).data, x.data)

    def test_eval_identity(self):
        x = T.Tensor(np.ones((2, 3)))
        assert np.array_equal(
            dropout(x, 0.5, "eval", np.random.default_rng(0)).data, x.data)

    def test_inverted_scaling_preserves_mean(self):
        r = np.random.default_rng(0)
        x = T.Tensor(np.ones((100, 1000)))
        out = dropout(x, 0.2, "train", r)
        assert out.data.mean() == pytest.approx(1.0, rel=0.01)

    def test_bad_rate(self):
        x = T.Tensor(np.ones(3))
        with pytest.raises(InvalidArgument):
            dropout(x, 1.0, "train", np.random.default_rng(0))
        with pytest.raises(InvalidArgument):
            dropout(x, -0.1, "train", np.random.default_rng(0))

    def test_bad_mode(self):
        with pytest.raises(InvalidArgument):
            dropout(T.Tensor(np.ones(3)), 0.2, "test",
                    np.random.default_rng(0))


class TestEmbedding:
    def test_shapes_and_trainable(self):
        emb = init_embedding(7, 4, np.random.default_rng(0))
        assert emb.vocab_size == 7 and emb.embed_dim == 4
        assert emb.table.requires_grad

    def test_pretrained_rows_used(self):
        table = np.arange(12.0).reshape(4, 3)
        emb = init_embedding(4, 3, np.random.default_rng(0),
                             pretrained=table)
        assert np.array_equal(emb.table.data, table)

    def test_pretrained_shape_checked(self):
        with pytest.raises(InvalidShape):
            init_embedding(4, 3, np.random.default_rng(0),
                           pretrained=np.zeros((2, 3)))
