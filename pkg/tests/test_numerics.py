import numpy as np
import pytest

from rlforecast.errors import ConfigurationError, NumericError, UsageError
from rlforecast.numerics import (GRU, LSTM, Adam, BiLSTM, Conv1d, Linear, NetworkParams, Tensor,
                                 concat, conv1d, gru_cell, gru_sequence, lstm_cell,
                                 lstm_sequence, no_grad, pick)
from rlforecast.numerics.gradcheck import check_gradients, numerical_gradients
from rlforecast.numerics.network import Network, load_into, save_network


def make_linear(w, b):
    params = NetworkParams()
    layer = Linear(params, "fc", len(w), len(w[0]), np.random.default_rng(0))
    params["fc.weight"].data[...] = w
    params["fc.bias"].data[...] = b
    return params, layer


class TestLinear:
    def test_identity_weights(self):
        _, layer = make_linear(np.eye(2), [0, 0])
        np.testing.assert_array_equal(layer(Tensor([[1.0, 0.0]])).data, [[1.0, 0.0]])

    def test_hand_matrix_multiply(self):
        _, layer = make_linear([[1, 0], [0, 1]], [3, 3])
        np.testing.assert_array_equal(layer(Tensor([[1.0, 2.0]])).data, [[4.0, 5.0]])

    def test_width_mismatch(self):
        _, layer = make_linear(np.eye(2), [0, 0])
        with pytest.raises(ConfigurationError):
            layer(Tensor([[1.0, 2.0, 3.0]]))


class TestConv1d:
    def run(self, x, kernel, stride=1):
        w = Tensor(np.asarray(kernel, dtype=float).reshape(-1, 1, 1))
        return conv1d(Tensor(np.asarray(x, dtype=float).reshape(1, -1, 1)), w, stride=stride)

    def test_unit_kernel_is_identity(self):
        np.testing.assert_array_equal(self.run([1, 2, 3], [1]).data.ravel(), [1, 2, 3])

    def test_hand_convolution(self):
        np.testing.assert_array_equal(self.run([1, 2, 3], [1, 1]).data.ravel(), [3, 5])

    def test_kernel_longer_than_input(self):
        with pytest.raises(ConfigurationError):
            self.run([1, 2], [1, 1, 1])

    @pytest.mark.parametrize("length,kernel,stride", [(10, 3, 1), (10, 3, 2), (9, 4, 3), (5, 5, 1)])
    def test_output_length(self, length, kernel, stride):
        out = self.run(np.arange(length), np.ones(kernel), stride)
        assert out.shape[1] == (length - kernel) // stride + 1


class TestRecurrent:
    def zero_layer(self, cls, hidden=4):
        params = NetworkParams()
        layer = cls(params, "r", 3, hidden, np.random.default_rng(0))
        for p in params.values():
            p.data[...] = 0.0
        return layer

    def test_lstm_zero_params_zero_state(self):
        layer = self.zero_layer(LSTM)
        xw = Tensor(np.zeros((2, 16)))
        hc = lstm_cell(xw, Tensor(np.zeros((2, 8))), layer.w_hidden)
        np.testing.assert_array_equal(hc.data, 0.0)
        x = Tensor(np.random.default_rng(1).normal(size=(2, 5, 3)))
        np.testing.assert_array_equal(layer(x).data, 0.0)

    def test_gru_zero_params_zero_state(self):
        layer = self.zero_layer(GRU)
        h = gru_cell(Tensor(np.zeros((2, 12))), Tensor(np.zeros((2, 4))), layer.w_hidden)
        np.testing.assert_array_equal(h.data, 0.0)
        x = Tensor(np.random.default_rng(1).normal(size=(2, 5, 3)))
        np.testing.assert_array_equal(layer(x).data, 0.0)

    def test_bilstm_width(self):
        params = NetworkParams()
        layer = BiLSTM(params, "bi", 1, 16, np.random.default_rng(0))
        out = layer(Tensor(np.ones((3, 35, 1))))
        assert out.shape == (3, 32) and layer.output_size == 32

    def test_state_width_mismatch(self):
        params = NetworkParams()
        layer = LSTM(params, "l", 2, 4, np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            lstm_cell(Tensor(np.zeros((1, 16))), Tensor(np.zeros((1, 6))), layer.w_hidden)
        with pytest.raises(ConfigurationError):
            layer(Tensor(np.zeros((1, 5, 3))))

    @pytest.mark.parametrize("reverse", [False, True])
    def test_sequence_kernel_matches_stepwise_cells(self, reverse):
        rng = np.random.default_rng(3)
        for cls, cell, gates, packed in ((GRU, gru_cell, 3, 1), (LSTM, lstm_cell, 4, 2)):
            params = NetworkParams()
            layer = cls(params, "r", 2, 5, rng)
            xw = rng.normal(size=(3, 7, gates * 5))
            state = Tensor(np.zeros((3, packed * 5)))
            order = range(6, -1, -1) if reverse else range(7)
            for t in order:
                state = cell(Tensor(xw[:, t, :]), state, layer.w_hidden)
            seq = (gru_sequence if cls is GRU else lstm_sequence)(Tensor(xw), layer.w_hidden, reverse)
            np.testing.assert_allclose(seq.data, state.data[:, :5], rtol=1e-12, atol=1e-14)


class TestBackward:
    def test_sum_of_linear_map(self):
        params, layer = make_linear(np.random.default_rng(0).normal(size=(2, 2)), [0, 0])
        params.zero_grad()
        layer(Tensor([[1.0, 1.0]])).sum().backward()
        np.testing.assert_array_equal(params["fc.weight"].grad, np.ones((2, 2)))

    def test_unused_parameter_gets_zero(self):
        params, layer = make_linear(np.eye(2), [0, 0])
        extra = params.add("unused", np.ones(3))
        params.zero_grad()
        layer(Tensor([[1.0, 2.0]])).sum().backward()
        np.testing.assert_array_equal(extra.grad, 0.0)

    def test_backward_before_forward(self):
        params = NetworkParams()
        w = params.add("w", np.ones(1))
        with pytest.raises(UsageError):
            w.backward()
        with pytest.raises(UsageError):
            Tensor(np.ones(1)).backward()

    def test_backward_twice_is_rejected(self):
        params, layer = make_linear(np.eye(2), [0, 0])
        loss = layer(Tensor([[1.0, 2.0]])).sum()
        loss.backward()
        with pytest.raises(UsageError):
            loss.backward()

    def test_non_scalar_loss(self):
        params, layer = make_linear(np.eye(2), [0, 0])
        with pytest.raises(UsageError):
            layer(Tensor([[1.0, 2.0]])).backward()

    def test_no_grad_records_nothing(self):
        params, layer = make_linear(np.eye(2), [0, 0])
        with no_grad():
            out = layer(Tensor([[1.0, 2.0]])).sum()
        assert not out.requires_grad

    def test_shared_input_accumulates(self):
        params = NetworkParams()
        w = params.add("w", np.array([3.0]))
        (w * w + w).sum().backward()
        np.testing.assert_allclose(w.grad, [7.0])


def _random_loss(out: Tensor, rng) -> Tensor:
    weights = Tensor(rng.normal(size=out.shape))
    return (out * weights).square().sum() * 0.5 + (out * weights).sum()


@pytest.mark.parametrize("seed", range(3))
class TestFiniteDifferences:
    def check(self, build, seed):
        rng = np.random.default_rng(seed)
        params = NetworkParams()
        forward, x = build(params, rng)
        loss_rng_state = rng.bit_generator.state

        def loss_fn():
            r = np.random.default_rng(0)
            r.bit_generator.state = loss_rng_state
            return _random_loss(forward(x), r)

        assert check_gradients(loss_fn, params) < 1e-4

    def test_linear(self, seed):
        def build(params, rng):
            layer = Linear(params, "fc", 4, 3, rng)
            return (lambda x: layer(x).tanh()), Tensor(rng.normal(size=(5, 4)))
        self.check(build, seed)

    def test_conv1d(self, seed):
        def build(params, rng):
            layer = Conv1d(params, "c", 2, 3, 3, rng, stride=1 + seed % 2)
            return (lambda x: layer(x).relu()), Tensor(rng.normal(size=(2, 9, 2)))
        self.check(build, seed)

    def test_lstm(self, seed):
        def build(params, rng):
            layer = LSTM(params, "l", 2, 3, rng, reverse=bool(seed % 2))
            return layer, Tensor(rng.normal(size=(2, 6, 2)))
        self.check(build, seed)

    def test_gru(self, seed):
        def build(params, rng):
            layer = GRU(params, "g", 2, 3, rng, reverse=bool(seed % 2))
            return layer, Tensor(rng.normal(size=(2, 6, 2)))
        self.check(build, seed)

    def test_bilstm(self, seed):
        def build(params, rng):
            layer = BiLSTM(params, "b", 1, 3, rng)
            return layer, Tensor(rng.normal(size=(2, 5, 1)))
        self.check(build, seed)

    def test_single_cells(self, seed):
        def build(params, rng):
            lstm = LSTM(params, "l", 2, 3, rng)
            gru = GRU(params, "g", 2, 3, rng)
            hc0 = params.add("hc0", rng.normal(size=(2, 6)))
            h0 = params.add("h0", rng.normal(size=(2, 3)))
            xl = params.add("xl", rng.normal(size=(2, 12)))
            xg = params.add("xg", rng.normal(size=(2, 9)))

            def forward(_):
                hc = lstm_cell(xl, lstm_cell(xl, hc0, lstm.w_hidden), lstm.w_hidden)
                h = gru_cell(xg, gru_cell(xg, h0, gru.w_hidden), gru.w_hidden)
                return concat([hc, h], axis=1)
            return forward, None
        self.check(build, seed)

    def test_pick_and_reductions(self, seed):
        def build(params, rng):
            q = params.add("q", rng.normal(size=(4, 3)))
            idx = rng.integers(0, 3, size=4)
            return (lambda _: (pick(q, idx) - q.mean(axis=1)).exp()), None
        self.check(build, seed)


def test_numerical_gradient_of_quadratic():
    params = NetworkParams()
    w = params.add("w", np.array([1.0, -2.0]))
    grads = numerical_gradients(lambda: (w * w).sum(), params)
    np.testing.assert_allclose(grads["w"], [2.0, -4.0], rtol=1e-8)


class TestAdam:
    def scalar(self, value=1.0):
        params = NetworkParams()
        return params, params.add("w", np.array([value]))

    def test_zero_gradient_is_noop(self):
        params, w = self.scalar(0.3)
        opt = Adam(params, lr=0.1)
        params.zero_grad()
        opt.step()
        assert w.data[0] == 0.3

    def test_first_step_moves_by_lr(self):
        params, w = self.scalar(1.0)
        opt = Adam(params, lr=0.1)
        w.grad[...] = 1.0
        opt.step()
        assert w.data[0] == pytest.approx(0.9, abs=1e-6)

    def test_repeated_steps_monotone(self):
        params, w = self.scalar(1.0)
        opt = Adam(params, lr=0.1)
        values = []
        for _ in range(2):
            w.grad[...] = 1.0
            opt.step()
            values.append(w.data[0])
        assert 1.0 > values[0] > values[1]

    def test_gradients_untouched(self):
        params, w = self.scalar(1.0)
        w.grad[...] = 0.5
        Adam(params).step()
        assert w.grad[0] == 0.5


class _Tiny(Network):
    kind = "tiny"
    input_width = 3
    output_width = 2

    def __init__(self, config, seed):
        super().__init__(config, seed)
        self.fc = Linear(self.params, "fc", 3, config["out"], np.random.default_rng(seed))

    def forward(self, x):
        return self.fc(x)


class TestNetwork:
    def test_determinism(self):
        a, b = _Tiny({"out": 2}, 5), _Tiny({"out": 2}, 5)
        x = np.random.default_rng(0).normal(size=(4, 3))
        assert a.params.digest() == b.params.digest()
        np.testing.assert_array_equal(a.predict(x), b.predict(x))

    def test_non_finite_output_raises(self):
        net = _Tiny({"out": 2}, 0)
        net.params["fc.bias"].data[0] = np.inf
        with pytest.raises(NumericError):
            net.predict(np.zeros((1, 3)))

    def test_input_width_checked(self):
        with pytest.raises(ConfigurationError):
            _Tiny({"out": 2}, 0).predict(np.zeros((1, 4)))

    def test_save_load_roundtrip(self, tmp_path):
        net = _Tiny({"out": 2}, 1)
        path = save_network(net, tmp_path)
        assert path.name == f"tiny-{net.fingerprint}.model"
        other = _Tiny({"out": 2}, 99)
        load_into(other, path)
        assert other.params.digest() == net.params.digest()

    def test_fingerprint_mismatch_refused(self, tmp_path):
        path = save_network(_Tiny({"out": 2}, 1), tmp_path)
        with pytest.raises(ConfigurationError):
            load_into(_Tiny({"out": 3}, 1), path)
