import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesac.errors import DimensionError, NumericError, StateError
from edgesac.nn import (
    Adam,
    AdamState,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Network,
    ReLU,
    Tanh,
    adam_step,
    gradient_check,
    mlp,
    softmax,
    softmax_cross_entropy,
)


def test_dense_identity():
    net = Network([Dense(2, 2, weight=np.eye(2))])
    np.testing.assert_array_equal(net.forward(np.array([2.0, 3.0])), [2.0, 3.0])


def test_relu_definition():
    net = Network([ReLU()])
    np.testing.assert_array_equal(net.forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_conv1d_centered_delta():
    conv = Conv1d(1, 1, 3, weight=np.array([[[0.0, 1.0, 0.0]]]))
    net = Network([conv])
    out = net.forward(np.array([[5.0, 7.0, 9.0, 11.0]]))
    np.testing.assert_array_equal(out, [[7.0, 9.0]])


def test_dense_backward_linear_map():
    w = np.array([[0.5, -1.5], [2.0, 3.0]])
    net = Network([Dense(2, 2, weight=w)])
    net.forward(np.array([1.0, 2.0]))
    grads, dx = net.backward(np.array([1.0, 0.0]))
    np.testing.assert_array_equal(grads[0][0], [1.0, 2.0])
    np.testing.assert_array_equal(grads[0][1], [0.0, 0.0])
    np.testing.assert_array_equal(dx, w[0])


def test_zero_output_gradient_gives_zero_param_gradients():
    rng = np.random.default_rng(3)
    net = Network([Conv1d(2, 3, 3, rng), ReLU(), Flatten(), Dense(12, 4, rng), Tanh(), Dense(4, 2, rng)])
    out = net.forward(rng.standard_normal((5, 2, 6)))
    grads, dx = net.backward(np.zeros_like(out))
    assert all(not np.any(g) for g in grads)
    assert not np.any(dx)


def test_backward_without_forward_is_state_error():
    net = mlp([3, 4, 2], seed=0)
    with pytest.raises(StateError):
        net.backward(np.zeros(2))
    net.forward(np.zeros(3))
    net.backward(np.zeros(2))
    with pytest.raises(StateError):
        net.backward(np.zeros(2))


def test_dimension_error_names_layer():
    net = mlp([3, 4, 2], seed=0)
    with pytest.raises(DimensionError, match="layer 0"):
        net.forward(np.zeros(5))
    conv = Network([Conv1d(2, 1, 3)])
    with pytest.raises(DimensionError, match="conv1d"):
        conv.forward(np.zeros((1, 3, 8)))


def test_non_finite_input_rejected():
    with pytest.raises(NumericError):
        mlp([2, 2], seed=0).forward(np.array([1.0, np.nan]))


def test_parameter_shape_validation():
    with pytest.raises(DimensionError):
        Dense(3, 2, weight=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Dropout(1.0)


@pytest.mark.parametrize(
    "layers, shape, training",
    [
        (lambda r: [Dense(6, 5, r), Dense(5, 3, r)], (4, 6), False),
        (lambda r: [Dense(6, 5, r), ReLU(), Dense(5, 3, r)], (4, 6), False),
        (lambda r: [Dense(6, 5, r), Tanh(), Dense(5, 3, r)], (4, 6), False),
        (lambda r: [Dense(6, 8, r), ReLU(), Dropout(0.5), Dense(8, 3, r)], (4, 6), True),
        (lambda r: [Conv1d(2, 3, 3, r), Tanh(), Flatten(), Dense(18, 3, r)], (4, 2, 8), False),
        (lambda r: [Conv1d(3, 4, 3, r), ReLU(), Conv1d(4, 2, 3, r), Flatten(), Dense(8, 2, r)], (3, 3, 8), False),
    ],
    ids=["dense", "relu", "tanh", "dropout", "conv1d", "conv1d-stack"],
)
def test_finite_difference_every_layer_kind(layers, shape, training):
    rng = np.random.default_rng(11)
    net = Network(layers(rng), seed=5)
    errs = gradient_check(net, rng.standard_normal(shape), n_probes=120, training=training)
    assert len(errs) >= 100
    assert errs.max() < 1e-4


def test_input_gradient_matches_finite_difference():
    rng = np.random.default_rng(2)
    net = Network([Conv1d(2, 2, 3, rng), Tanh(), Flatten(), Dense(8, 3, rng)])
    x = rng.standard_normal((1, 2, 6))
    g = rng.standard_normal((1, 3))
    net.forward(x)
    _, dx = net.backward(g)
    h = 1e-5
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        num = (np.sum(g * net.forward(xp)) - np.sum(g * net.forward(xm))) / (2 * h)
        assert abs(num - dx[idx]) < 1e-7 * max(1.0, abs(num))


def test_dropout_inference_is_identity_and_training_masks_are_seeded():
    x = np.ones((3, 50))
    a = Network([Dropout(0.5)], seed=4)
    b = Network([Dropout(0.5)], seed=4)
    np.testing.assert_array_equal(a.forward(x), x)
    ya, yb = a.forward(x, training=True), b.forward(x, training=True)
    np.testing.assert_array_equal(ya, yb)
    assert set(np.unique(ya)) <= {0.0, 2.0}


def test_forward_determinism():
    x = np.random.default_rng(0).standard_normal((8, 5))
    a = mlp([5, 16, 3], seed=9, dropout=0.5)
    b = mlp([5, 16, 3], seed=9, dropout=0.5)
    np.testing.assert_array_equal(a.forward(x, training=True), b.forward(x, training=True))


def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(8)
    net = Network([Conv1d(2, 3, 3, rng), ReLU(), Flatten(), Dense(12, 4, rng), Tanh(), Dropout(0.25), Dense(4, 2, rng)])
    back = Network.from_json(net.to_json())
    assert [layer.kind for layer in back.layers] == [layer.kind for layer in net.layers]
    for p, q in zip(net.params, back.params):
        assert p.shape == q.shape
        assert p.tobytes() == q.tobytes()
    doc = json.loads(net.to_json())
    assert doc["layers"][0]["shape"] == [3, 2, 3]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12))
def test_serialized_floats_round_trip(values):
    net = Network([Dense(len(values), 1, weight=np.array([values]))])
    back = Network.from_json(net.to_json())
    assert back.layers[0].weight.tobytes() == net.layers[0].weight.tobytes()


def test_softmax_cross_entropy_values():
    loss, _ = softmax_cross_entropy(np.zeros(4), 2)
    assert loss == pytest.approx(math.log(4), abs=1e-12)
    loss, grad = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
    assert math.isfinite(loss) and loss == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(grad))
    loss, _ = softmax_cross_entropy(np.array([1.0, 2.0, 3.0]), 2)
    assert loss == pytest.approx(0.40761, abs=1e-5)
    with pytest.raises(IndexError):
        softmax_cross_entropy(np.zeros(3), 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=10), st.data())
def test_cross_entropy_gradient_on_simplex_tangent(logits, data):
    label = data.draw(st.integers(0, len(logits) - 1))
    loss, grad = softmax_cross_entropy(np.array(logits), label)
    assert loss >= 0.0
    assert abs(grad.sum()) < 1e-12
    p = softmax(np.array(logits))
    assert abs(p.sum() - 1.0) < 1e-12


def test_batched_cross_entropy_is_mean():
    logits = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    loss, grad = softmax_cross_entropy(logits, np.array([2, 1]))
    assert loss == pytest.approx((0.40761 + math.log(3)) / 2, abs=1e-5)
    assert grad.shape == logits.shape


def test_adam_first_step_magnitude_equals_lr():
    p = [np.array([0.0])]
    adam_step(p, [np.array([1.0])], AdamState.zeros_like(p), 0.1)
    assert p[0][0] == pytest.approx(-0.1, abs=1e-9)


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0])]
    state = AdamState.zeros_like(p)
    adam_step(p, [np.zeros(2)], state, 0.01)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    assert state.t == 1


def test_adam_identical_runs_bit_identical():
    rng = np.random.default_rng(0)
    g = [rng.standard_normal((3, 2)) for _ in range(5)]
    a, b = [np.ones((3, 2))], [np.ones((3, 2))]
    sa, sb = AdamState.zeros_like(a), AdamState.zeros_like(b)
    for gi in g:
        adam_step(a, [gi], sa, 0.01)
        adam_step(b, [gi.copy()], sb, 0.01)
    assert a[0].tobytes() == b[0].tobytes()


def test_adam_rejects_non_finite_and_bad_lr():
    p = [np.zeros(2), np.zeros(1)]
    with pytest.raises(NumericError, match="parameter 1"):
        adam_step(p, [np.zeros(2), np.array([np.inf])], AdamState.zeros_like(p), 0.1)
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(2), np.zeros(1)], AdamState.zeros_like(p), 0.0)


def test_adam_state_dict_resume():
    rng = np.random.default_rng(1)
    grads = [[rng.standard_normal(3)] for _ in range(6)]
    a = Adam([np.zeros(3)], 0.05)
    for g in grads:
        a.step(g)
    b = Adam([np.zeros(3)], 0.05)
    for g in grads[:3]:
        b.step(g)
    c = Adam([b.params[0].copy()], 0.05)
    c.load_state_dict(json.loads(json.dumps(b.state_dict())))
    for g in grads[3:]:
        c.step(g)
    assert c.params[0].tobytes() == a.params[0].tobytes()
