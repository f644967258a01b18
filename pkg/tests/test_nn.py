import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voltscale import nn
from oracles import PAIRS, fd_gradients, loss_of, max_rel_violation, random_case


def test_identity_neuron():
    net = nn.Mlp([np.array([[1.0]])], [np.zeros(1)], ["linear"])
    for x in (-2.0, 0.0, 3.5):
        assert nn.predict(net, [x])[0] == x


def test_hand_evaluated_2_2_1():
    w1 = np.array([[0.5, -1.0], [2.0, 0.25]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.5, -0.75]])
    b2 = np.array([0.05])
    net = nn.Mlp([w1, w2], [b1, b2], ["sigmoid", "sigmoid"])
    x = np.array([0.3, -0.7])
    s = lambda a: 1 / (1 + np.exp(-a))
    h1 = s(0.5 * 0.3 - 1.0 * -0.7 + 0.1)
    h2 = s(2.0 * 0.3 + 0.25 * -0.7 - 0.2)
    expect = s(1.5 * h1 - 0.75 * h2 + 0.05)
    assert nn.predict(net, x)[0] == pytest.approx(expect, abs=1e-12)


def test_zero_weights_give_half():
    net = nn.init_mlp([3, 4, 2], seed=0)
    net = nn.Mlp([np.zeros_like(w) for w in net.weights], net.biases, net.activations)
    assert np.all(nn.predict(net, np.ones(3)) == 0.5)


def test_shape_errors():
    net = nn.init_mlp([3, 2], seed=0)
    with pytest.raises(ValueError):
        nn.forward(net, np.ones(4))
    _, cache = nn.forward(net, np.ones(3))
    with pytest.raises(ValueError):
        nn.backward(net, cache, np.ones(3))
    with pytest.raises(ValueError):
        nn.Mlp([np.ones((2, 3)), np.ones((1, 3))], [np.zeros(2), np.zeros(1)],
               ["sigmoid", "sigmoid"])
    with pytest.raises(ValueError):
        nn.init_mlp([3, 4, 2], hidden="softmax")


def test_zero_error_gives_zero_gradient():
    net = nn.init_mlp([3, 5, 2], seed=4)
    x = np.array([0.1, -0.4, 0.9])
    y, cache = nn.forward(net, x)
    g = nn.backward(net, cache, y)
    assert all(np.all(gw == 0) for gw in g.weights)
    assert all(np.all(gb == 0) for gb in g.biases)


def test_linear_closed_form():
    rng = np.random.default_rng(0)
    w, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    net = nn.Mlp([w], [b], ["linear"])
    x, t = rng.normal(size=3), rng.normal(size=2)
    y, cache = nn.forward(net, x)
    g = nn.backward(net, cache, t)
    assert np.allclose(g.weights[0], np.outer(y - t, x), rtol=0, atol=1e-15)
    assert np.allclose(g.biases[0], y - t, rtol=0, atol=1e-15)


def test_3_4_2_finite_differences():
    rng = np.random.default_rng(5)
    net = nn.init_mlp([3, 4, 2], seed=rng)
    x, t = rng.normal(size=3), rng.uniform(size=2)
    _, cache = nn.forward(net, x)
    g = nn.backward(net, cache, t)
    fw, fb = fd_gradients(net, x, t, nn.MSE)
    assert max_rel_violation(g.weights + g.biases, fw + fb) <= 1.0


@pytest.mark.parametrize("hidden,output,loss", PAIRS)
def test_gradients_every_pair(hidden, output, loss):
    rng = np.random.default_rng(zlib.crc32(f"{hidden}/{output}".encode()))
    for _ in range(3):
        net, x, t = random_case(rng, hidden, output, loss)
        _, cache = nn.forward(net, x)
        g = nn.backward(net, cache, t, loss)
        fw, fb = fd_gradients(net, x, t, loss)
        assert max_rel_violation(g.weights + g.biases, fw + fb) <= 1.0


def test_loss_value_matches_oracle():
    rng = np.random.default_rng(8)
    for hidden, output, loss in PAIRS:
        net, x, t = random_case(rng, hidden, output, loss)
        assert nn.loss_value(net, x, t, loss) == pytest.approx(loss_of(net, x, t, loss),
                                                                rel=1e-12, abs=1e-15)


def test_loss_output_pairing_enforced():
    net = nn.init_mlp([2, 3], output="sigmoid", seed=0)
    with pytest.raises(ValueError):
        nn.loss_value(net, np.ones(2), np.ones(3), nn.CROSS_ENTROPY)
    soft = nn.init_mlp([2, 3], output="softmax", seed=0)
    with pytest.raises(ValueError):
        nn.loss_value(soft, np.ones(2), np.ones(3), nn.MSE)
    with pytest.raises(ValueError):
        nn.loss_value(net, np.ones(2), np.ones(3), "hinge")


def test_softmax_is_a_distribution():
    rng = np.random.default_rng(3)
    net = nn.init_mlp([6, 8, 10], output="softmax", seed=rng)
    y = nn.predict(net, rng.normal(size=(50, 6)) * 10)
    assert np.all(np.abs(y.sum(axis=1) - 1) <= 1e-12)
    assert np.all(y >= 0)


def test_forward_is_deterministic():
    rng = np.random.default_rng(1)
    net = nn.init_mlp([5, 7, 3], seed=rng)
    x = rng.normal(size=(20, 5))
    assert nn.predict(net, x).tobytes() == nn.predict(net.copy(), x.copy()).tobytes()


# -- sgd ---------------------------------------------------------------------------

def test_sgd_zero_gradient_and_guard():
    net = nn.init_mlp([2, 2], seed=0)
    zero = nn.Gradients([np.zeros_like(w) for w in net.weights],
                        [np.zeros_like(b) for b in net.biases])
    assert nn.sgd_step(net, zero, 0.5) == net
    with pytest.raises(ValueError):
        nn.sgd_step(net, zero, 0.0)


def test_sgd_moves_toward_quadratic_optimum():
    # one linear weight, loss 0.5*(w*1 - 3)^2 has its optimum at w=3
    net = nn.Mlp([np.array([[0.0]])], [np.zeros(1)], ["linear"])
    before = abs(net.weights[0][0, 0] - 3)
    _, cache = nn.forward(net, [1.0])
    net2 = nn.sgd_step(net, nn.backward(net, cache, [3.0]), 0.1)
    assert abs(net2.weights[0][0, 0] - 3) < before


def test_xor_converges():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    t = np.array([[0], [1], [1], [0]], dtype=float)
    net = nn.init_mlp([2, 4, 1], seed=3)
    for epoch in range(5000):
        _, cache = nn.forward(net, x)
        net = nn.sgd_step(net, nn.backward(net, cache, t), 2.0)
        if nn.loss_value(net, x, t) < 0.01:
            break
    assert nn.loss_value(net, x, t) < 0.01


# -- AFU ---------------------------------------------------------------------------

def test_afu_examples():
    assert nn.afu_sigmoid(0.0) == 0.5
    assert nn.afu_sigmoid(20.0) == 1.0
    assert nn.afu_sigmoid(-20.0) == 0.0
    with pytest.raises(ValueError):
        nn.afu_sigmoid(0.0, 1)


def dense_afu_error(segments):
    x = np.linspace(-20, 20, 4_000_001)
    return float(np.max(np.abs(nn.afu_sigmoid(x, segments) - 1 / (1 + np.exp(-x)))))


def test_afu_error_frozen():
    # dense-grid maximization; the worst point sits near x = 1.49
    assert dense_afu_error(16) == pytest.approx(0.0116485, abs=1e-6)
    assert dense_afu_error(32) < 0.01


@pytest.mark.xfail(strict=True, reason="16 uniform segments over [-8, 8] cannot reach "
                                       "0.01; the interpolation bound is about 0.012")
def test_afu_16_segments_within_one_percent():
    assert dense_afu_error(16) < 0.01


@given(x=st.floats(-30, 30), y=st.floats(-30, 30), seg=st.integers(2, 64))
def test_afu_monotone_bounded_symmetric(x, y, seg):
    lo, hi = sorted((x, y))
    assert nn.afu_sigmoid(lo, seg) <= nn.afu_sigmoid(hi, seg)
    assert 0.0 <= nn.afu_sigmoid(x, seg) <= 1.0
    assert nn.afu_sigmoid(x, seg) + nn.afu_sigmoid(-x, seg) == pytest.approx(1.0, abs=1e-15)


# -- checkpoints -----------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    net = nn.init_mlp([4, 3, 2], "relu", "afu_sigmoid:8", seed=9)
    path = tmp_path / "net.json"
    nn.save_checkpoint(net, path)
    back = nn.load_checkpoint(path)
    assert back == net
    assert all(a.tobytes() == b.tobytes() for a, b in zip(back.weights, net.weights))
    with pytest.raises(ValueError):
        nn.from_dict({"format": "other"})
