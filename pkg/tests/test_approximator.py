import json

import numpy as np
import pytest

from fairdispatch import approximator
from fairdispatch.approximator import MLP, Adam, DivergenceError, WeightFileError


def test_zero_net_outputs_zero():
    net = MLP([4, 3, 2], params=np.zeros(4 * 3 + 3 + 3 * 2 + 2))
    assert np.all(net.forward(np.ones(4)) == 0.0)


def test_hand_computed_forward():
    # 1 -> 1 -> 1: relu(2x - 1) * 3 + 0.5
    net = MLP([1, 1, 1], params=np.array([2.0, -1.0, 3.0, 0.5]))
    assert net.forward(np.array([2.0]))[0] == pytest.approx(3 * 3 + 0.5)
    assert net.forward(np.array([0.25]))[0] == pytest.approx(0.5)


def test_forward_deterministic_and_dimension_checked():
    net = MLP([5, 50, 50, 3], seed=1)
    x = np.linspace(0, 1, 5)
    assert np.array_equal(net(x), net(x))
    with pytest.raises(ValueError):
        net.forward(np.zeros(4))


def test_batch_forward_matches_rows():
    net = MLP([5, 8, 3], seed=2)
    X = np.random.default_rng(0).random((6, 5))
    assert np.allclose(net.forward(X), np.stack([net.forward(x) for x in X]))


def test_gradient_check_random_nets():
    rng = np.random.default_rng(123)
    worst = 0.0
    for case in range(100):
        D, M = int(rng.integers(3, 15)), int(rng.integers(1, 5))
        net = MLP([D, 50, 50, M + 1], seed=case)
        x = rng.random(D)
        worst = max(worst, approximator.gradient_check(net, x, int(rng.integers(0, M + 1)),
                                                       float(rng.normal()), seed=case))
    assert worst < 1e-4


def test_gradient_check_zero_net_and_repeatable():
    net = MLP([4, 50, 50, 3], params=np.zeros(4 * 50 + 50 + 50 * 50 + 50 + 50 * 3 + 3))
    assert approximator.gradient_check(net, np.ones(4), 1, 0.0) == 0.0
    net = MLP([4, 50, 50, 3], seed=3)
    a = approximator.gradient_check(net, np.ones(4), 2, 1.0, seed=9)
    b = approximator.gradient_check(net, np.ones(4), 2, 1.0, seed=9)
    assert a == b


def test_zero_error_leaves_parameters_unchanged():
    net = MLP([3, 5, 2], seed=0)
    X = np.random.default_rng(1).random((4, 3))
    A = np.array([0, 1, 1, 0])
    Y = net.forward(X)[np.arange(4), A]
    before = net.params.copy()
    loss = approximator.train_arrays(net, Adam(net.params.size), X, A, Y)
    assert loss == 0.0
    assert np.allclose(net.params, before, atol=1e-12)


def test_overfit_fixed_batch():
    rng = np.random.default_rng(4)
    net = MLP([6, 50, 50, 3], seed=4)
    opt = Adam(net.params.size)
    batch = [(rng.random(6), int(rng.integers(0, 3)), float(rng.normal())) for _ in range(10)]
    for _ in range(3000):
        loss = approximator.train_batch(net, opt, batch)
        assert loss >= 0.0
    X = np.array([b[0] for b in batch])
    pred = net.forward(X)[np.arange(10), [b[1] for b in batch]]
    assert np.mean((pred - [b[2] for b in batch]) ** 2) < 1e-4


def test_linear_target_converges():
    rng = np.random.default_rng(5)
    D = 8
    w = rng.normal(size=D)
    net = MLP([D, 50, 50, 2], seed=5)
    opt = Adam(net.params.size)
    for _ in range(10_000):
        X = rng.random((32, D))
        A = rng.integers(0, 2, 32)
        approximator.train_arrays(net, opt, X, A, X @ w)
    X = rng.random((1000, D))
    A = rng.integers(0, 2, 1000)
    pred = net.forward(X)[np.arange(1000), A]
    assert np.mean((pred - X @ w) ** 2) < 1e-3


def test_divergence_detected():
    net = MLP([2, 3, 2], seed=0)
    with pytest.raises(DivergenceError):
        approximator.train_batch(net, Adam(net.params.size), [(np.ones(2), 0, float("inf"))])
    net.params[0] = np.nan
    with pytest.raises(DivergenceError):
        approximator.train_arrays(net, Adam(net.params.size), np.ones((1, 2)), np.array([0]), np.array([0.0]))


def test_empty_batch_rejected():
    net = MLP([2, 3, 2])
    with pytest.raises(ValueError):
        approximator.train_batch(net, Adam(net.params.size), [])


def test_save_load_roundtrip(tmp_path):
    net = MLP([7, 50, 50, 3], seed=8)
    p = tmp_path / "w.json"
    approximator.save(net, p)
    back = approximator.load(p, 7, 3)
    assert np.array_equal(back.params, net.params)
    x = np.random.default_rng(0).random(7)
    assert np.array_equal(back(x), net(x))
    doc = json.loads(p.read_text())
    assert doc["schema"] == 1 and doc["layer_sizes"] == [7, 50, 50, 3]


def test_load_errors(tmp_path):
    net = MLP([7, 5, 3], seed=8)
    p = tmp_path / "w.json"
    approximator.save(net, p)
    text = p.read_text()
    trunc = tmp_path / "t.json"
    trunc.write_text(text[: len(text) // 2])
    with pytest.raises(WeightFileError):
        approximator.load(trunc)
    with pytest.raises(WeightFileError):
        approximator.load(p, input_dim=6)
    with pytest.raises(WeightFileError):
        approximator.load(p, output_dim=4)
    doc = json.loads(text)
    doc["schema"] = 2
    bad = tmp_path / "s.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(WeightFileError):
        approximator.load(bad)
    doc["schema"] = 1
    doc["layers"][0]["bias"].pop()
    bad.write_text(json.dumps(doc))
    with pytest.raises(WeightFileError):
        approximator.load(bad)


def test_adam_matches_reference_update():
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -0.1])
    opt = Adam(2, lr=0.1)
    opt.step(p, g)
    # first step moves each parameter by lr against the sign of its gradient
    assert p == pytest.approx([0.9, -1.9], abs=1e-6)
