import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rosasr.errors import DimMismatch, EmptyInput, FormatError
from rosasr.nnet import (Mlp, MlpArch, TrainConfig, backprop, cross_entropy, estimate_priors, forward,
                         frame_accuracy, gradient_check, gradient_errors, log_softmax, posteriors_to_loglik, read_mlp,
                         softmax, train, write_mlp)


def zero_net(arch):
    m = Mlp.init(arch, 0)
    return Mlp(arch, [np.zeros_like(w) for w in m.weights], [np.zeros_like(b) for b in m.biases])


def blobs(seed, n=400, d=5):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    w = np.arange(1.0, d + 1)
    x = rng.normal(size=(n, d))
    x += np.outer(np.where(y == 1, 1.5, -1.5), w / np.linalg.norm(w))
    return x, y


# -- forward --------------------------------------------------------------------


def test_zero_network_is_uniform():
    out = forward(zero_net(MlpArch(3, 4, 1, 5)), np.random.default_rng(0).normal(size=(6, 3)))
    np.testing.assert_allclose(out, 0.25, atol=1e-15)


def test_softmax_by_hand():
    np.testing.assert_allclose(softmax(np.array([[0.0, np.log(3.0)]])), [[0.25, 0.75]], atol=1e-15)


def test_rows_are_independent():
    m = Mlp.init(MlpArch(4, 3, 2, 6), 1)
    x = np.random.default_rng(1).normal(size=(5, 4))
    swapped = x[[1, 0, 2, 3, 4]]
    np.testing.assert_allclose(forward(m, swapped), forward(m, x)[[1, 0, 2, 3, 4]], atol=1e-15)


def test_forward_dim_mismatch():
    with pytest.raises(DimMismatch):
        forward(Mlp.init(MlpArch(4, 3, 1, 2), 0), np.zeros((2, 5)))


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 6)), elements=st.floats(-50, 50)),
       st.floats(-100, 100))
def test_softmax_rows_and_shift_invariance(logits, c):
    p = softmax(logits)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p >= 0)
    np.testing.assert_allclose(softmax(logits + c), p, atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_cross_entropy_non_negative(seed):
    rng = np.random.default_rng(seed)
    m = Mlp.init(MlpArch(3, 4, 1, 5), seed)
    x, y = rng.normal(size=(7, 3)), rng.integers(0, 4, 7)
    assert cross_entropy(m, x, y) >= 0


def test_cross_entropy_zero_only_at_perfect_posteriors():
    arch = MlpArch(1, 2, 1, 1)
    m = zero_net(arch)
    m.biases[-1][:] = [5.0, -5.0]
    assert 0 < cross_entropy(m, np.zeros((3, 1)), np.zeros(3, int)) < 1e-4
    assert cross_entropy(m, np.zeros((3, 1)), np.ones(3, int)) > 9
    m.biases[-1][:] = [400.0, -400.0]
    assert np.all(forward(m, np.zeros((3, 1)))[:, 0] == 1.0)
    assert cross_entropy(m, np.zeros((3, 1)), np.zeros(3, int)) == 0.0


# -- gradients ------------------------------------------------------------------


def test_gradient_check_tiny():
    rng = np.random.default_rng(2)
    m = Mlp.init(MlpArch(2, 2, 1, 2), 3)
    assert gradient_check(m, rng.normal(size=(4, 2)), rng.integers(0, 2, 4), 1e-5) < 1e-4


@pytest.mark.parametrize("nl", ["sigmoid", "relu"])
def test_gradient_check_small_nets(nl):
    rng = np.random.default_rng(4)
    m = Mlp.init(MlpArch(6, 5, 2, 7, nl), 5)
    for b in m.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    assert gradient_check(m, rng.normal(size=(9, 6)), rng.integers(0, 5, 9), 1e-5) < 1e-4


def test_gradient_check_zero_batch_first_layer():
    # zero inputs make first-layer weight gradients exactly zero both ways
    m = Mlp.init(MlpArch(3, 2, 1, 4), 6)
    errs = gradient_errors(m, np.zeros((5, 3)), np.array([0, 1, 0, 1, 1]), 1e-5)
    assert errs[0] == 0.0


def test_gradient_check_large_epsilon_degrades():
    rng = np.random.default_rng(7)
    m = Mlp.init(MlpArch(4, 3, 1, 5), 8)
    for w in m.weights:
        w *= 4.0
    x, y = rng.normal(size=(6, 4)) * 2, rng.integers(0, 3, 6)
    good = gradient_check(m, x, y, 1e-5)
    bad = gradient_check(m, x, y, 1e-1)
    assert good < 1e-6 < bad
    assert bad > 100 * good


# -- training -------------------------------------------------------------------


def test_train_separable():
    x, y = blobs(9)
    # oracle: least-squares linear classifier separates the data
    w, *_ = np.linalg.lstsq(np.hstack([x, np.ones((len(x), 1))]), 2.0 * y - 1, rcond=None)
    lin_acc = np.mean((np.hstack([x, np.ones((len(x), 1))]) @ w > 0) == y)
    cx, cy = blobs(10, 200)
    res = train(Mlp.init(MlpArch(5, 2, 1, 8), 0), x, y, cx, cy, TrainConfig(minibatch=16, max_epochs=20, seed=1))
    assert frame_accuracy(res.model, cx, cy) >= min(0.95, lin_acc - 0.02)
    assert res.report[-1].cv_xent <= res.report[0].cv_xent


def test_zero_learning_rate_changes_nothing():
    x, y = blobs(11, 60)
    m = Mlp.init(MlpArch(5, 2, 1, 4), 2)
    res = train(m, x, y, x[:10], y[:10], TrainConfig(learning_rate=0.0, max_epochs=3, dtype="float64"))
    for a, b in zip(res.model.params, m.params):
        np.testing.assert_array_equal(a, b)
    # only the shuffled summation order differs between epochs
    losses = [r.train_xent for r in res.report]
    np.testing.assert_allclose(losses, losses[0], rtol=1e-12)


def test_full_batch_epoch_is_one_gradient_step():
    x, y = blobs(12, 50)
    m = Mlp.init(MlpArch(5, 2, 1, 4), 3)
    lr = 0.1
    _, grads = backprop(m.copy(np.float64), x, y)
    expect = [p - lr * g for p, g in zip(m.copy(np.float64).params, grads)]
    res = train(m, x, y, x, y, TrainConfig(minibatch=len(x), learning_rate=lr, max_epochs=1, dtype="float64"))
    assert res.report[1].accepted
    for p, e in zip(res.model.params, expect):
        np.testing.assert_allclose(p, e, rtol=0, atol=1e-15)


def test_train_is_deterministic():
    x, y = blobs(13, 120)
    cfg = TrainConfig(minibatch=8, max_epochs=3, seed=5)
    a = train(Mlp.init(MlpArch(5, 2, 1, 6), 1), x, y, x[:20], y[:20], cfg)
    b = train(Mlp.init(MlpArch(5, 2, 1, 6), 1), x, y, x[:20], y[:20], cfg)
    for p, q in zip(a.model.params, b.model.params):
        np.testing.assert_array_equal(p, q)


def test_constant_zero_column_reduces_to_baseline():
    x, y = blobs(14, 150, d=4)
    xr = np.hstack([x, np.zeros((len(x), 1))])
    ros_net = Mlp.init(MlpArch(5, 2, 1, 6), 4, np.float64)
    base = Mlp(MlpArch(4, 2, 1, 6), [ros_net.weights[0][:4].copy(), ros_net.weights[1].copy()],
               [b.copy() for b in ros_net.biases])
    cfg = TrainConfig(minibatch=10, max_epochs=3, seed=2, dtype="float64")
    r = train(ros_net, xr, y, xr[:30], y[:30], cfg).model
    b = train(base, x, y, x[:30], y[:30], cfg).model
    np.testing.assert_allclose(r.weights[0][:4], b.weights[0], atol=1e-12)
    np.testing.assert_array_equal(r.weights[0][4], ros_net.weights[0][4])
    for p, q in zip(r.params[1:], b.params[1:]):
        np.testing.assert_allclose(p, q, atol=1e-12)


def test_train_errors():
    m = Mlp.init(MlpArch(2, 2, 1, 2), 0)
    with pytest.raises(EmptyInput):
        train(m, np.zeros((0, 2)), np.zeros(0, int), np.zeros((1, 2)), np.zeros(1, int))
    with pytest.raises(ValueError):
        train(m, np.zeros((2, 2)), np.array([0, 2]), np.zeros((1, 2)), np.zeros(1, int))


def test_training_log_csv(tmp_path):
    x, y = blobs(15, 40)
    res = train(Mlp.init(MlpArch(5, 2, 1, 3), 0), x, y, x[:5], y[:5], TrainConfig(max_epochs=2))
    res.write_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_xent,cv_xent,lr" and len(lines) == len(res.report) + 1


# -- hybrid conversion and priors -----------------------------------------------


def test_posteriors_to_loglik_examples():
    post = np.array([[0.9, 0.1]])
    np.testing.assert_allclose(posteriors_to_loglik(post, np.array([0.5, 0.5])), [[np.log(1.8), np.log(0.2)]])
    pri = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(posteriors_to_loglik(pri[None], pri), 0.0, atol=1e-15)
    uni = np.full(3, 1 / 3)
    p = np.array([[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]])
    diff = posteriors_to_loglik(p, uni, 0.5) - 0.5 * np.log(p)
    np.testing.assert_allclose(diff, diff[:, :1].repeat(3, axis=1))
    assert posteriors_to_loglik(np.array([[0.0, 1.0]]), np.array([0.5, 0.5]))[0, 0] == -np.inf


def test_estimate_priors():
    np.testing.assert_allclose(estimate_priors([np.array([0, 0, 0, 1])], 2), [4 / 6, 2 / 6])
    single = estimate_priors([np.array([0, 0, 0])], 2)
    assert np.all(single > 0) and single[0] > single[1]
    np.testing.assert_allclose(estimate_priors([np.array([0, 1, 2, 0, 1, 2])], 3), 1 / 3)


# -- serialization --------------------------------------------------------------


def test_mlp_round_trip(tmp_path):
    m = Mlp.init(MlpArch(3, 4, 2, 5, "relu"), 9)
    write_mlp(tmp_path / "n.nnet", m)
    assert (tmp_path / "n.nnet").read_text().startswith("NNET v1\narch 3 4 2 5 relu")
    back = read_mlp(tmp_path / "n.nnet")
    assert back.arch == m.arch
    for p, q in zip(back.params, m.params):
        np.testing.assert_array_equal(p, q)
    (tmp_path / "bad.nnet").write_text("hello\n")
    with pytest.raises(FormatError):
        read_mlp(tmp_path / "bad.nnet")


def test_log_softmax_consistent():
    z = np.random.default_rng(16).normal(size=(4, 6)) * 30
    np.testing.assert_allclose(np.exp(log_softmax(z)), softmax(z), atol=1e-15)
