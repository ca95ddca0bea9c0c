"""ConvNet construction, initialization, gradients, and training steps."""

import numpy as np
import pytest

import idckit.tensor as T
from idckit.models import ConvNet, one_hot, sgd_step


def test_parameter_count_depth3_width64():
    net = ConvNet((1, 28, 28), 10, depth=3, width=64, seed=0)
    # conv1 640, conv2/conv3 36928 each, head 650
    assert net.num_parameters() == 75146
    assert net.param_names == [
        "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
        "fc_w", "fc_b"]


def test_parameter_shapes_follow_width_and_depth():
    net = ConvNet((3, 16, 16), 4, depth=2, width=8, seed=1)
    shapes = [p.shape for p in net.params]
    assert shapes == [(8, 3, 3, 3), (8,), (8, 8, 3, 3), (8,), (4, 8), (4,)]


def test_init_is_uniform_within_fan_in_bound():
    net = ConvNet((1, 16, 16), 3, depth=2, width=32, seed=2)
    w2 = net.params[2].data  # conv2: fan_in = 32*9
    bound = np.sqrt(1.0 / (32 * 9))
    assert np.abs(w2).max() <= bound
    assert np.abs(w2).max() > 0.8 * bound  # actually fills the range
    assert np.abs(w2.mean()) < 0.1 * bound


def test_seed_controls_init():
    a = ConvNet((1, 8, 8), 2, depth=1, width=4, seed=5)
    b = ConvNet((1, 8, 8), 2, depth=1, width=4, seed=5)
    c = ConvNet((1, 8, 8), 2, depth=1, width=4, seed=6)
    for p, q in zip(a.params, b.params):
        np.testing.assert_array_equal(p.data, q.data)
    assert any(not np.array_equal(p.data, q.data)
               for p, q in zip(a.params, c.params))


def test_reinit_changes_weights_deterministically():
    net = ConvNet((1, 8, 8), 2, depth=1, width=4, seed=0)
    first = [p.data.copy() for p in net.params]
    net.reinit(1)
    assert any(not np.array_equal(f, p.data)
               for f, p in zip(first, net.params))
    net.reinit(0)
    for f, p in zip(first, net.params):
        np.testing.assert_array_equal(f, p.data)


def test_input_validation():
    with pytest.raises(ValueError, match="too small"):
        ConvNet((1, 4, 4), 2, depth=3)
    with pytest.raises(ValueError, match="classes"):
        ConvNet((1, 8, 8), 1)
    net = ConvNet((1, 8, 8), 2, depth=1, width=4)
    with pytest.raises(T.ShapeError, match="do not match"):
        net.forward(T.Tensor(np.zeros((2, 1, 9, 9))))


def test_forward_and_feature_shapes():
    net = ConvNet((2, 16, 16), 5, depth=2, width=8, seed=3)
    x = T.Tensor(np.random.default_rng(0).standard_normal((7, 2, 16, 16)))
    feats = net.features(x)
    assert feats.shape == (7, 8)
    logits = net.forward(x)
    assert logits.shape == (7, 5)


def test_odd_extents_shrink_by_floor():
    net = ConvNet((1, 14, 14), 3, depth=3, width=4, seed=4)
    x = T.Tensor(np.zeros((2, 1, 14, 14)))
    # 14 -> 7 -> 3 -> 1 survives three pools
    assert net.forward(x).shape == (2, 3)


def test_one_hot_basic_and_range_check():
    oh = one_hot(np.array([0, 2, 1]), 3)
    np.testing.assert_array_equal(oh, np.eye(3)[[0, 2, 1]])
    with pytest.raises(ValueError):
        one_hot(np.array([3]), 3)
    with pytest.raises(ValueError):
        one_hot(np.array([-1]), 3)


def test_network_gradient_matches_fd():
    rng = np.random.default_rng(7)
    net = ConvNet((1, 8, 8), 2, depth=1, width=3, seed=7)
    x = rng.standard_normal((4, 1, 8, 8))
    labels = one_hot(np.array([0, 1, 0, 1]), 2)

    for pi in range(len(net.params)):
        def f(p):
            saved = net.params[pi]
            net.params[pi] = p
            try:
                return net.loss(T.Tensor(x), labels)
            finally:
                net.params[pi] = saved
        rep = T.grad_check(f, [net.params[pi].data], tol=2e-4)
        assert rep.passed, f"param {net.param_names[pi]}: {rep.max_rel_err:.2e}"


def test_network_gradient_create_graph_reaches_pixels():
    net = ConvNet((1, 8, 8), 2, depth=1, width=3, seed=8)
    x0 = np.random.default_rng(8).standard_normal((2, 1, 8, 8))
    labels = one_hot(np.array([0, 1]), 2)

    def grad_norm(x):
        grads = net.network_gradient(x, labels, create_graph=True)
        total = None
        for g in grads:
            sq = T.tsum(T.mul(g, g))
            total = sq if total is None else T.add(total, sq)
        return total

    rep = T.grad_check(grad_norm, [x0], tol=2e-4)
    assert rep.passed, f"max_rel={rep.max_rel_err:.3e}"


def test_sgd_step_returns_fresh_leaves():
    net = ConvNet((1, 8, 8), 2, depth=1, width=3, seed=9)
    x = T.Tensor(np.random.default_rng(9).standard_normal((4, 1, 8, 8)))
    labels = one_hot(np.array([0, 1, 1, 0]), 2)
    old = [p.data.copy() for p in net.params]
    with T.Tape():
        grads = T.grad(net.loss(x, labels), net.params)
    new_params = sgd_step(net.params, grads, 0.5)
    for p_new, p_old, g in zip(new_params, old, grads):
        np.testing.assert_allclose(p_new.data, p_old - 0.5 * g.data)
        assert p_new.requires_grad
        assert p_new._tape is None  # a leaf, not a recorded node


def test_training_reduces_loss_on_tiny_problem():
    rng = np.random.default_rng(10)
    x = np.concatenate([rng.normal(-1.0, 0.3, (16, 1, 8, 8)),
                        rng.normal(1.0, 0.3, (16, 1, 8, 8))])
    # classes differ in left/right half energy so instance norm keeps them
    x[:16, :, :, :4] *= 2.0
    x[16:, :, :, 4:] *= 2.0
    y = one_hot(np.repeat([0, 1], 16), 2)
    net = ConvNet((1, 8, 8), 2, depth=1, width=8, seed=11)

    losses = []
    for _ in range(30):
        with T.Tape():
            loss = net.loss(T.Tensor(x), y)
            grads = T.grad(loss, net.params)
        losses.append(loss.item())
        net.params = sgd_step(net.params, grads, 0.1)
    assert losses[-1] < losses[0] * 0.7


def test_state_roundtrip():
    net = ConvNet((1, 8, 8), 2, depth=1, width=4, seed=12)
    snap = net.state()
    net.reinit(13)
    net.load_state(snap)
    for p, s in zip(net.params, snap):
        np.testing.assert_array_equal(p.data, s)
    with pytest.raises(ValueError, match="state"):
        net.load_state(snap[:-1])


def test_accuracy_and_predict_batching_agree():
    rng = np.random.default_rng(14)
    net = ConvNet((1, 8, 8), 3, depth=1, width=4, seed=14)
    images = rng.standard_normal((50, 1, 8, 8))
    labels = rng.integers(0, 3, 50)
    p_small = net.predict(images, batch_size=7)
    p_big = net.predict(images, batch_size=256)
    np.testing.assert_array_equal(p_small, p_big)
    acc = net.accuracy(images, labels)
    assert acc == pytest.approx(np.mean(p_big == labels))
