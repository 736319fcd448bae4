import math

import numpy as np
import pytest

from cvaead import nn
from cvaead.errors import ShapeError, TrainingDivergedError


def rel_err(a, b):
    return abs(a - b) / max(1e-8, abs(a), abs(b))


def fd_derivative(loss_fn, arr, index, h=1e-4):
    """Central finite difference of a scalar loss w.r.t. one array entry."""
    orig = arr[index]
    arr[index] = orig + h
    hi = loss_fn()
    arr[index] = orig - h
    lo = loss_fn()
    arr[index] = orig
    return (hi - lo) / (2.0 * h)


def test_identity_layer_passthrough():
    mlp = nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), "identity")])
    out, _ = nn.mlp_forward(mlp, np.array([1.0, 2.0]))
    assert np.array_equal(out, [1.0, 2.0])


def test_relu_layer_clips_negative():
    mlp = nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), "relu")])
    out, _ = nn.mlp_forward(mlp, np.array([-1.0, 3.0]))
    assert np.array_equal(out, [0.0, 3.0])


def test_tanh_layer_squashes():
    mlp = nn.Mlp([nn.Layer(np.eye(2), np.zeros(2), "tanh")])
    out, _ = nn.mlp_forward(mlp, np.array([-50.0, 0.5]))
    assert np.allclose(out, [math.tanh(-50.0), math.tanh(0.5)], rtol=0, atol=0)


def test_tanh_backward_matches_finite_differences():
    rng = np.random.default_rng(13)
    mlp = nn.Mlp([
        nn.Layer(rng.normal(size=(4, 3)), rng.normal(size=4), "tanh"),
        nn.Layer(rng.normal(size=(2, 4)), rng.normal(size=2), "identity"),
    ])
    x = rng.normal(size=(5, 3))

    def loss():
        out, _ = nn.mlp_forward(mlp, x)
        return float((out ** 2).sum())

    out, cache = nn.mlp_forward(mlp, x)
    grads, _ = nn.mlp_backward(mlp, cache, 2.0 * out)
    for p, g in zip(mlp.parameters(), grads):
        for index in np.ndindex(p.shape):
            fd = fd_derivative(loss, p, index)
            assert rel_err(fd, g[index]) < 1e-6


def test_two_layer_forward_matches_hand_chain():
    # oracle: explicit matmul + relu chain, written out independently
    rng = np.random.default_rng(7)
    w1 = rng.normal(size=(2, 2))
    b1 = rng.normal(size=2)
    w2 = rng.normal(size=(2, 2))
    b2 = rng.normal(size=2)
    mlp = nn.Mlp([nn.Layer(w1, b1, "relu"), nn.Layer(w2, b2, "identity")])
    x = rng.normal(size=2)

    h = np.maximum(w1 @ x + b1, 0.0)
    expected = w2 @ h + b2

    out, _ = nn.mlp_forward(mlp, x)
    assert np.allclose(out, expected, rtol=0, atol=0)


def test_forward_shape_mismatch_raises():
    mlp = nn.Mlp([nn.Layer(np.eye(3), np.zeros(3), "identity")])
    with pytest.raises(ShapeError):
        nn.mlp_forward(mlp, np.zeros(4))


def test_backward_linear_layer_outer_product_structure():
    # y = Wx, loss = y_0  =>  dL/dW has x on row 0 and zeros elsewhere
    w = np.array([[0.5, -1.0], [2.0, 0.25]])
    mlp = nn.Mlp([nn.Layer(w, np.zeros(2), "identity")])
    x = np.array([3.0, -4.0])
    _, cache = nn.mlp_forward(mlp, x)
    grads, gx = nn.mlp_backward(mlp, cache, np.array([1.0, 0.0]))
    assert np.array_equal(grads[0], np.vstack([x, np.zeros(2)]))
    assert np.array_equal(grads[1], [1.0, 0.0])
    assert np.array_equal(gx, w[0])


def test_backward_zero_gradient_gives_zero_grads():
    mlp = nn.build_mlp([3, 5, 2], np.random.default_rng(0))
    _, cache = nn.mlp_forward(mlp, np.ones(3))
    grads, gx = nn.mlp_backward(mlp, cache, np.zeros(2))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(gx == 0.0)


def test_backward_rejects_mismatched_cache():
    a = nn.build_mlp([3, 4, 2], np.random.default_rng(0))
    b = nn.build_mlp([5, 4, 2], np.random.default_rng(0))
    _, cache = nn.mlp_forward(a, np.ones(3))
    with pytest.raises(ShapeError):
        nn.mlp_backward(b, cache, np.zeros(2))


def test_backward_matches_finite_differences_three_layer():
    rng = np.random.default_rng(42)
    mlp = nn.build_mlp([3, 4, 4, 2], rng)
    x = rng.normal(size=3)
    weights = rng.normal(size=2)  # fixed linear readout makes the loss scalar

    def loss():
        out, _ = nn.mlp_forward(mlp, x)
        return float(weights @ out)

    _, cache = nn.mlp_forward(mlp, x)
    grads, _ = nn.mlp_backward(mlp, cache, weights)

    params = mlp.parameters()
    for p, g in zip(params, grads):
        for index in np.ndindex(p.shape):
            fd = fd_derivative(loss, p, index)
            assert rel_err(g[index], fd) < 1e-3


def test_gradient_check_random_nets_100_coords():
    # package invariant: analytic grads match central differences on random
    # coordinates of seeded nets up to 4 layers / 32 units
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 100:
        n_hidden = int(rng.integers(1, 3))
        dims = [int(rng.integers(2, 8))] + [int(rng.integers(2, 33)) for _ in range(n_hidden)] + [
            int(rng.integers(1, 6))
        ]
        mlp = nn.build_mlp(dims, rng)
        x = rng.normal(size=dims[0])
        gout = rng.normal(size=dims[-1])

        def loss():
            out, _ = nn.mlp_forward(mlp, x)
            return float(gout @ out)

        _, cache = nn.mlp_forward(mlp, x)
        grads, _ = nn.mlp_backward(mlp, cache, gout)
        params = mlp.parameters()
        for _ in range(10):
            pi = int(rng.integers(len(params)))
            index = tuple(int(rng.integers(s)) for s in params[pi].shape)
            fd = fd_derivative(loss, params[pi], index)
            assert rel_err(grads[pi][index], fd) < 1e-3
            checked += 1


def test_batched_backward_sums_over_batch():
    rng = np.random.default_rng(3)
    mlp = nn.build_mlp([3, 6, 2], rng)
    xs = rng.normal(size=(5, 3))
    gout = rng.normal(size=(5, 2))

    _, cache = nn.mlp_forward(mlp, xs)
    grads, gx = nn.mlp_backward(mlp, cache, gout)

    acc = [np.zeros_like(p) for p in mlp.parameters()]
    for i in range(5):
        _, c = nn.mlp_forward(mlp, xs[i])
        gs, gxi = nn.mlp_backward(mlp, c, gout[i])
        for a, g in zip(acc, gs):
            a += g
        assert np.allclose(gx[i], gxi)
    for a, g in zip(acc, grads):
        assert np.allclose(a, g)


def test_adam_zero_gradient_is_fixed_point():
    params = [np.array([1.0, -2.0]), np.array([[3.0]])]
    before = [p.copy() for p in params]
    state = nn.adam_init(params)
    for _ in range(5):
        nn.adam_step(params, [np.zeros_like(p) for p in params], state)
    for p, b in zip(params, before):
        assert np.array_equal(p, b)
    assert state.step == 5


def test_adam_first_step_matches_hand_evaluation():
    # constant gradient 1, lr=1e-3: bias correction makes m_hat/sqrt(v_hat)=1,
    # so the first update is -lr/(1+eps) ~ -0.001
    params = [np.array([0.0])]
    state = nn.adam_init(params, learning_rate=1e-3)
    nn.adam_step(params, [np.array([1.0])], state)
    expected = -1e-3 * 1.0 / (1.0 + 1e-8)
    assert math.isclose(params[0][0], expected, rel_tol=1e-12)


def test_adam_updates_are_elementwise():
    params = [np.array([0.0, 0.0])]
    state = nn.adam_init(params)
    nn.adam_step(params, [np.array([1.0, 0.0])], state)
    assert params[0][0] != 0.0
    assert params[0][1] == 0.0


def test_early_stopping_monotone_improvement_continues():
    es = nn.EarlyStopping(patience=2)
    params = [np.zeros(1)]
    for loss in [1.0, 0.9, 0.8]:
        assert es.update(loss, params) == "continue"


def test_early_stopping_stops_after_patience_exceeded():
    es = nn.EarlyStopping(patience=2)
    params = [np.array([0.0])]
    verdicts = []
    for i, loss in enumerate([1.0, 1.1, 1.2, 1.3]):
        params[0][0] = float(i)
        verdicts.append(es.update(loss, params))
    assert verdicts == ["continue", "continue", "continue", "stop"]
    # snapshot corresponds to the loss-1.0 epoch
    assert es.best_loss == 1.0
    assert es.best_snapshot[0][0] == 0.0
    es.restore(params)
    assert params[0][0] == 0.0


def test_early_stopping_rejects_nan_loss():
    es = nn.EarlyStopping(patience=1)
    with pytest.raises(TrainingDivergedError):
        es.update(float("nan"), [np.zeros(1)])


def test_deterministic_training_trajectory():
    # same seed, same data, same hyperparameters -> bit-identical parameters
    def run():
        rng = np.random.default_rng(123)
        mlp = nn.build_mlp([4, 8, 3], rng)
        xs = np.random.default_rng(5).normal(size=(16, 4))
        target = np.random.default_rng(6).normal(size=(16, 3))
        state = nn.adam_init(mlp.parameters())
        for _ in range(20):
            out, cache = nn.mlp_forward(mlp, xs)
            grads, _ = nn.mlp_backward(mlp, cache, out - target)
            nn.adam_step(mlp.parameters(), grads, state)
        return mlp.parameters()

    a, b = run(), run()
    for pa, pb in zip(a, b):
        assert np.array_equal(pa, pb)


def test_clip_global_norm_scales_down_to_max():
    grads = [np.array([3.0, 0.0]), np.array([[4.0]])]  # joint norm 5
    norm = nn.clip_global_norm(grads, 1.0)
    assert math.isclose(norm, 5.0, rel_tol=1e-12)
    clipped = math.sqrt(sum(float(np.square(g).sum()) for g in grads))
    assert math.isclose(clipped, 1.0, rel_tol=1e-12)
    assert np.allclose(grads[0], [0.6, 0.0])
    assert np.allclose(grads[1], [[0.8]])


def test_clip_global_norm_leaves_small_gradients_alone():
    grads = [np.array([0.3, 0.4])]
    before = [g.copy() for g in grads]
    norm = nn.clip_global_norm(grads, 1.0)
    assert math.isclose(norm, 0.5, rel_tol=1e-12)
    assert np.array_equal(grads[0], before[0])


def test_clip_global_norm_zero_max_disables():
    grads = [np.array([30.0, 40.0])]
    nn.clip_global_norm(grads, 0.0)
    assert np.array_equal(grads[0], [30.0, 40.0])
