import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mtgcn import autodiff as ad
from mtgcn.autodiff import BatchNormState, ShapeError, Tape, Tensor
from mtgcn.optim import AdamState, adam_step, clip_gradients_l2, global_norm


def param(x):
    return Tensor(np.array(x, dtype=float), requires_grad=True)


def fd_check(build, params, eps=1e-5):
    """Max relative error of tape gradients vs central differences."""
    with Tape() as tape:
        loss = build()
    grads = ad.backward(tape, loss, params)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            o = flat[i]
            flat[i] = o + eps
            up = float(build().data)
            flat[i] = o - eps
            dn = float(build().data)
            flat[i] = o
            num[i] = (up - dn) / (2 * eps)
        a = grads[p].ravel()
        worst = max(worst, float(np.max(np.abs(a - num) / np.maximum(np.maximum(abs(a), abs(num)), 1e-7))))
    return worst


# --- matmul -----------------------------------------------------------------

def test_matmul_identity_and_zero(rng):
    B = rng.uniform(-1, 1, (3, 5))
    assert np.array_equal(ad.matmul(np.eye(3), B).data, B)
    assert np.array_equal(ad.matmul(np.zeros((2, 3)), B).data, np.zeros((2, 5)))


def test_matmul_matches_triple_loop(rng):
    A = rng.uniform(-1, 1, (3, 4))
    B = rng.uniform(-1, 1, (4, 2))
    ref = np.array(oracles.naive_matmul(A.tolist(), B.tolist()))
    np.testing.assert_allclose(ad.matmul(A, B).data, ref, rtol=0, atol=1e-14)


def test_matmul_rejects_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 2)), ((2, 3, 4), (4, 5)), ((3, 3), (2, 3, 4)),
                                   ((2, 3, 4), (2, 4, 2))])
def test_matmul_gradients(rng, sa, sb):
    a = param(rng.uniform(-1, 1, sa))
    b = param(rng.uniform(-1, 1, sb))
    w = rng.uniform(-1, 1, np.broadcast_shapes(sa[:-2], sb[:-2]) + (sa[-2], sb[-1]))
    assert fd_check(lambda: _weighted(ad.matmul(a, b), w), [a, b]) < 1e-6


def _weighted(y, w):
    """Scalar <y, w> built from tape ops."""
    return ad.total(ad.matmul(ad.reshape(y, (1, -1)), w.reshape(-1, 1)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-1, 1)),
       arrays(np.float64, (3, 4), elements=st.floats(-1, 1)),
       arrays(np.float64, (4, 2), elements=st.floats(-1, 1)))
def test_matmul_linear(x, y, B):
    lhs = ad.matmul(x + y, B).data
    rhs = ad.matmul(x, B).data + ad.matmul(y, B).data
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


# --- concat_rows ----------------------------------------------------------

def test_concat_rows_order_and_single(rng):
    a, b = rng.uniform(size=(2, 3)), rng.uniform(size=(2, 3))
    out = ad.concat_rows([a, b]).data
    assert out.shape == (4, 3)
    assert np.array_equal(out[:2], a) and np.array_equal(out[2:], b)
    assert np.array_equal(ad.concat_rows([a]).data, a)


def test_concat_rows_rejects_column_mismatch():
    with pytest.raises(ShapeError):
        ad.concat_rows([np.ones((2, 3)), np.ones((2, 4))])


def test_concat_rows_gradient_split(rng):
    a = param(rng.uniform(-1, 1, (2, 3)))
    b = param(rng.uniform(-1, 1, (1, 3)))
    w = rng.uniform(-1, 1, (3, 3))
    build = lambda: _weighted(ad.concat_rows([a, b]), w)
    with Tape() as tape:
        loss = build()
    g = ad.backward(tape, loss, [a, b])
    np.testing.assert_array_equal(g[a], w[:2])
    np.testing.assert_array_equal(g[b], w[2:])
    assert fd_check(build, [a, b]) < 1e-6


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-1, 1)),
       arrays(np.float64, (2, 3), elements=st.floats(-1, 1)))
def test_concat_linear(x, y):
    lhs = ad.concat_rows([x + y, 2 * x]).data
    rhs = ad.concat_rows([x, x]).data + ad.concat_rows([y, x]).data
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


# --- batch norm -----------------------------------------------------------

def test_batch_norm_constant_features_give_zero():
    X = np.broadcast_to(np.array([1.0, -2.0, 5.0])[None, :, None], (4, 3, 6)).copy()
    out = ad.batch_norm(X, np.ones(3), np.zeros(3), BatchNormState(3)).data
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_batch_norm_standardizes(rng):
    X = rng.normal(3.0, 2.0, (5, 4, 7))
    out = ad.batch_norm(X, np.ones(4), np.zeros(4), BatchNormState(4)).data
    np.testing.assert_allclose(out.mean(axis=(0, 2)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2)), 1.0, atol=1e-4)


def test_batch_norm_matches_direct_formula(rng):
    X = rng.uniform(-1, 1, (2, 3, 4))
    gamma, beta = rng.uniform(0.5, 1.5, 3), rng.uniform(-1, 1, 3)
    ref, stats = oracles.batch_norm_train(X.tolist(), gamma.tolist(), beta.tolist())
    state = BatchNormState(3)
    out = ad.batch_norm(X, gamma, beta, state).data
    np.testing.assert_allclose(out, np.array(ref), rtol=0, atol=1e-12)
    mu = np.array([s[0] for s in stats])
    var = np.array([s[1] for s in stats])
    np.testing.assert_allclose(state.running_mean, 0.1 * mu, atol=1e-15)
    np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * var, atol=1e-15)


def test_batch_norm_eval_uses_running_stats(rng):
    state = BatchNormState(2)
    state.running_mean = np.array([1.0, -1.0])
    state.running_var = np.array([4.0, 0.25])
    X = rng.uniform(-1, 1, (3, 2, 5))
    out = ad.batch_norm(X, np.ones(2), np.zeros(2), state, train=False).data
    ref = (X - state.running_mean[None, :, None]) / np.sqrt(state.running_var[None, :, None] + 1e-5)
    np.testing.assert_allclose(out, ref, atol=1e-15)
    assert np.array_equal(state.running_mean, [1.0, -1.0])


@pytest.mark.parametrize("train", [True, False])
def test_batch_norm_gradients(rng, train):
    X = param(rng.uniform(-1, 1, (3, 4, 5)))
    g = param(rng.uniform(0.5, 1.5, 4))
    b = param(rng.uniform(-1, 1, 4))
    w = rng.uniform(-1, 1, (3, 4, 5))
    state = BatchNormState(4)
    state.running_var = rng.uniform(0.5, 2, 4)
    build = lambda: ad.total(ad.tanh(ad.add(ad.batch_norm(X, g, b, state, train), w)))
    assert fd_check(build, [X, g, b]) < 1e-4


# --- backward -------------------------------------------------------------

def test_backward_sum_gives_ones(rng):
    th = param(rng.uniform(size=(3, 2)))
    with Tape() as tape:
        loss = ad.total(th)
    assert np.array_equal(ad.backward(tape, loss, [th])[th], np.ones((3, 2)))


def test_backward_quadratic_form(rng):
    A = rng.uniform(-1, 1, (4, 3))
    th = param(rng.uniform(-1, 1, (3, 1)))
    with Tape() as tape:
        y = ad.matmul(A, th)
        loss = ad.total(ad.matmul(ad.transpose(y, (1, 0)), y))
    g = ad.backward(tape, loss, [th])[th]
    np.testing.assert_allclose(g, 2 * A.T @ A @ th.data, atol=1e-14)


def test_backward_rejects_foreign_loss(rng):
    th = param([1.0, 2.0])
    with Tape():
        loss = ad.total(th)
    with pytest.raises(ValueError):
        ad.backward(Tape(), loss, [th])
    with Tape() as tape:
        v = ad.tanh(th)
    with pytest.raises(ValueError):
        ad.backward(tape, v, [th])


def test_backward_unused_param_gets_zero(rng):
    a, b = param([1.0, 2.0]), param([[3.0]])
    with Tape() as tape:
        loss = ad.total(ad.tanh(a))
    g = ad.backward(tape, loss, [a, b])
    assert np.array_equal(g[b], np.zeros((1, 1)))


def test_tape_replays_in_reverse_order(rng):
    a = param(rng.uniform(size=(2, 2)))
    with Tape() as tape:
        y = ad.tanh(ad.matmul(a, a))
        loss = ad.total(y)
    assert [n[0] for n in tape.nodes] == ["matmul", "tanh", "sum"]
    visited = []
    orig = [n[3] for n in tape.nodes]
    for k, node in enumerate(tape.nodes):
        op, out, inputs, back = node
        tape.nodes[k] = (op, out, inputs, lambda g, back=back, op=op: (visited.append(op), back(g))[1])
    ad.backward(tape, loss, [a])
    assert visited == ["sum", "tanh", "matmul"]
    assert len(orig) == 3


@pytest.mark.parametrize("op", ["tanh", "abs", "reshape", "transpose", "take", "slice", "mean",
                                "joint_norms", "local_mix", "scale", "sub"])
def test_elementary_op_gradients(rng, op):
    x = param(rng.uniform(-1, 1, (2, 3, 3, 4)))
    A = param(rng.uniform(-1, 1, (3, 3, 3)))
    w = rng.uniform(-1, 1, 200)

    def dot(y):
        y = ad.reshape(y, (1, -1))
        return ad.total(ad.matmul(y, w[:y.shape[1]].reshape(-1, 1)))

    f = {
        "tanh": lambda: dot(ad.tanh(x)),
        "abs": lambda: dot(ad.absolute(x)),
        "reshape": lambda: dot(ad.reshape(x, (6, 12))),
        "transpose": lambda: dot(ad.transpose(x, (3, 1, 0, 2))),
        "take": lambda: dot(ad.take(x, [0, 2, 2], axis=1)),
        "slice": lambda: dot(ad.slice_axis(x, 1, 2)),
        "mean": lambda: ad.mean(ad.tanh(x)),
        "joint_norms": lambda: dot(ad.joint_norms(x)),
        "local_mix": lambda: dot(ad.local_mix(A, x)),
        "scale": lambda: dot(ad.scale(x, -2.5)),
        "sub": lambda: dot(ad.sub(x, ad.tanh(x))),
    }[op]
    assert fd_check(f, [x, A] if op == "local_mix" else [x]) < 1e-4


def test_determinism(rng):
    A = rng.uniform(-1, 1, (5, 6))
    outs = []
    for _ in range(2):
        th = param(np.linspace(-1, 1, 12).reshape(6, 2))
        with Tape() as tape:
            loss = ad.mean(ad.tanh(ad.matmul(A, th)))
        outs.append((loss.data.copy(), ad.backward(tape, loss, [th])[th]))
    assert outs[0][0].tobytes() == outs[1][0].tobytes()
    assert outs[0][1].tobytes() == outs[1][1].tobytes()


# --- clipping and Adam ----------------------------------------------------

def test_clip_halves_norm_two():
    g = [np.array([2.0, 0.0]), np.array([[0.0]])]
    out, pre = clip_gradients_l2(g, 1.0)
    assert pre == 2.0
    np.testing.assert_array_equal(out[0], [1.0, 0.0])


def test_clip_leaves_small_gradients():
    g = [np.array([0.3, 0.4])]
    out, pre = clip_gradients_l2(g, 1.0)
    assert out[0] is g[0] and pre == pytest.approx(0.5)


def test_clip_rejects_nonpositive():
    with pytest.raises(ValueError):
        clip_gradients_l2([np.ones(2)], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(arrays(np.float64, st.integers(1, 5), elements=st.floats(-10, 10)), min_size=1, max_size=4))
def test_clip_norm_and_idempotence(grads):
    pre = global_norm(grads)
    once, _ = clip_gradients_l2(grads, 1.0)
    assert abs(global_norm(once) - min(pre, 1.0)) <= 1e-12
    twice, _ = clip_gradients_l2(once, 1.0)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(once, twice))


def test_adam_first_step_closed_form():
    th = np.array([0.0])
    st_ = AdamState([(1,)])
    adam_step([th], [np.array([1.0])], st_, 0.001)
    assert abs(th[0] - (-0.001 / (1 + 1e-8))) <= 1e-12
    assert st_.t == 1


def test_adam_zero_gradient_no_move():
    th = np.array([0.7])
    adam_step([th], [np.array([0.0])], AdamState([(1,)]), 0.001)
    assert th[0] == 0.7


def test_adam_two_steps_recurrence():
    th = np.array([0.25])
    s = AdamState([(1,)])
    for _ in range(2):
        adam_step([th], [np.array([0.3])], s, 0.01)
    assert abs(th[0] - oracles.adam_reference([0.3, 0.3], 0.01, theta=0.25)) <= 1e-12
    assert s.t == 2 and s.v[0][0] >= 0


def test_adam_rejects_bad_lr():
    with pytest.raises(ValueError):
        adam_step([np.zeros(1)], [np.zeros(1)], AdamState([(1,)]), 0.0)


def test_adam_step_decreases_quadratic():
    th = np.array([2.0])
    before = th[0] ** 2
    adam_step([th], [2 * th.copy()], AdamState([(1,)]), 1e-3)
    assert th[0] ** 2 < before
    assert math.isfinite(th[0])
