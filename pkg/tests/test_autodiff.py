import math

import numpy as np
import pytest

from creatlab.autodiff import Adam, Parameter, Tape, load_params, save_params
from creatlab.errors import ContractError, ShapeError


def finite_diff(fn, x, h=1e-4):
    """Central-difference gradient of scalar fn() w.r.t. the array x in place."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        dn = fn()
        flat[i] = orig
        gf[i] = (up - dn) / (2 * h)
    return g


def rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return np.max(np.abs(a - b) / denom)


def test_softmax_cross_entropy_uniform():
    t = Tape()
    logits = t.leaf([0.0, 0.0, 0.0])
    loss = t.softmax_cross_entropy(logits, 1)
    assert loss.data == pytest.approx(math.log(3), abs=1e-12)


def test_matmul_identity():
    t = Tape()
    a = t.leaf(np.eye(2))
    b = t.leaf([[1.0, 2.0], [3.0, 4.0]])
    out = t.matmul(a, b)
    np.testing.assert_array_equal(out.data, b.data)


def test_tanh_gradient_at_zero():
    t = Tape()
    x = t.leaf([[0.0]])
    y = t.sum(t.tanh(x))
    t.backward(y)
    assert x.grad[0, 0] == pytest.approx(1.0)


def test_backward_sum_gives_ones():
    t = Tape()
    x = t.leaf(np.arange(6, dtype=float).reshape(2, 3))
    loss = t.sum(x)
    t.backward(loss)
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_quadratic():
    t = Tape()
    x = t.leaf([[1.0], [2.0]])
    loss = t.sum(t.mul(x, x))
    t.backward(loss)
    np.testing.assert_allclose(x.grad, [[2.0], [4.0]])


def test_unused_leaf_gets_zero_grad():
    t = Tape()
    x = t.leaf([[1.0, 2.0]])
    unused = t.leaf([[5.0]])
    loss = t.sum(x)
    t.backward(loss)
    np.testing.assert_array_equal(unused.grad, [[0.0]])


def test_non_scalar_loss_rejected():
    t = Tape()
    x = t.leaf([[1.0, 2.0]])
    y = t.scale(x, 2.0)
    with pytest.raises(ContractError):
        t.backward(y)


def test_shape_mismatch_names_both_shapes():
    t = Tape()
    a = t.leaf(np.ones((2, 3)))
    b = t.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError) as exc:
        t.matmul(a, b)
    assert "(2, 3)" in str(exc.value)


def test_three_layer_net_matches_finite_differences():
    rng = np.random.default_rng(3)
    w1 = Parameter("w1", rng.normal(size=(4, 5)) * 0.5)
    b1 = Parameter("b1", rng.normal(size=(1, 5)) * 0.1)
    w2 = Parameter("w2", rng.normal(size=(5, 4)) * 0.5)
    w3 = Parameter("w3", rng.normal(size=(4, 3)) * 0.5)
    x = rng.normal(size=(2, 4))
    targets = [0, 2]

    def run():
        t = Tape()
        h1 = t.tanh(t.add(t.matmul(t.leaf(x), t.param(w1)), t.param(b1)))
        h2 = t.sigmoid(t.matmul(h1, t.param(w2)))
        logits = t.matmul(h2, t.param(w3))
        return t, t.softmax_cross_entropy(logits, targets)

    t, loss = run()
    for p in (w1, b1, w2, w3):
        p.zero_grad()
    t.backward(loss)
    for p in (w1, b1, w2, w3):
        fd = finite_diff(lambda: run()[1].data.item(), p.data)
        assert rel_err(p.grad, fd) < 1e-3, p.name


# Each case: input arrays (mutated in place by finite_diff) and a builder
# mapping leaf tensors to a scalar loss on the tape.
def _probe_sum(tape, out, seed=0):
    probe = np.random.default_rng(seed).normal(size=out.data.shape)
    return tape.sum(tape.mul(out, tape.leaf(probe)))


OP_CASES = {
    "matmul": (
        [np.random.default_rng(1).normal(size=(3, 4)),
         np.random.default_rng(2).normal(size=(4, 3))],
        lambda t, xs: _probe_sum(t, t.matmul(xs[0], xs[1])),
    ),
    "matmul_nt": (
        [np.random.default_rng(3).normal(size=(3, 4)),
         np.random.default_rng(4).normal(size=(5, 4))],
        lambda t, xs: _probe_sum(t, t.matmul_nt(xs[0], xs[1])),
    ),
    "add": (
        [np.random.default_rng(5).normal(size=(3, 4)),
         np.random.default_rng(6).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.add(xs[0], xs[1])),
    ),
    "add_row_bias": (
        [np.random.default_rng(7).normal(size=(3, 4)),
         np.random.default_rng(8).normal(size=(1, 4))],
        lambda t, xs: _probe_sum(t, t.add(xs[0], xs[1])),
    ),
    "sub": (
        [np.random.default_rng(9).normal(size=(3, 4)),
         np.random.default_rng(10).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.sub(xs[0], xs[1])),
    ),
    "mul": (
        [np.random.default_rng(11).normal(size=(3, 4)),
         np.random.default_rng(12).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.mul(xs[0], xs[1])),
    ),
    "scale": (
        [np.random.default_rng(13).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.scale(xs[0], -1.7)),
    ),
    "tanh": (
        [np.random.default_rng(14).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.tanh(xs[0])),
    ),
    "sigmoid": (
        [np.random.default_rng(15).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.sigmoid(xs[0])),
    ),
    "exp": (
        [np.random.default_rng(16).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.exp(xs[0])),
    ),
    "gather_rows": (
        [np.random.default_rng(17).normal(size=(5, 3))],
        lambda t, xs: _probe_sum(t, t.gather_rows(xs[0], [2, 0, 2, 4])),
    ),
    "concat_cols": (
        [np.random.default_rng(18).normal(size=(3, 2)),
         np.random.default_rng(19).normal(size=(3, 4))],
        lambda t, xs: _probe_sum(t, t.concat_cols([xs[0], xs[1]])),
    ),
    "mean_rows": (
        [np.random.default_rng(20).normal(size=(4, 3))],
        lambda t, xs: _probe_sum(t, t.mean_rows(xs[0])),
    ),
    "clip": (
        # keep entries away from the clip kinks so central differences are valid
        [np.random.default_rng(21).normal(size=(3, 4)) * 2.0],
        lambda t, xs: _probe_sum(t, t.clip(xs[0], -0.75, 0.75)),
    ),
    "minimum": (
        [np.random.default_rng(22).normal(size=(3, 4)),
         np.random.default_rng(23).normal(size=(3, 4)) + 0.05],
        lambda t, xs: _probe_sum(t, t.minimum(xs[0], xs[1])),
    ),
    "masked_log_softmax": (
        [np.random.default_rng(24).normal(size=6)],
        lambda t, xs: t.pick(
            t.masked_log_softmax(xs[0], np.array([1, 1, 0, 1, 0, 1], bool)), 3),
    ),
    "softmax_cross_entropy_weighted": (
        [np.random.default_rng(25).normal(size=(3, 5))],
        lambda t, xs: t.softmax_cross_entropy(xs[0], [1, 4, 0], weights=[1.0, 0.0, 2.0]),
    ),
}


@pytest.mark.parametrize("op_name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(op_name):
    arrays, build = OP_CASES[op_name]
    arrays = [a.copy() for a in arrays]

    def value():
        t = Tape()
        leaves = [t.leaf(a) for a in arrays]
        # leaf() copies, so re-bind leaf data to the live arrays for FD probing
        for leaf, arr in zip(leaves, arrays):
            leaf.data = arr
        return t, leaves, build(t, leaves)

    t, leaves, loss = value()
    t.backward(loss)
    for leaf, arr in zip(leaves, arrays):
        fd = finite_diff(lambda: value()[2].data.item(), arr)
        assert rel_err(leaf.grad, fd) < 1e-3, op_name


def test_backward_deterministic_repeatable():
    rng = np.random.default_rng(5)
    x_val = rng.normal(size=(3, 3))
    grads = []
    for _ in range(2):
        t = Tape()
        x = t.leaf(x_val)
        loss = t.sum(t.tanh(t.matmul(x, x)))
        t.backward(loss)
        grads.append(x.grad.copy())
    np.testing.assert_array_equal(grads[0], grads[1])


def test_adam_converges_on_quadratic():
    p = Parameter("p", np.array([5.0, -3.0]))
    opt = Adam([p], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        p.grad += 2 * p.data
        opt.step()
    assert np.abs(p.data).max() < 1e-3


def test_checkpoint_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(11)
    params = {
        "emb": Parameter("emb", rng.normal(size=(7, 3))),
        "w": Parameter("w", rng.normal(size=(3, 3)) * 1e-7),
    }
    path = tmp_path / "ckpt.json"
    save_params(path, params)
    loaded = load_params(path)
    for name, p in params.items():
        np.testing.assert_array_equal(loaded[name].data, p.data)
