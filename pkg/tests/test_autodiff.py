"""Tensor/tape engine: forward semantics, gradient checks, Adam, checkpoints."""

import numpy as np
import pytest
from conftest import numeric_gradient, rel_err

from modecast.autodiff import (
    Adam,
    BatchNormState,
    Tape,
    Tensor,
    load_checkpoint,
    save_checkpoint,
)

GRAD_TOL = 1e-4


# -- forward semantics --------------------------------------------------------


def test_softmax_symmetry():
    out = Tape().softmax(Tensor(np.array([0.0, 0.0])))
    assert np.allclose(out.values, [0.5, 0.5])


def test_matmul_identity():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    out = Tape().matmul(Tensor(np.eye(3)), Tensor(a))
    assert np.array_equal(out.values, a)


def test_mse_zero_loss_and_zero_gradient():
    tape = Tape()
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    loss = tape.mse(x, Tensor(x.values.copy()))
    assert loss.values == 0.0
    grads = tape.backward(loss)
    assert np.array_equal(grads[x], np.zeros(3))


def test_matmul_shape_errors_report_both_shapes():
    tape = Tape()
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        tape.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_concat_and_slice_round_trip():
    tape = Tape()
    a = Tensor(np.arange(6.0).reshape(2, 3))
    b = Tensor(np.arange(6.0, 12.0).reshape(2, 3))
    merged = tape.concat([a, b], axis=1)
    assert merged.shape == (2, 6)
    back = tape.slice(merged, (slice(None), slice(0, 3)))
    assert np.array_equal(back.values, a.values)


# -- backward contracts -------------------------------------------------------


def test_backward_sum_is_ones():
    tape = Tape()
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]), requires_grad=True)
    grads = tape.backward(tape.sum(x))
    assert np.array_equal(grads[x], np.ones(4))


def test_backward_square_power_rule():
    tape = Tape()
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    grads = tape.backward(tape.sum(tape.mul(x, x)))
    assert np.allclose(grads[x], [2.0, 4.0])


def test_backward_requires_scalar_loss():
    tape = Tape()
    x = Tensor(np.ones(3), requires_grad=True)
    y = tape.mul(x, x)
    with pytest.raises(ValueError, match="scalar"):
        tape.backward(y)


def test_parameter_off_the_loss_path_gets_zero_gradient():
    tape = Tape()
    x = Tensor(np.ones(2), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True)
    tape.mul_scalar(y, 2.0)  # on the tape, but not feeding the loss
    grads = tape.backward(tape.sum(x))
    assert np.array_equal(grads[y], np.zeros(2))
    assert np.array_equal(grads[x], np.ones(2))


def test_fanout_accumulation_matches_scaling():
    x1 = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    tape1 = Tape()
    tape1.backward(tape1.sum(tape1.add(x1, x1)))

    x2 = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    tape2 = Tape()
    tape2.backward(tape2.sum(tape2.mul_scalar(x2, 2.0)))

    assert np.array_equal(x1.grad, x2.grad)


def test_no_gradient_leak_between_backward_passes():
    def run_once(x):
        tape = Tape()
        loss = tape.sum(tape.mul(x, x))
        tape.backward(loss)
        return x.grad.copy()

    x = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    first = run_once(x)
    x.zero_grad()
    second = run_once(x)
    assert np.array_equal(first, second)


# -- finite-difference gradient checks over every differentiable op -----------


def _loss_through(tape, out, weight):
    return tape.sum(tape.mul(out, Tensor(weight)))


def _gradcheck(build, shapes, seeds=range(10), positive=False, avoid_kink=False):
    """build(tape, tensors) -> output tensor; checks every input's gradient."""
    for seed in seeds:
        rng = np.random.default_rng(seed)
        arrays = []
        for shape in shapes:
            a = rng.normal(size=shape)
            if positive:
                a = np.abs(a) + 0.5
            if avoid_kink:
                a = np.where(np.abs(a) < 1e-2, a + 0.5, a)
            arrays.append(a)
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        probe_tape = Tape()
        out = build(probe_tape, tensors)
        weight = np.random.default_rng(seed + 1).normal(size=out.shape)

        tape = Tape()
        loss = _loss_through(tape, build(tape, tensors), weight)
        for t in tensors:
            t.zero_grad()
        tape.backward(loss)

        def value():
            vt = Tape()
            return float(_loss_through(vt, build(vt, tensors), weight).values)

        for t in tensors:
            numeric = numeric_gradient(value, t.values)
            assert rel_err(t.grad, numeric) < GRAD_TOL


OP_CASES = {
    "add": (lambda tp, ts: tp.add(ts[0], ts[1]), [(3, 4), (3, 4)], {}),
    "add_broadcast": (lambda tp, ts: tp.add(ts[0], ts[1]), [(2, 3, 4), (3, 1)], {}),
    "sub": (lambda tp, ts: tp.sub(ts[0], ts[1]), [(3, 4), (3, 4)], {}),
    "mul": (lambda tp, ts: tp.mul(ts[0], ts[1]), [(3, 4), (3, 4)], {}),
    "mul_broadcast": (lambda tp, ts: tp.mul(ts[0], ts[1]), [(4, 2), (4, 1)], {}),
    "div": (lambda tp, ts: tp.div(ts[0], ts[1]), [(3, 4), (3, 4)], {"positive": True}),
    "neg": (lambda tp, ts: tp.neg(ts[0]), [(5,)], {}),
    "add_scalar": (lambda tp, ts: tp.add_scalar(ts[0], 1.7), [(4, 2)], {}),
    "mul_scalar": (lambda tp, ts: tp.mul_scalar(ts[0], -0.6), [(4, 2)], {}),
    "sqrt": (lambda tp, ts: tp.sqrt(ts[0]), [(6,)], {"positive": True}),
    "exp": (lambda tp, ts: tp.exp(ts[0]), [(6,)], {}),
    "relu": (lambda tp, ts: tp.relu(ts[0]), [(5, 3)], {"avoid_kink": True}),
    "gelu": (lambda tp, ts: tp.gelu(ts[0]), [(5, 3)], {}),
    "matmul_2d": (lambda tp, ts: tp.matmul(ts[0], ts[1]), [(3, 4), (4, 2)], {}),
    "matmul_3d": (lambda tp, ts: tp.matmul(ts[0], ts[1]), [(2, 3, 4), (2, 4, 5)], {}),
    "matmul_2d_3d": (lambda tp, ts: tp.matmul(ts[0], ts[1]), [(3, 4), (2, 4, 5)], {}),
    "matmul_3d_2d": (lambda tp, ts: tp.matmul(ts[0], ts[1]), [(2, 3, 4), (4, 5)], {}),
    "transpose": (lambda tp, ts: tp.transpose(ts[0]), [(2, 3, 4)], {}),
    "reshape": (lambda tp, ts: tp.reshape(ts[0], (6, 2)), [(3, 4)], {}),
    "slice": (lambda tp, ts: tp.slice(ts[0], (slice(1, 3), slice(0, 2))), [(4, 3)], {}),
    "concat": (lambda tp, ts: tp.concat(ts, axis=1), [(2, 3), (2, 2)], {}),
    "sum_all": (lambda tp, ts: tp.sum(ts[0]), [(3, 4)], {}),
    "sum_axis": (lambda tp, ts: tp.sum(ts[0], axis=1), [(3, 4)], {}),
    "sum_keepdims": (lambda tp, ts: tp.sum(ts[0], axis=0, keepdims=True), [(3, 4)], {}),
    "mean_all": (lambda tp, ts: tp.mean(ts[0]), [(3, 4)], {}),
    "mean_axis": (lambda tp, ts: tp.mean(ts[0], axis=(0, 2)), [(2, 3, 4)], {}),
    "softmax": (lambda tp, ts: tp.softmax(ts[0], axis=-1), [(3, 5)], {}),
    "softmax_3d": (lambda tp, ts: tp.softmax(ts[0], axis=-1), [(2, 3, 4)], {}),
    "mse": (lambda tp, ts: tp.mse(ts[0], ts[1]), [(3, 4), (3, 4)], {}),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_gradcheck_op(name):
    build, shapes, kwargs = OP_CASES[name]
    _gradcheck(build, shapes, **kwargs)


@pytest.mark.parametrize("training", [True, False])
@pytest.mark.parametrize("ndim", [2, 3])
def test_gradcheck_batch_norm(training, ndim):
    shape = (4, 3) if ndim == 2 else (4, 3, 5)
    state = BatchNormState.for_features(3)
    state.running_mean = np.array([0.1, -0.2, 0.3])
    state.running_var = np.array([1.1, 0.7, 1.4])

    def build(tp, ts):
        return tp.batch_norm(ts[0], ts[1], ts[2], state=None if training else state,
                             training=training)

    _gradcheck(build, [shape, (3,), (3,)], seeds=range(5))


@pytest.mark.parametrize("ndim", [2, 3])
def test_gradcheck_layer_norm(ndim):
    shape = (4, 3) if ndim == 2 else (4, 3, 5)

    def build(tp, ts):
        return tp.layer_norm(ts[0], ts[1], ts[2])

    _gradcheck(build, [shape, (3,), (3,)], seeds=range(5))


def test_batch_norm_updates_running_stats_only_in_training():
    state = BatchNormState.for_features(2)
    x = Tensor(np.random.default_rng(0).normal(size=(8, 2)))
    gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
    before = state.running_mean.copy()
    Tape().batch_norm(x, gamma, beta, state=state, training=True)
    assert not np.array_equal(before, state.running_mean)
    frozen = state.running_mean.copy()
    Tape().batch_norm(x, gamma, beta, state=state, training=False)
    assert np.array_equal(frozen, state.running_mean)


# -- Adam ----------------------------------------------------------------------


def test_adam_first_step_matches_hand_computation():
    # fresh state, g = 1: m_hat = 1, v_hat = 1, delta = -lr / (1 + eps)
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    p.grad[:] = 1.0
    opt.step()
    assert abs(p.values[0] + 0.1) < 1e-6


def test_adam_zero_gradient_leaves_parameter_unchanged():
    p = Tensor(np.array([1.25, -3.5]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad[:] = 0.0
    opt.step()
    assert np.array_equal(p.values, [1.25, -3.5])


def test_adam_identical_gradients_give_identical_updates():
    a = Tensor(np.array([0.5]), requires_grad=True)
    b = Tensor(np.array([0.5]), requires_grad=True)
    opt = Adam([a, b], lr=0.01)
    for _ in range(5):
        a.grad[:] = 0.37
        b.grad[:] = 0.37
        opt.step()
    assert np.array_equal(a.values, b.values)


def test_adam_deterministic_trajectory():
    def run():
        rng = np.random.default_rng(42)
        p = Tensor(rng.normal(size=4), requires_grad=True)
        opt = Adam([p], lr=0.01)
        for _ in range(20):
            tape = Tape()
            loss = tape.sum(tape.mul(p, p))
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
        return p.values.copy()

    assert np.array_equal(run(), run())


# -- checkpoints ---------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    arrays = {
        "weights": rng.normal(size=(7, 5)),
        "bias": rng.normal(size=5),
        "nested.buffer": rng.normal(size=(2, 2, 2)),
    }
    path = tmp_path / "model.npz"
    save_checkpoint(path, arrays, meta={"note": "test", "epochs": 3})
    loaded, meta = load_checkpoint(path)
    assert meta["note"] == "test" and meta["epochs"] == 3
    assert set(loaded) == set(arrays)
    for key, arr in arrays.items():
        assert loaded[key].dtype == arr.dtype
        assert np.array_equal(loaded[key], arr)


def test_checkpoint_rejects_unknown_version(tmp_path):
    import json

    path = tmp_path / "model.npz"
    save_checkpoint(path, {"a": np.zeros(2)}, meta={})
    blob = dict(np.load(path))
    blob["__checkpoint_meta__"] = np.frombuffer(
        json.dumps({"format_version": 999}).encode(), dtype=np.uint8
    )
    np.savez(path, **blob)
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
