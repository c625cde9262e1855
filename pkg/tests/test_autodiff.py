import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zspatial.autodiff import (
    AdamState, MlpParams, Tape, TapeError, Tensor, adam_step, gradient_check, identity_layer, init_mlp,
    load_checkpoint, mlp_apply, ops, save_checkpoint,
)
from zspatial.fiber import linear_operator
from zspatial.signal import SamplingGrid, brickwall_mask

RNG = np.random.default_rng(1234)


def crandn(*shape, rng=RNG):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def inner(a, b):
    return float(np.real(np.vdot(a, b)))


H_DISP = linear_operator(2 * np.pi * np.fft.fftfreq(24, 1.0), -21.67, 3.0)
W = RNG.standard_normal((6, 4))

# op, input factory; every entry is linear in its input
LINEAR_OPS = {
    "scale": (lambda x: ops.scale(x, 0.3 - 1.2j), lambda: crandn(3, 8)),
    "reshape": (lambda x: ops.reshape(x, (4, 6)), lambda: crandn(2, 12)),
    "concat": (lambda x: ops.concat([x, ops.scale(x, 2.0)]), lambda: crandn(3, 5)),
    "complex_to_real": (ops.complex_to_real, lambda: crandn(3, 5)),
    "real_to_complex": (ops.real_to_complex, lambda: RNG.standard_normal((3, 8))),
    "windows": (lambda x: ops.windows(x, 3), lambda: crandn(2, 11)),
    "gather": (lambda x: ops.gather_last(x, np.array([0, 3, 3, 7, 1])), lambda: crandn(2, 8)),
    "upsample": (lambda x: ops.upsample(x, 4), lambda: crandn(2, 7)),
    "downsample": (lambda x: ops.downsample(x, 3, 1), lambda: crandn(2, 12)),
    "fft": (ops.fft, lambda: crandn(2, 16)),
    "ifft": (ops.ifft, lambda: crandn(2, 16)),
    "brickwall": (lambda x: ops.freq_filter(x, brickwall_mask(SamplingGrid(24e9, 1, 24), 8e9)),
                  lambda: crandn(2, 24)),
    "dispersion": (lambda x: ops.freq_filter(x, H_DISP), lambda: crandn(2, 24)),
    "matmul": (lambda x: ops.matmul(x, W), lambda: RNG.standard_normal((5, 6))),
    "sum_all": (ops.sum_all, lambda: RNG.standard_normal((3, 4))),
    "mean_all": (ops.mean_all, lambda: RNG.standard_normal((3, 4))),
    "identity": (ops.identity, lambda: RNG.standard_normal((3, 4))),
}


@pytest.mark.parametrize("name", sorted(LINEAR_OPS))
def test_adjoint_inner_product(name):
    op, make = LINEAR_OPS[name]
    for _ in range(3):
        x0 = make()
        x = Tensor(x0, requires_grad=True)
        with Tape() as tape:
            out = op(x)
        v = out.value
        y = crandn(*v.shape) if np.iscomplexobj(v) else RNG.standard_normal(v.shape)
        tape.backward(out, seed=y)
        lhs, rhs = inner(y, v), inner(x.grad, x0)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


NONLINEAR = {
    "tanh": (ops.tanh, lambda: RNG.standard_normal((3, 4))),
    "relu": (ops.relu, lambda: RNG.standard_normal((3, 4)) + 0.05),
    "abs2": (ops.abs2, lambda: crandn(3, 4)),
    "mul": (lambda x: ops.mul(x, ops.scale(x, 1.5j)), lambda: crandn(3, 4)),
    "nl_phase": (lambda x: ops.nl_phase(x, 0.7), lambda: crandn(2, 6)),
    "normalize_power": (lambda x: ops.normalize_power(x, 2.0), lambda: crandn(2, 6)),
    "add_constant": (lambda x: ops.abs2(ops.add_constant(x, 1 + 1j)), lambda: crandn(2, 6)),
}


@pytest.mark.parametrize("name", sorted(NONLINEAR))
def test_nonlinear_nodes_match_finite_differences(name):
    op, make = NONLINEAR[name]
    weights = RNG.standard_normal(make().shape)

    def f(x):
        out = op(x)
        return ops.sum_all(ops.scale(ops.abs2(out) if np.iscomplexobj(out.value) else out, weights))

    assert gradient_check(f, make(), h=1e-5) < 1e-6


def test_cross_entropy_gradient():
    labels = np.array([0, 2, 1, 2])
    assert gradient_check(lambda z: ops.cross_entropy(z, labels), RNG.standard_normal((4, 3))) < 1e-7
    z = np.zeros((2, 4))
    assert math.isclose(float(ops.cross_entropy(z, [0, 1]).value), math.log(4))


def test_square_example():
    x = Tensor(np.array(3.0), requires_grad=True)
    with Tape() as tape:
        y = ops.mul(x, x)
    tape.backward(y)
    assert float(x.grad) == 6.0
    assert gradient_check(lambda t: ops.mul(t, t), np.array(3.0), h=1e-3) < 1e-10


def test_half_norm_gradient_is_input():
    x0 = crandn(7)
    x = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        loss = ops.scale(ops.sum_all(ops.abs2(x)), 0.5)
    tape.backward(loss)
    assert np.allclose(x.grad, x0, atol=1e-14)


def test_linear_layer_gradient_fd():
    rng = np.random.default_rng(0)
    p = init_mlp([5, 3], ["linear"], rng)
    xin = rng.standard_normal((4, 5))
    w0 = p.weights[0]

    def f(w):
        return ops.sum_all(ops.abs2(ops.add(ops.matmul(Tensor(xin), w), p.biases[0])))

    assert gradient_check(f, w0) < 1e-8


def test_ssfm_gradient_two_steps():
    from zspatial.fiber import split_step
    omega = 2 * np.pi * np.fft.fftfreq(16, 0.02)
    q0 = crandn(16) * 0.3
    half = linear_operator(omega, -21.67, 0.5)
    full = linear_operator(omega, -21.67, 1.0)

    def prop(x):
        x = ops.freq_filter(x, half)
        x = ops.nl_phase(x, 1.27 * 1.0)
        x = ops.freq_filter(x, full)
        x = ops.nl_phase(x, 1.27 * 1.0)
        return ops.freq_filter(x, half)

    ref = split_step(q0, omega, -21.67, 1.27, 2, 1.0)
    assert np.allclose(prop(Tensor(q0)).value, ref, atol=1e-12)
    target = crandn(16)
    assert gradient_check(lambda x: ops.sum_all(ops.abs2(ops.sub(prop(x), target))), q0, h=1e-5) < 1e-4


def test_tape_rejects_foreign_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        y = ops.sum_all(x)
    with Tape() as other:
        pass
    with pytest.raises(TapeError):
        other.backward(y)


def test_no_recording_without_tape_or_leaves():
    x = Tensor(np.ones(3), requires_grad=True)
    assert ops.sum_all(x).node is None
    with Tape() as tape:
        ops.sum_all(Tensor(np.ones(3)))
    assert len(tape) == 0


def test_mlp_examples():
    x = np.array([[0.5, -2.0, 3.0]])
    assert np.array_equal(mlp_apply(identity_layer(3), x).value, x)
    z = MlpParams((np.zeros((3, 2)),), (np.array([0.25, -1.0]),), ("linear",))
    assert np.array_equal(mlp_apply(z, x).value, [[0.25, -1.0]])
    w1 = np.array([[0.3, -0.7], [1.1, 0.2]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[0.5], [-1.5]])
    b2 = np.array([0.05])
    net = MlpParams((w1, w2), (b1, b2), ("tanh", "linear"))
    v = np.array([0.4, -0.9])
    h = [math.tanh(v[0] * w1[0, j] + v[1] * w1[1, j] + b1[j]) for j in range(2)]
    hand = h[0] * w2[0, 0] + h[1] * w2[1, 0] + b2[0]
    assert abs(mlp_apply(net, v).value[0] - hand) < 1e-12


def test_mlp_validation():
    with pytest.raises(ValueError):
        MlpParams((np.zeros((3, 2)), np.zeros((3, 1))), (np.zeros(2), np.zeros(1)), ("tanh", "linear"))
    with pytest.raises(ValueError):
        MlpParams((np.zeros((3, 2)),), (np.zeros(2),), ("gelu",))
    with pytest.raises(ValueError):
        mlp_apply(identity_layer(3), np.zeros((1, 4)))


def test_adam_scalar_hand_arithmetic():
    p = [np.array([1.0])]
    st0 = AdamState.zeros_like(p, lr=0.1)
    g = 0.5
    p1, st1 = adam_step(p, [np.array([g])], st0)
    m = 0.1 * g
    v = 0.001 * g * g
    hand = 1.0 - 0.1 * (m / 0.1) / (math.sqrt(v / 0.001) + 1e-8)
    assert abs(p1[0][0] - hand) < 1e-15
    assert abs(p1[0][0] - 0.9) < 1e-6
    p2, st2 = adam_step(p1, [np.array([g])], st1)
    m2 = 0.9 * m + 0.1 * g
    v2 = 0.999 * v + 0.001 * g * g
    hand2 = p1[0][0] - 0.1 * (m2 / (1 - 0.81)) / (math.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
    assert abs(p2[0][0] - hand2) < 1e-15
    assert st2.step == 2


def test_adam_zero_gradient_only_decays_moments():
    p = [np.array([2.0, -1.0])]
    st0 = AdamState(m=(np.array([0.2, 0.0]),), v=(np.array([0.04, 0.0]),), step=3)
    p1, st1 = adam_step(p, [None], st0)
    assert np.allclose(st1.m[0], 0.9 * st0.m[0])
    assert np.allclose(st1.v[0], 0.999 * st0.v[0])
    assert p1[0][1] == -1.0


def _run_adam(seed):
    rng = np.random.default_rng(seed)
    p = init_mlp([4, 8, 1], ["tanh", "linear"], rng)
    arrays = p.arrays()
    state = AdamState.zeros_like(arrays)
    x = rng.standard_normal((16, 4))
    y = np.sin(x.sum(axis=1, keepdims=True))
    for _ in range(100):
        net = p.with_arrays(arrays).trainable()
        with Tape() as tape:
            loss = ops.mean_all(ops.abs2(ops.sub(mlp_apply(net, x), y)))
        tape.backward(loss)
        arrays, state = adam_step(arrays, [t.grad for t in net.leaves()], state)
    return arrays


def test_training_is_deterministic():
    a, b = _run_adam(7), _run_adam(7)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = [rng.standard_normal((3, 4)), rng.standard_normal(4), np.array(2.5)]
    save_checkpoint(tmp_path / "ck", arrays, {"note": "x"})
    back, meta = load_checkpoint(tmp_path / "ck")
    assert all(np.array_equal(u, v) for u, v in zip(arrays, back))
    assert meta["note"] == "x" and meta["shapes"] == [[3, 4], [4], []]
    (tmp_path / "ck.json").write_text('{"shapes": [[1]]}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "ck")


@settings(max_examples=20)
@given(n=st.integers(3, 20), k=st.integers(0, 4), seed=st.integers(0, 2**16))
def test_windows_adjoint_property(n, k, seed):
    rng = np.random.default_rng(seed)
    x0 = crandn(2, n, rng=rng)
    x = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        out = ops.windows(x, k)
    y = crandn(*out.shape, rng=rng)
    tape.backward(out, seed=y)
    assert abs(inner(y, out.value) - inner(x.grad, x0)) < 1e-10 * max(1.0, abs(inner(y, out.value)))
