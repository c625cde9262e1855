import math
from dataclasses import replace

import numpy as np
import pytest

from zspatial.autodiff import Tape, Tensor, gradient_check, ops
from zspatial.fiber import EdfaSpec, FiberSpec, SsfmConfig
from zspatial.link import LinkOutput, LinkTopology, simulate_link
from zspatial.signal import ComplexBasebandSignal, brickwall_mask
from zspatial.transceiver import (
    TrainConfig, TrainingDiverged, collect_symbols, demapper_logits, evaluate, init_params, link_forward, rx_forward,
    rx_symbols, train, tx_forward, tx_signal, tx_symbols,
)

LINEAR = FiberSpec(gamma=0.0)


def topo(mode="SDA", l2=50.0, gamma=0.0, noise=False, step=50.0, adc=None):
    return LinkTopology(mode=mode, l1_km=100.0, l2_km=l2, adc_bandwidth=20e9, fiber=FiberSpec(gamma=gamma),
                        ssfm=SsfmConfig(step, noise_enabled=noise), edfa=EdfaSpec(nsp_edfa=0.0 if not noise else 3.16),
                        adc_noise_w=adc)


def small_cfg(t, **kw):
    base = dict(topology=t, samples_per_symbol=4, n_symbols=31, batch=8, steps=50, lr=1e-2, power_dbm=0.0)
    return TrainConfig(**{**base, **kw})


def perturbed(params, scale=0.05, seed=0):
    rng = np.random.default_rng(seed)
    return params.with_arrays([a + scale * rng.standard_normal(a.shape) for a in params.arrays()])


def test_identity_transmitter_matches_classic_pulse_shaping(rng):
    p = init_params(16, "AEPC", window_k=2, hidden=8, seed=1)
    cfg = small_cfg(topo())
    idx = rng.integers(0, 16, 31)
    s = p.constellation.points[idx]
    x = tx_signal(idx, p, cfg.grid, 1e-3).samples.ravel()
    spec = np.fft.fft(x)
    outside = brickwall_mask(cfg.grid, cfg.symbol_rate) == 0
    assert np.sum(np.abs(spec[outside]) ** 2) / np.sum(np.abs(spec) ** 2) < 1e-12
    # symbol instants carry the power-normalized symbols
    got = x[:: cfg.samples_per_symbol]
    assert np.allclose(got, math.sqrt(1e-3) * s / np.sqrt(np.mean(np.abs(s) ** 2)), atol=1e-12)
    assert abs(np.mean(np.abs(x) ** 2) - 1e-3) < 1e-12


def test_output_power_gradient_vanishes():
    p = perturbed(init_params(16, "AEP", window_k=2, hidden=8, seed=2))
    cfg = small_cfg(topo())
    idx = np.random.default_rng(0).integers(0, 16, (1, 31))
    w0 = p.predistort.weights[-1]

    def power(w):
        net = replace(p.predistort, weights=p.predistort.weights[:-1] + (w,))
        x = tx_forward(idx, replace(p, predistort=net), cfg.grid, 1e-3)
        return ops.mean_all(ops.abs2(x))

    wt = Tensor(w0, requires_grad=True)
    with Tape() as tape:
        out = power(wt)
    tape.backward(out)
    assert np.max(np.abs(wt.grad)) < 1e-15
    assert abs(float(power(Tensor(w0 + 1e-3)).value) - float(out.value)) < 1e-15


@pytest.mark.parametrize("mode", ["baseline", "SD", "SDA"])
@pytest.mark.parametrize("l2", [0.0, 150.0])
def test_identity_chain_recovers_symbols(mode, l2, rng):
    p = init_params(16, "AEPC", window_k=2, hidden=8)
    t = topo(mode, l2)
    cfg = small_cfg(t)
    idx = rng.integers(0, 16, 31)
    x = tx_signal(idx, p, cfg.grid, 1e-3)
    s_hat, logits = rx_forward(simulate_link(x, t, None), p, t, 1e-3)
    s = p.constellation.points[idx]
    assert np.max(np.abs(s_hat[0] * np.sqrt(np.mean(np.abs(s) ** 2)) - s)) < 1e-8
    assert logits.shape == (31, 16)


def test_baseline_permutation_symmetry(rng):
    p = perturbed(init_params(16, "AEC", window_k=2, hidden=8))
    t = topo("baseline", gamma=1.27)
    cfg = small_cfg(t)
    x = tx_signal(rng.integers(0, 16, 31), p, cfg.grid, 1e-3)
    y = simulate_link(x, t, None)
    a, _ = rx_forward(y, p, t, 1e-3)
    b, _ = rx_forward(LinkOutput(y.y2, y.y1), p, t, 1e-3)
    assert np.array_equal(a, b)


def test_parameter_parity_across_modes():
    p = init_params(16, "AEPC")
    counts = {m: p.n_params() for m in ("baseline", "SD", "SDA")}
    assert len(set(counts.values())) == 1
    assert p.n_params(include_demapper=True) > p.n_params()
    assert init_params(16, "AEC").predistort is None and init_params(16, "AEP").combine is None
    with pytest.raises(ValueError):
        init_params(16, "XYZ")


def test_tape_link_matches_numpy_link(rng):
    t = topo("SDA", 50.0, gamma=1.27, noise=True, step=10.0, adc=1e-7)
    cfg = small_cfg(t)
    p = init_params(16, "AEC", window_k=2, hidden=8)
    x = tx_signal(rng.integers(0, 16, 31), p, cfg.grid, 2e-3)
    ref = simulate_link(x, t, np.random.default_rng(9))
    y1, y2 = link_forward(Tensor(x.samples), cfg.grid, t, np.random.default_rng(9))
    assert np.array_equal(y1.value, ref.y1.samples) and np.array_equal(y2.value, ref.y2.samples)


def test_end_to_end_gradient_matches_finite_differences():
    t = topo("SDA", 20.0, gamma=1.27, step=20.0)
    cfg = TrainConfig(topology=t, samples_per_symbol=4, n_symbols=15, power_dbm=3.0)
    p = perturbed(init_params(4, "AEPC", window_k=2, hidden=6, demapper_hidden=8, seed=3), 0.3)
    idx = np.random.default_rng(1).integers(0, 4, (1, 15))
    w0 = p.combine.weights[0]

    def loss(w):
        net = replace(p.combine, weights=(w,) + p.combine.weights[1:])
        q = replace(p, combine=net)
        x = tx_forward(idx, q, cfg.grid, cfg.power_w)
        y1, y2 = link_forward(x, cfg.grid, t, None)
        return ops.cross_entropy(
            __import__("zspatial.transceiver", fromlist=["demapper_logits"]).demapper_logits(
                rx_symbols(y1, y2, q, cfg.grid, t, cfg.power_w), q), idx)

    assert gradient_check(loss, w0, h=1e-6, n_probe=30) < 1e-4


def test_linear_noiseless_training_converges():
    p = init_params(16, "AEC", window_k=2, hidden=16, demapper_hidden=64, seed=0)
    cfg = small_cfg(topo("SD"), steps=500, lr=5e-2, lr_final=1e-3)
    res = train(cfg, p)
    assert res.losses.min() < 1e-3
    assert res.losses[-50:].mean() < 1e-2
    assert res.losses.shape == (500,)


def test_pure_noise_channel_plateaus_at_ln_m():
    p = init_params(16, "AEC", window_k=2, hidden=8, seed=0)
    cfg = small_cfg(topo("SD"), steps=300, lr=3e-3)

    def noise(x, grid, rng):
        shape = x.value.shape
        n = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return n * 1e-2, n * 1e-2

    res = train(cfg, p, channel=noise)
    assert abs(res.losses[-100:].mean() - math.log(16)) / math.log(16) < 0.02


def test_training_is_deterministic():
    p = init_params(16, "AEPC", window_k=2, hidden=8)
    cfg = small_cfg(topo("SDA", gamma=1.27, noise=True), steps=5)
    a, b = train(cfg, p), train(cfg, p)
    assert np.array_equal(a.losses, b.losses)
    assert all(np.array_equal(u, v) for u, v in zip(a.params.arrays(), b.params.arrays()))


def test_divergence_aborts_with_diagnostics():
    p = init_params(16, "AEC", window_k=2, hidden=8)
    cfg = small_cfg(topo("SD"), steps=3)

    def broken(x, grid, rng):
        v = np.full(x.value.shape, np.nan + 0j)
        return v, v

    with pytest.raises(TrainingDiverged, match="step 0"):
        train(cfg, p, channel=broken)


def test_evaluate_linear_noiseless_link_is_lossless():
    p = init_params(16, "AEC", window_k=2, hidden=8)
    res = evaluate(p, small_cfg(topo("SDA")), n_frames=16)
    assert 4.0 - res.mi_bits < 0.01
    assert res.mi_bits <= 4.0


def test_evaluate_independent_output_has_no_information(monkeypatch):
    import zspatial.transceiver as tr

    cfg = small_cfg(topo("SD"))

    def scramble(x, t, rng):
        z = ComplexBasebandSignal(rng.standard_normal(x.samples.shape) + 1j * rng.standard_normal(x.samples.shape),
                                  x.grid)
        return LinkOutput(z, z)

    monkeypatch.setattr(tr, "simulate_link", scramble)
    res = evaluate(init_params(16, "AEC", window_k=2, hidden=8), cfg, n_frames=300)
    assert res.mi_bits < 0.05


def test_eval_frames_are_disjoint_from_training_stream():
    p = init_params(16, "AEC", window_k=2, hidden=8)
    cfg = small_cfg(topo("SD"))
    labels, _ = collect_symbols(p, cfg, 2)
    train_idx = np.random.default_rng([cfg.seed, 1, 0]).integers(0, 16, size=(cfg.batch, cfg.n_symbols))
    assert not any(np.array_equal(labels[0], row) for row in train_idx)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(topology=replace(topo(), adc_bandwidth=10e9))
    with pytest.raises(ValueError):
        TrainConfig(batch=0)
    cfg = TrainConfig(steps=11, lr=1e-2, lr_final=1e-4)
    assert cfg.learning_rate(0) == 1e-2 and math.isclose(cfg.learning_rate(10), 1e-4)
    assert math.isclose(cfg.learning_rate(5), 1e-3)


def test_tx_symbols_are_constellation_points():
    p = init_params(16, "AEC")
    idx = np.array([[0, 5, 15]])
    assert np.array_equal(tx_symbols(idx, p).value, p.constellation.points[idx])
