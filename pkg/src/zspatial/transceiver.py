"""End-to-end learned transceiver: windowed residual predistortion at the
transmitter, per-path dispersion compensation and a windowed combining network
at the receiver, and a training-only softmax demapper.

Every stage is written on :mod:`zspatial.autodiff.ops`, so the same code runs
eagerly (plain arrays wrapped in tensors) or recorded on a tape for training.

Receiver scaling: with an ideal brickwall pulse shaper the symbol-spaced samples
of the launched field equal ``sqrt(P) * s / rms(s)``, where ``rms(s)`` is the
root mean power of the (predistorted) frame.  The receiver divides by the
nominal ``sqrt(P) * g`` of each path (``g`` the amplitude gain of the coupler
and EDFA), so a perfect linear chain returns ``s / rms(s)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tape, Tensor, adam_step, init_mlp, mlp_apply, ops
from .autodiff.nn import MlpParams
from .autodiff.optim import AdamState
from .fiber import EdfaSpec, PropagationDiverged, ase_sigma2, edfa_sigma2, linear_operator, step_count, white_noise
from .link import LinkOutput, LinkTopology, adc_noise_variance, simulate_link
from .metrics import MetricsResult, evaluate_pairs
from .signal import (
    ComplexBasebandSignal, Constellation, SamplingGrid, SignalError, brickwall_mask, dbm_to_w,
    default_constellation,
)

log = logging.getLogger(__name__)

VARIANTS = ("AEP", "AEC", "AEPC")

# rng stream tags keep training, evaluation and initialization draws disjoint
_TRAIN_TAG = 1
_EVAL_TAG = 2
_INIT_TAG = 3


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TransceiverParams:
    """``predistort`` or ``combine`` is ``None`` when that stage is absent (AEC / AEP)."""

    constellation: Constellation
    predistort: MlpParams | None
    combine: MlpParams | None
    train_demapper: MlpParams
    window_k: int = 16

    def __post_init__(self):
        if self.train_demapper.sizes[-1] != self.constellation.M:
            raise ValueError("demapper output width must equal the constellation size")
        w = 2 * (2 * self.window_k + 1)
        if self.predistort is not None and self.predistort.sizes[0] != w:
            raise ValueError(f"predistortion input must be {w} wide")
        if self.combine is not None and self.combine.sizes[0] != 2 * w:
            raise ValueError(f"combiner input must be {2 * w} wide")

    @property
    def variant(self) -> str:
        return {(True, False): "AEP", (False, True): "AEC", (True, True): "AEPC"}[
            (self.predistort is not None, self.combine is not None)
        ]

    def n_params(self, include_demapper: bool = False) -> int:
        n = sum(p.n_params for p in (self.predistort, self.combine) if p is not None)
        return n + (self.train_demapper.n_params if include_demapper else 0)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for p in (self.predistort, self.combine, self.train_demapper):
            if p is not None:
                out.extend(p.arrays())
        return out

    def with_arrays(self, arrays) -> "TransceiverParams":
        arrays = list(arrays)
        parts = []
        for p in (self.predistort, self.combine, self.train_demapper):
            if p is None:
                parts.append(None)
                continue
            n = len(p.arrays())
            parts.append(p.with_arrays(arrays[:n]))
            arrays = arrays[n:]
        return replace(self, predistort=parts[0], combine=parts[1], train_demapper=parts[2])

    def trainable(self) -> "TransceiverParams":
        return self.with_arrays([Tensor(np.array(a), requires_grad=True) for a in self.arrays()])


def init_params(
    M: int = 16,
    variant: str = "AEPC",
    window_k: int = 16,
    hidden: int = 128,
    demapper_hidden: int = 64,
    seed: int = 0,
    constellation: Constellation | None = None,
) -> TransceiverParams:
    """Residual networks start as the identity (zeroed output layer)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rng = np.random.default_rng([seed, _INIT_TAG])
    w = 2 * (2 * window_k + 1)
    acts = ("tanh", "tanh", "linear")
    pre = init_mlp([w, hidden, hidden, 2], acts, rng, zero_last=True) if variant != "AEC" else None
    comb = init_mlp([2 * w, hidden, hidden, 2], acts, rng, zero_last=True) if variant != "AEP" else None
    demap = init_mlp([2, demapper_hidden, demapper_hidden, M], ("relu", "relu", "linear"), rng)
    c = constellation if constellation is not None else default_constellation(M)
    return TransceiverParams(c, pre, comb, demap, window_k)


@dataclass(frozen=True)
class TrainConfig:
    topology: LinkTopology = field(default_factory=LinkTopology)
    symbol_rate: float = 20e9
    samples_per_symbol: int = 16
    n_symbols: int = 63
    batch: int = 16
    steps: int = 500
    lr: float = 1e-3
    lr_final: float | None = None
    power_dbm: float = 0.0
    seed: int = 0
    noise_in_training: bool = True

    def __post_init__(self):
        if self.n_symbols < 1 or self.batch < 1 or self.steps < 0:
            raise ValueError("n_symbols and batch must be positive, steps non-negative")
        if self.topology.adc_bandwidth < self.symbol_rate * (1 - 1e-12):
            raise ValueError("ADC bandwidth narrower than the symbol rate cuts the signal band")

    @property
    def grid(self) -> SamplingGrid:
        return SamplingGrid.from_symbols(self.symbol_rate, self.samples_per_symbol, self.n_symbols)

    @property
    def power_w(self) -> float:
        return dbm_to_w(self.power_dbm)

    def learning_rate(self, step: int) -> float:
        """Constant, or log-linear decay from ``lr`` to ``lr_final`` over the run."""
        if self.lr_final is None or self.steps <= 1:
            return self.lr
        frac = step / (self.steps - 1)
        return self.lr * (self.lr_final / self.lr) ** frac


# -- transmitter -------------------------------------------------------------------


def _apply_windowed(net: MlpParams, paths, k: int):
    """Run ``net`` on stacked circular windows of complex symbol sequences.

    ``paths`` is a list of ``(B, N)`` complex tensors; returns a ``(B, N)``
    complex correction.
    """
    b, n = paths[0].shape
    feats = [ops.reshape(ops.complex_to_real(ops.windows(p, k)), (b * n, 2 * (2 * k + 1))) for p in paths]
    x = feats[0] if len(feats) == 1 else ops.concat(feats, axis=-1)
    out = mlp_apply(net, x)
    return ops.reshape(ops.real_to_complex(out), (b, n))


def tx_symbols(indices, params: TransceiverParams):
    """Mapper followed by the residual predistortion network (symbol rate)."""
    idx = np.atleast_2d(np.asarray(indices))
    s = Tensor(params.constellation.points[idx])
    if params.predistort is None:
        return s
    return ops.add(s, _apply_windowed(params.predistort, [s], params.window_k))


def tx_forward(indices, params: TransceiverParams, grid: SamplingGrid, p_avg_w: float):
    """Mapper, predistortion, 1:sps zero-stuffing, brickwall at the symbol rate,
    per-frame power normalization.  Returns a ``(B, n_samples)`` tensor."""
    return pulse_shape(tx_symbols(indices, params), grid, p_avg_w)


def pulse_shape(s, grid: SamplingGrid, p_avg_w: float):
    """Zero-stuffing, brickwall at the symbol rate and per-frame normalization
    of ``(B, N)`` symbols (array or tensor)."""
    if np.shape(s.value if isinstance(s, Tensor) else s)[-1] != grid.n_symbols:
        raise SignalError(f"expected {grid.n_symbols} symbols per frame")
    x = ops.upsample(s, grid.samples_per_symbol)
    x = ops.freq_filter(x, brickwall_mask(grid, grid.symbol_rate))
    return ops.normalize_power(x, p_avg_w)


def tx_signal(indices, params: TransceiverParams, grid: SamplingGrid, p_avg_w: float) -> ComplexBasebandSignal:
    return ComplexBasebandSignal(tx_forward(indices, params, grid, p_avg_w).value, grid)


# -- differentiable channel -------------------------------------------------------


def _noise_bw(cfg, grid: SamplingGrid) -> float:
    return cfg.noise_bandwidth if cfg.noise_bandwidth is not None else grid.sample_rate


def _ssfm(a, grid: SamplingGrid, fiber, length_km, cfg, rng):
    """Tape version of :func:`zspatial.fiber.split_step` with the same random draws."""
    n = step_count(length_km, cfg.step_km)
    if n == 0:
        return a
    dz = cfg.step_km
    var = 0.0
    if cfg.noise_enabled and fiber.nsp_raman > 0 and fiber.alpha_db_per_km > 0:
        var = ase_sigma2(fiber, dz, _noise_bw(cfg, grid))
    h_half = linear_operator(grid.omega_rad_per_ps(), fiber.beta2, dz / 2)
    h_full = h_half * h_half
    a = ops.freq_filter(a, h_half)
    for k in range(n):
        a = ops.nl_phase(a, fiber.gamma * dz)
        a = ops.freq_filter(a, h_full if k < n - 1 else h_half)
        if var > 0:
            a = ops.add_constant(a, white_noise(rng, a.shape, var))
    if not np.all(np.isfinite(a.value)):
        raise PropagationDiverged(f"field became non-finite within {length_km:g} km")
    return a


def _adc(a, topo: LinkTopology, grid: SamplingGrid, rng):
    var = adc_noise_variance(topo, grid.sample_rate)
    if var > 0:
        a = ops.add_constant(a, white_noise(rng, a.shape, var))
    return ops.freq_filter(a, brickwall_mask(grid, topo.adc_bandwidth))


def link_forward(x, grid: SamplingGrid, topo: LinkTopology, rng):
    """Differentiable counterpart of :func:`zspatial.link.simulate_link`.

    Consumes ``rng`` in the same order, so for equal seeds both produce the same
    observations up to rounding.
    """
    z1 = _ssfm(x, grid, topo.fiber, topo.l1_km, topo.ssfm, rng)
    half = ops.scale(z1, 1.0 / math.sqrt(2.0))
    y1 = _adc(half, topo, grid, rng)
    if topo.mode == "baseline":
        return y1, y1
    a = half
    if topo.mode == "SDA":
        edfa = topo.edfa if topo.ssfm.noise_enabled else EdfaSpec(topo.edfa.gain_db, 0.0)
        a = ops.scale(a, math.sqrt(edfa.gain))
        var = edfa_sigma2(edfa, topo.fiber.f0, _noise_bw(topo.ssfm, grid))
        if var > 0:
            a = ops.add_constant(a, white_noise(rng, a.shape, var))
    z2 = _ssfm(a, grid, topo.fiber, topo.l2_km, topo.ssfm, rng)
    return y1, _adc(z2, topo, grid, rng)


# -- receiver ----------------------------------------------------------------------


def path_gains(topo: LinkTopology) -> tuple[float, float]:
    """Nominal amplitude gain from launch to each observation."""
    g1 = 1.0 / math.sqrt(2.0)
    if topo.mode == "SDA":
        return g1, g1 * math.sqrt(topo.edfa.gain)
    return g1, g1


def _receive_path(y, grid: SamplingGrid, beta2: float, length_km: float, gain: float):
    h = linear_operator(grid.omega_rad_per_ps(), beta2, -length_km) * brickwall_mask(grid, grid.symbol_rate)
    r = ops.freq_filter(y, h)
    r = ops.downsample(r, grid.samples_per_symbol)
    return ops.scale(r, 1.0 / gain)


def rx_symbols(y1, y2, params: TransceiverParams, grid: SamplingGrid, topo: LinkTopology, p_avg_w: float):
    """Per-path CDC, brickwall at the symbol rate, downsampling, descaling and
    the combining network.  Returns ``(B, N)`` complex symbol estimates."""
    g1, g2 = path_gains(topo)
    amp = math.sqrt(p_avg_w)
    r1 = _receive_path(_batch(y1), grid, topo.fiber.beta2, topo.l1_km, amp * g1)
    if params.combine is None:
        return r1
    r2 = _receive_path(_batch(y2), grid, topo.fiber.beta2, topo.second_path_km, amp * g2)
    return ops.add(r1, _apply_windowed(params.combine, [r1, r2], params.window_k))


def demapper_logits(s_hat, params: TransceiverParams):
    b, n = s_hat.shape
    feats = ops.complex_to_real(ops.reshape(s_hat, (b * n, 1)))
    return mlp_apply(params.train_demapper, feats)


def rx_forward(y: LinkOutput, params: TransceiverParams, topo: LinkTopology, p_avg_w: float):
    """Eager receiver on a :class:`LinkOutput`: ``(symbol estimates, logits)``."""
    grid = y.y1.grid
    s_hat = rx_symbols(Tensor(y.y1.samples), Tensor(y.y2.samples), params, grid, topo, p_avg_w)
    return s_hat.value, demapper_logits(s_hat, params).value


def _batch(y):
    y = y if isinstance(y, Tensor) else Tensor(y)
    return y if y.value.ndim == 2 else ops.reshape(y, (1, -1))


# -- training ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrainResult:
    params: TransceiverParams
    losses: np.ndarray
    wall_s: float


def _channel_topology(cfg: TrainConfig) -> LinkTopology:
    if cfg.noise_in_training:
        return cfg.topology
    return replace(cfg.topology, ssfm=replace(cfg.topology.ssfm, noise_enabled=False))


def train(cfg: TrainConfig, params0: TransceiverParams, channel=None, log_every: int = 0) -> TrainResult:
    """Adam on the mean cross-entropy through TX, channel and RX.

    Each step draws fresh indices and noise from a generator seeded by
    ``(cfg.seed, step)``, so runs are reproducible and batches never repeat.
    ``channel(x, grid, rng) -> (y1, y2)`` replaces the fiber link when given.
    """
    grid = cfg.grid
    topo = _channel_topology(cfg)
    p = cfg.power_w
    M = params0.constellation.M
    arrays = params0.arrays()
    state = AdamState.zeros_like(arrays, lr=cfg.lr)
    losses = np.zeros(cfg.steps)
    t0 = time.perf_counter()
    params = params0
    for step in range(cfg.steps):
        rng = np.random.default_rng([cfg.seed, _TRAIN_TAG, step])
        idx = rng.integers(0, M, size=(cfg.batch, cfg.n_symbols))
        live = params.trainable()
        with Tape() as tape:
            x = tx_forward(idx, live, grid, p)
            if channel is None:
                y1, y2 = link_forward(x, grid, topo, rng)
            else:
                y1, y2 = channel(x, grid, rng)
            s_hat = rx_symbols(y1, y2, live, grid, topo, p)
            loss = ops.cross_entropy(demapper_logits(s_hat, live), idx)
        value = float(loss.value)
        if not math.isfinite(value):
            raise TrainingDiverged(
                f"loss became {value} at step {step} (previous {losses[step - 1] if step else 'n/a'}); "
                f"max |x| = {float(np.max(np.abs(x.value))):.3g}"
            )
        tape.backward(loss)
        grads = [leaf.grad for leaf in _leaves(live)]
        del tape
        new_arrays, state = adam_step(params.arrays(), grads, state, lr=cfg.learning_rate(step))
        params = params.with_arrays(new_arrays)
        losses[step] = value
        if log_every and (step % log_every == 0 or step == cfg.steps - 1):
            log.info("step %d loss %.4f", step, value)
    return TrainResult(params, losses, time.perf_counter() - t0)


def _leaves(p: TransceiverParams):
    out = []
    for net in (p.predistort, p.combine, p.train_demapper):
        if net is not None:
            out.extend(net.leaves())
    return out


# -- evaluation --------------------------------------------------------------------


def collect_symbols(params, cfg: TrainConfig, n_frames: int, seed: int | None = None):
    """Run the frozen transceiver on fresh frames; returns per-frame (labels, estimates).

    Uses the array-level link simulator, with per-frame generators disjoint from
    the training stream.
    """
    grid = cfg.grid
    seed = cfg.seed if seed is None else seed
    M = params.constellation.M
    labels, est = [], []
    for f in range(n_frames):
        rng = np.random.default_rng([seed, _EVAL_TAG, f])
        idx = rng.integers(0, M, size=cfg.n_symbols)
        x = tx_signal(idx, params, grid, cfg.power_w)
        y = simulate_link(x, cfg.topology, rng)
        s_hat = rx_symbols(Tensor(y.y1.samples), Tensor(y.y2.samples), params, grid, cfg.topology, cfg.power_w)
        labels.append(idx)
        est.append(s_hat.value.ravel())
    return labels, est


def evaluate(params: TransceiverParams, cfg: TrainConfig, n_frames: int = 64, seed: int | None = None) -> MetricsResult:
    """GMM-based rate estimate of the frozen transceiver (the training demapper is unused)."""
    labels, est = collect_symbols(params, cfg, n_frames, seed)
    # zero roll-off: the occupied band equals the symbol rate
    return evaluate_pairs(labels, est, params.constellation.M, cfg.symbol_rate, cfg.symbol_rate,
                          seed=cfg.seed if seed is None else seed)
