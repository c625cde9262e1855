"""Classical receivers: chromatic dispersion compensation and (split) digital
backpropagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fiber import FiberSpec, linear_operator, split_step, step_count
from .signal import ComplexBasebandSignal, SignalError, decimate, interpolate


@dataclass(frozen=True)
class DbpConfig:
    """``oversampling_hz=None`` runs the backpropagation at the full simulation rate."""

    n_steps_per_km: float = 1.0
    oversampling_hz: float | None = None
    split_fraction: float = 0.5

    def __post_init__(self):
        if self.n_steps_per_km <= 0:
            raise SignalError("n_steps_per_km must be positive")
        if not 0.0 <= self.split_fraction <= 1.0:
            raise SignalError("split_fraction must lie in [0, 1]")


def cdc(x: ComplexBasebandSignal, beta2: float, length_km: float) -> ComplexBasebandSignal:
    """All-pass inverse of ``length_km`` of dispersion."""
    if length_km == 0:
        return x
    h = linear_operator(x.grid.omega_rad_per_ps(), beta2, -length_km)
    return x.replace(samples=np.fft.ifft(np.fft.fft(x.samples, axis=-1) * h, axis=-1))


def _rate_factor(x: ComplexBasebandSignal, oversampling_hz: float | None) -> int:
    fs = x.grid.sample_rate
    if oversampling_hz is None or oversampling_hz >= fs * (1 - 1e-12):
        if oversampling_hz is not None and oversampling_hz > fs * (1 + 1e-12):
            raise SignalError("DBP bandwidth exceeds the simulation rate")
        return 1
    ratio = fs / oversampling_hz
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 * ratio:
        raise SignalError(f"f_sim / DBP bandwidth = {ratio:g} is not an integer")
    return factor


def _backpropagate(x: ComplexBasebandSignal, fiber: FiberSpec, length_km: float, n_steps_per_km: float):
    step_km = 1.0 / n_steps_per_km
    n = step_count(length_km, step_km)
    out = split_step(x.samples, x.grid.omega_rad_per_ps(), -fiber.beta2, -fiber.gamma, n, step_km)
    return x.replace(samples=out)


def dbp(x: ComplexBasebandSignal, fiber: FiberSpec, length_km: float, cfg: DbpConfig) -> ComplexBasebandSignal:
    """Noiseless split-step with negated ``beta2`` and ``gamma``.

    With a reduced ``cfg.oversampling_hz`` the input is brickwall-limited and
    decimated to that rate first, and the result stays at the reduced rate.
    """
    factor = _rate_factor(x, cfg.oversampling_hz)
    if factor > 1:
        x = decimate(x, factor)
    return _backpropagate(x, fiber, length_km, cfg.n_steps_per_km)


def split_dbp_predistort(
    x: ComplexBasebandSignal, fiber: FiberSpec, length_km: float, cfg: DbpConfig
) -> ComplexBasebandSignal:
    """Transmit-side share of split DBP: backpropagate by ``split_fraction * length_km``.

    A reduced-rate predistortion is interpolated back onto the input grid so it
    can be launched.
    """
    pre_km = cfg.split_fraction * length_km
    if pre_km == 0:
        return x
    factor = _rate_factor(x, cfg.oversampling_hz)
    y = dbp(x, fiber, pre_km, cfg)
    return interpolate(y, factor) if factor > 1 else y


def receiver_dbp_length(length_km: float, cfg: DbpConfig) -> float:
    """Length left for the receiver once the transmitter took its split share."""
    return (1.0 - cfg.split_fraction) * length_km
