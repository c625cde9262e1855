"""Two-tap z-diversity link: fiber, 3 dB coupler, optional EDFA, second fiber,
and two brickwall-limited observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fiber import EdfaSpec, FiberSpec, SsfmConfig, coupler_split, edfa_amplify, ssfm_propagate, white_noise
from .signal import ComplexBasebandSignal, SignalError, brickwall_filter

MODES = ("baseline", "SD", "SDA")


@dataclass(frozen=True)
class LinkTopology:
    mode: str = "SD"
    l1_km: float = 1000.0
    l2_km: float = 0.0
    adc_bandwidth: float = 20e9
    fiber: FiberSpec = field(default_factory=FiberSpec)
    edfa: EdfaSpec = field(default_factory=EdfaSpec)
    ssfm: SsfmConfig = field(default_factory=SsfmConfig)
    adc_noise_w: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise SignalError(f"unknown link mode {self.mode!r}; expected one of {MODES}")
        if self.l1_km <= 0:
            raise SignalError("l1 must be positive")
        if self.l2_km < 0:
            raise SignalError("l2 must be non-negative")
        if self.adc_noise_w is not None and self.adc_noise_w < 0:
            raise SignalError("ADC noise power must be non-negative")

    @property
    def second_path_km(self) -> float:
        """Propagated distance seen by y2 (l1 for the duplicated baseline)."""
        return self.l1_km if self.mode == "baseline" else self.l1_km + self.l2_km

    def noise_bandwidth(self, x: ComplexBasebandSignal) -> float:
        bw = self.ssfm.noise_bandwidth
        return x.grid.sample_rate if bw is None else bw


@dataclass(frozen=True)
class LinkOutput:
    y1: ComplexBasebandSignal
    y2: ComplexBasebandSignal


def adc_noise_variance(topo: LinkTopology, sample_rate: float) -> float:
    """Per-sample variance of white receiver noise whose in-band power is ``adc_noise_w``."""
    if not topo.adc_noise_w or not topo.ssfm.noise_enabled:
        return 0.0
    return topo.adc_noise_w * sample_rate / topo.adc_bandwidth


def adc_observe(x: ComplexBasebandSignal, topo: LinkTopology, rng) -> ComplexBasebandSignal:
    """Receiver front end: optional white noise, then the brickwall of width ``adc_bandwidth``."""
    var = adc_noise_variance(topo, x.grid.sample_rate)
    if var > 0:
        if rng is None:
            raise SignalError("ADC noise needs a seeded random generator")
        x = x.replace(samples=x.samples + white_noise(rng, x.samples.shape, var))
    return brickwall_filter(x, topo.adc_bandwidth)


def simulate_link(x: ComplexBasebandSignal, topo: LinkTopology, rng: np.random.Generator | None) -> LinkOutput:
    """Propagate ``x`` through the topology.

    The baseline duplicates ``y1`` verbatim, so it carries no second noise draw.
    ``topo.ssfm.noise_enabled`` also gates the EDFA and ADC noise.  Random draws
    happen in a fixed order: fiber 1, ADC 1, EDFA, fiber 2, ADC 2.
    """
    z1 = ssfm_propagate(x, topo.fiber, topo.l1_km, topo.ssfm, rng)
    tap, through = coupler_split(z1)
    y1 = adc_observe(tap, topo, rng)
    if topo.mode == "baseline":
        return LinkOutput(y1, y1)
    if topo.mode == "SDA":
        edfa = topo.edfa if topo.ssfm.noise_enabled else EdfaSpec(topo.edfa.gain_db, 0.0)
        through = edfa_amplify(through, edfa, topo.noise_bandwidth(x), rng, topo.fiber.f0)
    z2 = ssfm_propagate(through, topo.fiber, topo.l2_km, topo.ssfm, rng)
    return LinkOutput(y1, adc_observe(z2, topo, rng))
