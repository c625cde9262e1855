"""Sampled complex-envelope signals and the symbol-rate <-> sample-rate plumbing.

Every stage in the package (fiber, equalizers, transceiver) consumes and
produces :class:`ComplexBasebandSignal`.  Frames are circularly periodic, so all
filtering happens in the DFT domain with numpy's convention (unscaled forward,
``1/n`` on the inverse).

Samples carry units of sqrt(W); powers are in W unless a name says dBm.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# inclusive band edges are compared with this relative slack
_EDGE_RTOL = 1e-9


class SignalError(ValueError):
    """Raised when an operation receives input outside its contract."""


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform sampling grid with an integer number of samples per symbol."""

    symbol_rate: float
    samples_per_symbol: int
    n_samples: int

    def __post_init__(self):
        if self.symbol_rate <= 0:
            raise SignalError("symbol_rate must be positive")
        if int(self.samples_per_symbol) != self.samples_per_symbol or self.samples_per_symbol < 1:
            raise SignalError("samples_per_symbol must be a positive integer")
        if self.n_samples < 1 or self.n_samples % self.samples_per_symbol:
            raise SignalError(
                f"n_samples={self.n_samples} is not a multiple of "
                f"samples_per_symbol={self.samples_per_symbol}"
            )

    @classmethod
    def from_symbols(cls, symbol_rate: float, samples_per_symbol: int, n_symbols: int) -> "SamplingGrid":
        return cls(float(symbol_rate), int(samples_per_symbol), int(n_symbols) * int(samples_per_symbol))

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol

    @property
    def n_symbols(self) -> int:
        return self.n_samples // self.samples_per_symbol

    @property
    def dt_ps(self) -> float:
        return 1e12 / self.sample_rate

    def time_ps(self) -> np.ndarray:
        """Sample instants in ps, starting at 0."""
        return np.arange(self.n_samples) * self.dt_ps

    def freqs_hz(self) -> np.ndarray:
        """DFT bin frequencies in numpy ``fftfreq`` order."""
        return np.fft.fftfreq(self.n_samples, d=1.0 / self.sample_rate)

    def omega_rad_per_ps(self) -> np.ndarray:
        """Angular baseband frequency of each bin, in rad/ps (pairs with beta2 in ps^2/km)."""
        return 2.0 * np.pi * self.freqs_hz() * 1e-12

    def with_n_samples(self, n_samples: int) -> "SamplingGrid":
        return SamplingGrid(self.symbol_rate, self.samples_per_symbol, int(n_samples))


@dataclass(frozen=True)
class ComplexBasebandSignal:
    """Complex envelope ``q(t, z)`` on a :class:`SamplingGrid`.

    ``samples`` may carry leading batch axes; the last axis is time.  The array
    is stored read-only.
    """

    samples: np.ndarray
    grid: SamplingGrid
    z_km: float = 0.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128, copy=True)
        if arr.ndim == 0 or arr.shape[-1] != self.grid.n_samples:
            raise SignalError(
                f"expected {self.grid.n_samples} samples on the last axis, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise SignalError("signal contains NaN or Inf samples")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def replace(self, samples=None, grid=None, z_km=None) -> "ComplexBasebandSignal":
        return ComplexBasebandSignal(
            self.samples if samples is None else samples,
            self.grid if grid is None else grid,
            self.z_km if z_km is None else z_km,
        )

    @property
    def energy(self) -> float:
        """Sum of |q|^2 over all samples (and batch entries)."""
        return float(np.sum(np.abs(self.samples) ** 2))

    def spectrum(self) -> np.ndarray:
        return np.fft.fft(self.samples, axis=-1)


@dataclass(frozen=True)
class Constellation:
    """Fixed set of ``M`` distinct complex points with unit mean power."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128).ravel().copy()
        if pts.size < 2:
            raise SignalError("a constellation needs at least two points")
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-9:
            raise SignalError("constellation points must have unit mean power")
        diffs = np.abs(pts[:, None] - pts[None, :]) + np.eye(pts.size)
        if np.min(diffs) < 1e-12:
            raise SignalError("constellation points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def M(self) -> int:
        return int(self.points.size)

    @property
    def bits(self) -> float:
        return math.log2(self.M)


def ring_constellation(n_rings: int, n_phases: int) -> Constellation:
    """Multi-ring constellation with equal ring-power spacing and unit mean power.

    Ring ``i`` has radius proportional to ``sqrt((i + 0.5) / n_rings)``; odd rings
    are rotated by half a phase step so neighbouring rings interleave.
    """
    radii = np.sqrt((np.arange(n_rings) + 0.5) / n_rings)
    pts = []
    for i, r in enumerate(radii):
        offset = np.pi / n_phases if i % 2 else 0.0
        phases = 2.0 * np.pi * np.arange(n_phases) / n_phases + offset
        pts.append(r * np.exp(1j * phases))
    pts = np.concatenate(pts)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(pts)


def default_constellation(M: int) -> Constellation:
    """Square ring layout: ``sqrt(M)`` rings by ``sqrt(M)`` phases (M=16 -> 4x4, M=256 -> 16x16)."""
    side = int(round(math.sqrt(M)))
    if side * side != M:
        raise SignalError(f"default ring layout needs a square M, got {M}")
    return ring_constellation(side, side)


@dataclass(frozen=True)
class SymbolFrame:
    indices: np.ndarray
    symbols: np.ndarray


def map_symbols(indices, constellation: Constellation) -> SymbolFrame:
    idx = np.asarray(indices)
    if idx.size and (not np.issubdtype(idx.dtype, np.integer)):
        raise SignalError("symbol indices must be integers")
    idx = idx.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= constellation.M):
        raise SignalError(f"symbol index outside [0, {constellation.M})")
    return SymbolFrame(idx, constellation.points[idx])


def upsample(symbols, grid: SamplingGrid, z_km: float = 0.0) -> ComplexBasebandSignal:
    """Zero-stuff symbols onto ``grid``: symbol ``k`` lands on sample ``k * sps``."""
    sym = symbols.symbols if isinstance(symbols, SymbolFrame) else np.asarray(symbols, dtype=np.complex128)
    sps = grid.samples_per_symbol
    if sym.shape[-1] * sps != grid.n_samples:
        raise SignalError(f"{sym.shape[-1]} symbols do not fill a grid of {grid.n_samples} samples")
    out = np.zeros(sym.shape[:-1] + (grid.n_samples,), dtype=np.complex128)
    out[..., ::sps] = sym
    return ComplexBasebandSignal(out, grid, z_km)


def brickwall_mask(grid: SamplingGrid, bandwidth_hz: float) -> np.ndarray:
    """0/1 mask over DFT bins keeping ``|f| <= B/2`` (inclusive at the edge)."""
    if bandwidth_hz <= 0:
        raise SignalError("filter bandwidth must be positive")
    if bandwidth_hz > grid.sample_rate * (1 + _EDGE_RTOL):
        raise SignalError(
            f"filter bandwidth {bandwidth_hz:g} Hz exceeds the sample rate {grid.sample_rate:g} Hz"
        )
    f = np.abs(grid.freqs_hz())
    return (f <= 0.5 * bandwidth_hz * (1 + _EDGE_RTOL)).astype(np.float64)


def brickwall_filter(x: ComplexBasebandSignal, bandwidth_hz: float) -> ComplexBasebandSignal:
    """Ideal lowpass with total passband width ``bandwidth_hz``.

    On an even-length frame whose Nyquist-adjacent bins sit exactly on the edge,
    both ``+B/2`` and ``-B/2`` are kept.  Frames with an odd symbol count avoid
    that case entirely, which is why the transceiver defaults to odd frames.
    """
    mask = brickwall_mask(x.grid, bandwidth_hz)
    y = np.fft.ifft(np.fft.fft(x.samples, axis=-1) * mask, axis=-1)
    return x.replace(samples=y)


def downsample(x: ComplexBasebandSignal, phase: int = 0) -> np.ndarray:
    """Pick one sample per symbol slot starting at ``phase``."""
    sps = x.grid.samples_per_symbol
    if not 0 <= phase < sps:
        raise SignalError(f"phase {phase} outside [0, {sps})")
    return x.samples[..., phase::sps].copy()


def normalize_power(x: ComplexBasebandSignal, p_avg_w: float) -> ComplexBasebandSignal:
    """Scale ``x`` so its mean sample power equals ``p_avg_w`` exactly.

    Batched signals are normalized per frame (last axis).
    """
    norm = np.linalg.norm(x.samples, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise SignalError("cannot normalize an all-zero signal")
    n = x.grid.n_samples
    return x.replace(samples=x.samples * (np.sqrt(p_avg_w * n) / norm))


def measure_power(x: ComplexBasebandSignal) -> tuple[float, float]:
    """Mean sample power as ``(watts, dBm)``; an all-zero signal reports ``-inf`` dBm."""
    p = float(np.mean(np.abs(x.samples) ** 2))
    return p, (10.0 * math.log10(p / 1e-3) if p > 0 else -math.inf)


def dbm_to_w(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def w_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w / 1e-3) if p_w > 0 else -math.inf


# -- serialization -----------------------------------------------------------

_HEADER = struct.Struct("<dQd")


def write_signal(path, x: ComplexBasebandSignal) -> None:
    """Binary container: ``<f8 sample_rate, <u8 n_samples, <f8 z_km`` then interleaved ``<f8`` re/im.

    Only single-frame signals are serializable.
    """
    if x.samples.ndim != 1:
        raise SignalError("only 1-D signals can be serialized")
    body = np.empty(2 * x.grid.n_samples, dtype="<f8")
    body[0::2] = x.samples.real
    body[1::2] = x.samples.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(x.grid.sample_rate, x.grid.n_samples, x.z_km))
        fh.write(body.tobytes())


def read_signal(path, samples_per_symbol: int = 1) -> ComplexBasebandSignal:
    """Inverse of :func:`write_signal`.  The symbol rate is not stored, so it is
    reconstructed as ``sample_rate / samples_per_symbol``."""
    raw = Path(path).read_bytes()
    fs, n, z = _HEADER.unpack_from(raw, 0)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n:
        raise SignalError(f"truncated signal file: expected {2 * n} floats, found {body.size}")
    grid = SamplingGrid(fs / samples_per_symbol, samples_per_symbol, int(n))
    return ComplexBasebandSignal(body[0::2] + 1j * body[1::2], grid, z)


def write_signal_csv(path, x: ComplexBasebandSignal) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im"])
        for i, v in enumerate(np.ravel(x.samples)):
            w.writerow([i, repr(float(v.real)), repr(float(v.imag))])


def decimate(x: ComplexBasebandSignal, factor: int) -> ComplexBasebandSignal:
    """Brickwall to the new sample rate, then keep every ``factor``-th sample."""
    sps = x.grid.samples_per_symbol
    if factor < 1 or sps % factor:
        raise SignalError(f"decimation factor {factor} must divide samples_per_symbol={sps}")
    if factor == 1:
        return x
    y = brickwall_filter(x, x.grid.sample_rate / factor)
    grid = SamplingGrid(x.grid.symbol_rate, sps // factor, x.grid.n_samples // factor)
    return ComplexBasebandSignal(y.samples[..., ::factor], grid, x.z_km)


def interpolate(x: ComplexBasebandSignal, factor: int) -> ComplexBasebandSignal:
    """Ideal (spectral zero-padding) interpolation by an integer factor.

    Exact for periodic frames with no energy in the Nyquist bin.  Sample values
    are preserved on the original instants.
    """
    if factor < 1:
        raise SignalError("interpolation factor must be >= 1")
    if factor == 1:
        return x
    n = x.grid.n_samples
    spec = np.fft.fft(x.samples, axis=-1)
    k = np.fft.fftfreq(n, d=1.0 / n)
    new_n = n * factor
    big = np.zeros(x.samples.shape[:-1] + (new_n,), dtype=np.complex128)
    idx = np.where(k >= 0, k, new_n + k).astype(int)
    big[..., idx] = spec
    grid = SamplingGrid(x.grid.symbol_rate, x.grid.samples_per_symbol * factor, new_n)
    return ComplexBasebandSignal(np.fft.ifft(big, axis=-1) * factor, grid, x.z_km)
