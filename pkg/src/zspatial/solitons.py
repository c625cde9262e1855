"""Soliton waveforms, their breathing period, and a Zakharov-Shabat eigenvalue
oracle used to check them.

Normalized units: ``tau = t / T0`` and ``u = q / sqrt(P_norm)`` with
``P_norm = |beta2| / (gamma T0^2)``.  In these units the propagation equation
is (the conjugate of) the focusing NLSE ``j u_xi + u_tautau / 2 + |u|^2 u = 0``
with ``xi = z / L_D``, ``L_D = T0^2 / |beta2|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fiber import FiberSpec, SsfmConfig, split_step, step_count
from .signal import ComplexBasebandSignal, SamplingGrid, SignalError, interpolate


@dataclass(frozen=True)
class SolitonSpec:
    t0_ps: float
    etas: tuple[float, ...]
    amplitude_order: float | None = None

    def __post_init__(self):
        if self.t0_ps <= 0:
            raise SignalError("T0 must be positive")
        etas = tuple(float(e) for e in self.etas)
        if any(e <= 0 for e in etas) or any(b <= a for a, b in zip(etas, etas[1:])):
            raise SignalError("etas must be positive and strictly increasing")
        object.__setattr__(self, "etas", etas)


def power_scale(fiber: FiberSpec, t0_ps: float) -> float:
    """Peak power of the fundamental soliton, ``|beta2| / (gamma T0^2)`` in W."""
    if fiber.gamma == 0:
        raise SignalError("a soliton needs a nonzero nonlinearity")
    return abs(fiber.beta2) / (fiber.gamma * t0_ps**2)


def dispersion_length(fiber: FiberSpec, t0_ps: float) -> float:
    return t0_ps**2 / abs(fiber.beta2)


def _centered_tau(grid: SamplingGrid, t0_ps: float, center_ps: float) -> np.ndarray:
    return (grid.time_ps() - center_ps) / t0_ps


def default_center(grid: SamplingGrid) -> float:
    return 0.5 * grid.n_samples * grid.dt_ps


def sech_soliton(A, t0_ps, fiber: FiberSpec, grid: SamplingGrid, center_ps=None) -> ComplexBasebandSignal:
    """``A sqrt(P_norm) sech((t - center) / T0)``; integer ``A`` gives an order-``A`` soliton."""
    if A <= 0:
        raise SignalError("soliton amplitude must be positive")
    p = power_scale(fiber, t0_ps)
    c = default_center(grid) if center_ps is None else center_ps
    tau = _centered_tau(grid, t0_ps, c)
    return ComplexBasebandSignal(A * math.sqrt(p) / np.cosh(tau), grid)


def default_norming(n: int) -> list[complex]:
    # alternating signs put the bound state at its widest point at z = 0;
    # for etas (0.5, 1.5) this is exactly 2 sech
    return [(-1.0) ** (k + 1) for k in range(n)]


def multisoliton_profile(etas, tau: np.ndarray, norming=None) -> np.ndarray:
    """Normalized multi-soliton built by successive Darboux transforms of the zero potential.

    Eigenvalues are ``j * eta``; ``norming[k]`` sets the relative weight of the
    growing and decaying parts of the k-th auxiliary solution.
    """
    lams = [1j * float(e) for e in etas]
    if len(set(lams)) != len(lams):
        raise SignalError("eigenvalues must be distinct")
    norming = default_norming(len(lams)) if norming is None else list(norming)
    # each auxiliary pair is pre-divided by exp(|Im lam| |tau|) to stay finite on wide windows
    phis = [
        np.stack([
            np.exp(-1j * lam * tau - abs(lam.imag) * np.abs(tau)),
            c * np.exp(1j * lam * tau - abs(lam.imag) * np.abs(tau)),
        ])
        for lam, c in zip(lams, norming)
    ]
    q = np.zeros(tau.shape, dtype=np.complex128)
    for j, lam in enumerate(lams):
        p = phis[j]
        nrm = np.abs(p[0]) ** 2 + np.abs(p[1]) ** 2
        p11 = np.abs(p[0]) ** 2 / nrm
        p12 = p[0] * np.conj(p[1]) / nrm
        p22 = np.abs(p[1]) ** 2 / nrm
        d = np.conj(lam) - lam
        q = q + 2j * d * p12
        for k in range(j + 1, len(lams)):
            mu, f = lams[k], phis[k]
            g0 = (mu - np.conj(lam)) * f[0] + d * (p11 * f[0] + p12 * f[1])
            g1 = (mu - np.conj(lam)) * f[1] + d * (np.conj(p12) * f[0] + p22 * f[1])
            # rescale to keep the auxiliary solutions O(1); eigenvector direction is all that matters
            s = np.maximum(np.abs(g0), np.abs(g1))
            phis[k] = np.stack([g0 / s, g1 / s])
    return q


def two_soliton_from_eigenvalues(spec: SolitonSpec, fiber: FiberSpec, grid: SamplingGrid,
                                 center_ps=None, norming=None) -> ComplexBasebandSignal:
    if len(spec.etas) != 2:
        raise SignalError("a two-soliton needs exactly two eigenvalues")
    c = default_center(grid) if center_ps is None else center_ps
    tau = _centered_tau(grid, spec.t0_ps, c)
    u = multisoliton_profile(spec.etas, tau, norming)
    return ComplexBasebandSignal(u * math.sqrt(power_scale(fiber, spec.t0_ps)), grid)


def soliton_period(spec: SolitonSpec, fiber: FiberSpec) -> float:
    """Breathing period ``pi L_D / (eta2^2 - eta1^2)`` in km."""
    if len(spec.etas) != 2:
        raise SignalError("the breathing period is defined for two eigenvalues")
    e1, e2 = spec.etas
    if e1 == e2:
        raise SignalError("degenerate eigenvalues have no breathing period")
    return math.pi * dispersion_length(fiber, spec.t0_ps) / (e2**2 - e1**2)


def soliton_energy(spec: SolitonSpec, fiber: FiberSpec) -> float:
    """Trace-formula energy ``4 sum(eta) P_norm T0`` in pJ (W * ps)."""
    return 4.0 * sum(spec.etas) * power_scale(fiber, spec.t0_ps) * spec.t0_ps


# -- Zakharov-Shabat oracle ---------------------------------------------------


def _log_a(u: np.ndarray, h: float, tau0: float, lam: np.ndarray) -> np.ndarray:
    """log of the scattering coefficient a(lambda) for a piecewise-constant potential.

    ``u[k]`` is the potential on the cell of width ``h`` centered at ``tau0 + k h``.
    Returns complex logs; the imaginary part is only defined modulo 2 pi.
    """
    lam = np.asarray(lam, dtype=np.complex128)
    t_start = tau0 - h / 2
    t_end = tau0 + (u.size - 0.5) * h
    v1 = np.ones_like(lam)
    v2 = np.zeros_like(lam)
    logscale = -1j * lam * t_start
    lam2 = lam * lam
    for uk in u:
        kappa = np.sqrt(-lam2 - (uk.real**2 + uk.imag**2))
        ch = np.cosh(kappa * h)
        sh = np.where(np.abs(kappa) > 1e-14, np.sinh(kappa * h) / np.where(kappa == 0, 1, kappa), h)
        n1 = ch * v1 + sh * (-1j * lam * v1 + uk * v2)
        n2 = ch * v2 + sh * (-np.conj(uk) * v1 + 1j * lam * v2)
        s = np.maximum(np.abs(n1), np.abs(n2))
        s = np.where(s > 0, s, 1.0)
        v1, v2 = n1 / s, n2 / s
        logscale = logscale + np.log(s)
    return np.log(v1 + 0j) + logscale + 1j * lam * t_end


def _contour(box, n_side):
    x0, x1, y0, y1 = box
    s = np.linspace(0, 1, n_side, endpoint=False)
    return np.concatenate([
        x0 + (x1 - x0) * s + 1j * y0,
        x1 + 1j * (y0 + (y1 - y0) * s),
        x1 - (x1 - x0) * s + 1j * y1,
        x0 + 1j * (y1 - (y1 - y0) * s),
    ])


def _contour_logs(u, h, tau0, box, n_side=256, max_refine=6):
    """Sample log a(lambda) around the box, refining until arg steps are small."""
    lam = _contour(box, n_side)
    la = _log_a(u, h, tau0, lam)
    for _ in range(max_refine):
        closed = np.append(la, la[0])
        step = np.angle(np.exp(1j * np.diff(closed.imag)))
        bad = np.flatnonzero(np.abs(step) > 0.5)
        if bad.size == 0:
            break
        lam_c = np.append(lam, lam[0])
        mids = 0.5 * (lam_c[bad] + lam_c[bad + 1])
        la_m = _log_a(u, h, tau0, mids)
        lam = np.insert(lam, bad + 1, mids)
        la = np.insert(la, bad + 1, la_m)
    closed_lam = np.append(lam, lam[0])
    closed_la = np.append(la, la[0])
    d_arg = np.angle(np.exp(1j * np.diff(closed_la.imag)))
    d_log = np.diff(closed_la.real) + 1j * d_arg
    return closed_lam, d_log


def _moments(closed_lam, d_log, p_max):
    mid = 0.5 * (closed_lam[1:] + closed_lam[:-1])
    return [np.sum(mid**p * d_log) / (2j * np.pi) for p in range(p_max + 1)]


def _newton(u, h, tau0, lam, iters=40, tol=1e-12):
    for _ in range(iters):
        d = 1e-6 * max(1.0, abs(lam))
        la, lp, lm = _log_a(u, h, tau0, np.array([lam, lam + d, lam - d]))
        # Newton on a(lambda) via its log-derivative
        dlog = (lp - lm) / (2 * d)
        step = 1.0 / dlog
        if not np.isfinite(step):
            break
        lam = lam - step
        if abs(step) < tol * max(1.0, abs(lam)):
            break
    return lam


def _roots_in_box(u, h, tau0, box, depth=0):
    lam_c, d_log = _contour_logs(u, h, tau0, box)
    count = int(round(np.sum(d_log).imag / (2 * np.pi)))
    if count <= 0:
        return []
    if count > 4 and depth < 8:
        x0, x1, y0, y1 = box
        if (x1 - x0) >= (y1 - y0):
            xm = 0.5 * (x0 + x1)
            halves = [(x0, xm, y0, y1), (xm, x1, y0, y1)]
        else:
            ym = 0.5 * (y0 + y1)
            halves = [(x0, x1, y0, ym), (x0, x1, ym, y1)]
        return [r for b in halves for r in _roots_in_box(u, h, tau0, b, depth + 1)]
    s = _moments(lam_c, d_log, count)
    # Newton identities: power sums -> monic polynomial coefficients
    e = [1.0 + 0j]
    for k in range(1, count + 1):
        acc = sum((-1) ** (i - 1) * e[k - i] * s[i] for i in range(1, k + 1))
        e.append(acc / k)
    coeffs = [(-1) ** k * e[k] for k in range(count + 1)]
    guesses = np.roots(coeffs) if count > 1 else np.array([s[1]])
    return [_newton(u, h, tau0, g) for g in guesses]


def zs_eigenvalues(x: ComplexBasebandSignal, t0_ps: float, fiber: FiberSpec,
                   oversample: int = 4, min_imag: float = 0.02) -> list[complex]:
    """Discrete Zakharov-Shabat eigenvalues of the normalized profile.

    The frame is spectrally interpolated by ``oversample``, treated as a
    piecewise-constant potential (O(h^2) accurate in the cell width ``h``), and
    searched with the argument principle in the box
    ``|Re| <= R, min_imag <= Im <= H``.  Eigenvalues closer to the real axis
    than ``min_imag`` are not reported.  Sorted by imaginary part.
    """
    if x.samples.ndim != 1:
        raise SignalError("eigenvalue search expects a single frame")
    if x.energy == 0:
        return []
    xi = interpolate(x, oversample) if oversample > 1 else x
    p = power_scale(fiber, t0_ps)
    # the conjugate form of the propagation equation maps to the standard
    # focusing problem through u -> conj(u)
    u = np.conj(xi.samples) / math.sqrt(p)
    h = xi.grid.dt_ps / t0_ps
    keep = np.flatnonzero(np.abs(u) > 1e-10 * np.max(np.abs(u)))
    u = u[keep[0]: keep[-1] + 1]
    tau0 = -0.5 * (u.size - 1) * h
    umax = float(np.max(np.abs(u)))
    top = umax + 1.0
    side = umax + 1.0 + math.pi / (2 * u.size * h)
    roots = _roots_in_box(u, h, tau0, (-side, side, min_imag, top))
    out = []
    for r in roots:
        if r.imag >= min_imag * 0.5 and all(abs(r - o) > 1e-6 for o in out):
            out.append(complex(r))
    return sorted(out, key=lambda z: z.imag)


# -- propagation helpers --------------------------------------------------------


def spectral_evolution(x: ComplexBasebandSignal, fiber: FiberSpec, length_km: float,
                       cfg: SsfmConfig, n_snapshots: int):
    """Noiseless propagation recording ``|Q(f, z)|^2`` at equally spaced distances.

    Returns ``(z_km, f_hz, rows)`` with frequencies in ascending order and each
    row normalized to a peak of 1.
    """
    if n_snapshots < 2:
        raise SignalError("need at least two snapshots")
    total_steps = step_count(length_km, cfg.step_km)
    if total_steps % (n_snapshots - 1):
        raise SignalError("snapshot spacing must be a whole number of steps")
    per = total_steps // (n_snapshots - 1)
    omega = x.grid.omega_rad_per_ps()
    q = np.asarray(x.samples)
    rows = []
    for i in range(n_snapshots):
        if i:
            q = split_step(q, omega, fiber.beta2, fiber.gamma, per, cfg.step_km)
        rows.append(np.abs(np.fft.fftshift(np.fft.fft(q))) ** 2)
    rows = np.array(rows)
    rows /= rows.max(axis=1, keepdims=True)
    z = np.arange(n_snapshots) * per * cfg.step_km
    return z, np.fft.fftshift(x.grid.freqs_hz()), rows


def inband_fraction(spectrum_rows: np.ndarray, f_hz: np.ndarray, bandwidth_hz: float) -> np.ndarray:
    """Share of each row's energy with ``|f| <= B/2``."""
    band = np.abs(f_hz) <= 0.5 * bandwidth_hz * (1 + 1e-9)
    return spectrum_rows[:, band].sum(axis=1) / spectrum_rows.sum(axis=1)


def pattern_period(z_km: np.ndarray, rows: np.ndarray) -> float:
    """Distance at which the row pattern first returns to the ``z = 0`` row.

    Uses the relative L2 distance to row 0, takes its deepest minimum after the
    curve has risen above half of its maximum, and refines with a parabola.
    """
    ref = rows[0]
    d = np.linalg.norm(rows - ref, axis=1) / np.linalg.norm(ref)
    risen = np.flatnonzero(d > 0.5 * d.max())
    if risen.size == 0:
        raise SignalError("pattern does not evolve; no period to measure")
    start = risen[0]
    later = np.flatnonzero(d[start:] < 0.5 * d.max())
    if later.size == 0:
        raise SignalError("pattern never returns within the propagated distance")
    lo = start + later[0]
    hi_rel = np.flatnonzero(d[lo:] > 0.5 * d.max())
    hi = lo + (hi_rel[0] if hi_rel.size else d.size - lo)
    i = lo + int(np.argmin(d[lo:hi]))
    return _parabolic_peak(z_km, -d, i)


def curve_period(z_km: np.ndarray, values: np.ndarray) -> float:
    """Mean spacing between successive maxima of a scalar periodic curve."""
    v = values - values.mean()
    peaks = [i for i in range(1, v.size - 1) if v[i] >= v[i - 1] and v[i] > v[i + 1] and v[i] > 0]
    if len(peaks) < 2:
        raise SignalError("fewer than two maxima; propagate further")
    zs = [_parabolic_peak(z_km, v, i) for i in peaks]
    return float(np.mean(np.diff(zs)))


def _parabolic_peak(z, v, i):
    if i <= 0 or i >= v.size - 1:
        return float(z[i])
    a, b, c = v[i - 1], v[i], v[i + 1]
    denom = a - 2 * b + c
    off = 0.0 if denom == 0 else 0.5 * (a - c) / denom
    return float(z[i] + off * (z[i + 1] - z[i]))


def measure_breathing_period(x: ComplexBasebandSignal, fiber: FiberSpec, z_max_km: float,
                             cfg: SsfmConfig, n_snapshots: int | None = None) -> float:
    """Propagate noiselessly and measure the spectral-pattern return distance."""
    if n_snapshots is None:
        n_snapshots = step_count(z_max_km, cfg.step_km) + 1
    z, _, rows = spectral_evolution(x, fiber, z_max_km, cfg, n_snapshots)
    return pattern_period(z, np.sqrt(rows))
