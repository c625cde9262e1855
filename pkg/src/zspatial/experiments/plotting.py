"""PNG figures next to the CSV outputs (Agg backend, no display needed)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_soliton_demo(out: Path, z, f, rows, frac, band):
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    keep = np.abs(f) <= 4 * band
    im = a.imshow(10 * np.log10(np.maximum(rows[:, keep], 1e-6)), aspect="auto", origin="lower",
                  extent=[f[keep][0] / 1e9, f[keep][-1] / 1e9, z[0], z[-1]], vmin=-40, vmax=0, cmap="viridis")
    for s in (-1, 1):
        a.axvline(s * band / 2e9, color="w", lw=0.8, ls="--")
    a.set_xlabel("frequency (GHz)")
    a.set_ylabel("z (km)")
    fig.colorbar(im, ax=a, label="normalized |Q|^2 (dB)")
    b.plot(z, frac)
    b.set_xlabel("z (km)")
    b.set_ylabel(f"energy share within ±{band / 2e9:g} GHz")
    b.grid(alpha=0.3)
    _save(fig, out / "soliton_demo.png")


def plot_l2_curves(path, rows, ylabel, zp=None):
    curves = defaultdict(list)
    for r in rows:
        curves[(r.mode, r.seed)].append((r.l2_km, r.mi_bits))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (mode, seed), pts in sorted(curves.items()):
        pts.sort()
        ax.plot(*zip(*pts), marker="o", ms=3, label=f"{mode} (seed {seed})")
    if zp is not None:
        ax.axvline(zp / 2, color="k", lw=0.8, ls=":", label="half period")
    ax.set_xlabel("second fiber length (km)")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_gain_curves(path, gains):
    curves = defaultdict(list)
    for mode, power, l2, seed, _eta, _base, delta, _n in gains:
        curves[(mode, power, seed)].append((l2, delta))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (mode, power, seed), pts in sorted(curves.items()):
        pts.sort()
        ax.plot(*zip(*pts), marker="o", label=f"{mode} {power:g} dBm (seed {seed})")
    ax.axhline(0, color="k", lw=0.8)
    ax.set_xlabel("second fiber length (km)")
    ax.set_ylabel("spectral efficiency gain (bit/s/Hz)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_power_curves(path, rows):
    curves = defaultdict(list)
    for r in rows:
        curves[(r.mode, r.seed)].append((r.power_dbm, r.eta))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (mode, seed), pts in sorted(curves.items()):
        pts.sort()
        ax.plot(*zip(*pts), marker="o", ms=4, label=f"{mode} (seed {seed})")
    ax.set_xlabel("launch power (dBm)")
    ax.set_ylabel("spectral efficiency (bit/s/Hz)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_loss(path, losses):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(losses)
    ax.set_xlabel("step")
    ax.set_ylabel("cross-entropy (nats)")
    ax.grid(alpha=0.3)
    _save(fig, path)
