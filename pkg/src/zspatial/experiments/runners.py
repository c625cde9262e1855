"""Scenario runners.  Each returns the rows it wrote and leaves CSV (and,
optionally, PNG) files in the output directory.

Runs inside a sweep are independent tasks executed on a process pool; results
are merged back in grid order, so the CSV never depends on scheduling.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import solitons as sol
from ..autodiff import load_checkpoint, save_checkpoint
from ..equalizers import DbpConfig, cdc, dbp, receiver_dbp_length, split_dbp_predistort
from ..fiber import SsfmConfig, coupler_split, edfa_amplify, ssfm_propagate
from ..link import adc_observe, simulate_link
from ..metrics import evaluate_pairs
from ..signal import ComplexBasebandSignal, SamplingGrid, brickwall_filter, default_constellation
from ..transceiver import (
    TransceiverParams, evaluate, init_params, pulse_shape, train,
)
from .config import ConfigError, ExperimentConfig
from .results import ResultRow, write_csv

log = logging.getLogger(__name__)

_EVAL_TAG = 2


class PairingError(RuntimeError):
    """Raised when a gain would be computed between runs that are not paired."""


def _pool_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _meta(cfg: ExperimentConfig, scenario: str, **extra) -> dict:
    return {"scenario": scenario, "preset": cfg.preset, "config_hash": cfg.hash(),
            "budget": f"{cfg.preset}-scale settings, not the full reference scale" if cfg.preset == "desk" else "reference scale",
            **extra}


def _wall(cfg: ExperimentConfig, seconds: float) -> float:
    return round(seconds, 3) if cfg.bool("run.record_wall_time") else math.nan


def _timing_sidecar(out: Path, name: str, rows, wall):
    (out / f"{name}.timing.json").write_text(json.dumps(
        [{"mode": r.mode, "power_dbm": r.power_dbm, "l2_km": r.l2_km, "seed": r.seed, "wall_s": w}
         for r, w in zip(rows, wall)], indent=1))


def _maybe_plot(cfg, fn, *args):
    if not cfg.bool("run.plots"):
        return
    from . import plotting

    getattr(plotting, fn)(*args)


# -- soliton demo -------------------------------------------------------------------


def soliton_input(cfg: ExperimentConfig) -> tuple[ComplexBasebandSignal, sol.SolitonSpec]:
    n = cfg.int("soliton.n_samples")
    grid = SamplingGrid(cfg.float("soliton.sample_rate_hz"), 1, n)
    spec = sol.SolitonSpec(cfg.float("soliton.t0_ps"), tuple(cfg.floats("soliton.etas")))
    fiber = cfg.fiber()
    if len(spec.etas) == 1:
        x = sol.sech_soliton(2 * spec.etas[0], spec.t0_ps, fiber, grid)
    else:
        x = sol.two_soliton_from_eigenvalues(spec, fiber, grid)
    return x, spec


def run_soliton_demo(cfg: ExperimentConfig, out: Path) -> dict:
    """Noiseless spectral evolution of the configured soliton: heatmap, in-band
    energy share against distance, and the measured breathing period."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    x, spec = soliton_input(cfg)
    fiber = cfg.fiber()
    z, f, rows = sol.spectral_evolution(
        x, fiber, cfg.float("soliton.z_max_km"), SsfmConfig(cfg.float("soliton.step_km"), False),
        cfg.int("soliton.snapshots"))
    band = cfg.float("soliton.band_hz")
    frac = sol.inband_fraction(rows, f, band)
    summary = {"scenario": "soliton-demo", "config_hash": cfg.hash(), "etas": list(spec.etas),
               "t0_ps": spec.t0_ps, "band_hz": band, "inband_min": float(frac.min()),
               "inband_max": float(frac.max())}
    if len(spec.etas) == 2:
        summary["period_expected_km"] = sol.soliton_period(spec, fiber)
        try:
            summary["period_measured_km"] = sol.pattern_period(z, np.sqrt(rows))
        except Exception as e:  # the pattern may not return within z_max
            summary["period_measured_km"] = None
            summary["period_error"] = str(e)
    write_csv(out / "soliton_heatmap.csv", [[fmtz, *r] for fmtz, r in zip(z, rows)],
              _meta(cfg, "soliton-demo"), columns=["z_km"] + [f"{v:.6g}" for v in f])
    write_csv(out / "soliton_inband.csv", list(zip(z, frac)), _meta(cfg, "soliton-demo"),
              columns=["z_km", "inband_fraction"])
    (out / "soliton_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _maybe_plot(cfg, "plot_soliton_demo", out, z, f, rows, frac, band)
    summary["wall_s"] = time.perf_counter() - t0
    return summary


# -- soliton l2 sweep -----------------------------------------------------------------


def _soliton_train(cfg: ExperimentConfig, rng):
    """Two-soliton pulse per slot, phase-modulated with ``sweep.phases``-PSK."""
    slot = cfg.float("sweep.slot_ps")
    sps = cfg.int("sweep.samples_per_slot")
    ns = cfg.int("sweep.n_symbols")
    nf = cfg.int("sweep.frames")
    m = cfg.int("sweep.phases")
    grid = SamplingGrid.from_symbols(1e12 / slot, sps, ns)
    spec = sol.SolitonSpec(cfg.float("soliton.t0_ps"), tuple(cfg.floats("soliton.etas")))
    fiber = cfg.fiber()
    t = grid.time_ps()
    window = grid.n_samples * grid.dt_ps
    pulse = np.zeros(grid.n_samples, dtype=complex)
    for shift in (-1, 0, 1):  # periodic images keep the frame circular
        pulse += sol.multisoliton_profile(spec.etas, (t - shift * window) / spec.t0_ps)
    pulse *= math.sqrt(sol.power_scale(fiber, spec.t0_ps))
    idx = rng.integers(0, m, size=(nf, ns))
    up = np.zeros((nf, grid.n_samples), dtype=complex)
    up[:, ::sps] = np.exp(2j * np.pi * idx / m)
    x = np.fft.ifft(np.fft.fft(up, axis=-1) * np.fft.fft(pulse), axis=-1)
    return ComplexBasebandSignal(x, grid), idx, spec


def _ls_combiner_rate(features, idx, m, symbol_rate, seed):
    """Least-squares linear combiner fit on the first half of the frames, then
    the held-out GMM rate of its output."""
    nf, ns, _ = features.shape
    half = nf // 2
    target = np.exp(2j * np.pi * idx / m)
    a = features[:half].reshape(-1, features.shape[-1])
    w, *_ = np.linalg.lstsq(a, target[:half].ravel(), rcond=None)
    est = features @ w
    return evaluate_pairs(list(idx), list(est), m, symbol_rate, symbol_rate, seed=seed)


def soliton_sweep_task(args) -> list[tuple]:
    values, preset, mode, seed = args
    cfg = ExperimentConfig.build(preset, values)
    rng = np.random.default_rng([seed, 11])
    x, idx, spec = _soliton_train(cfg, rng)
    fiber = cfg.fiber()
    grid = x.grid
    zp = sol.soliton_period(spec, fiber)
    step = cfg.float("sweep.step_km")
    l1 = round(0.5 * zp / step) * step
    center = np.abs(x.samples[:, :: grid.samples_per_symbol]) ** 2
    ref = 0.5 * float(np.mean(center))  # symbol-sample power after the coupler
    snr = cfg.opt_float("sweep.adc_snr_db")
    topo = cfg.topology(mode if mode != "baseline" else "SD", 0.0)
    topo = replace(topo, l1_km=l1, adc_bandwidth=cfg.float("sweep.adc_bandwidth_hz"),
                   ssfm=SsfmConfig(step, cfg.bool("ssfm.noise")),
                   adc_noise_w=None if snr is None else ref * 10 ** (-snr / 10))
    p_avg = float(np.mean(np.abs(x.samples) ** 2))
    p_dbm = 10 * math.log10(p_avg / 1e-3)
    m = cfg.int("sweep.phases")

    def symbols(y, length):
        r = cdc(y, fiber.beta2, length)
        return r.samples[:, :: grid.samples_per_symbol] * math.sqrt(2.0)

    t_start = time.perf_counter()
    z1 = ssfm_propagate(x, fiber, l1, topo.ssfm, rng)
    tap, through = coupler_split(z1)
    s1 = symbols(adc_observe(tap, topo, rng), l1)
    rows = []
    grid_l2 = cfg.floats("sweep.l2_grid_km")
    if mode == "baseline":
        res = _ls_combiner_rate(np.stack([s1, s1], -1), idx, m, grid.symbol_rate, seed)
        for l2 in grid_l2:
            rows.append((mode, p_dbm, l2, seed, res, time.perf_counter() - t_start))
        return rows
    if mode == "SDA":
        edfa = topo.edfa if topo.ssfm.noise_enabled else replace(topo.edfa, nsp_edfa=0.0)
        through = edfa_amplify(through, edfa, grid.sample_rate, rng, fiber.f0)
    gain = 1.0 if mode == "SD" else math.sqrt(topo.edfa.gain)
    cur, done = through, 0.0
    for l2 in grid_l2:
        if l2 < done:
            raise ConfigError("sweep.l2_grid_km must be ascending")
        seg = round((l2 - done) / step) * step
        cur = ssfm_propagate(cur, fiber, seg, topo.ssfm, rng)
        done += seg
        s2 = symbols(adc_observe(cur, topo, rng), l1 + done) / gain
        res = _ls_combiner_rate(np.stack([s1, s2], -1), idx, m, grid.symbol_rate, seed)
        rows.append((mode, p_dbm, l2, seed, res, time.perf_counter() - t_start))
    return rows


def run_soliton_l2_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[ResultRow]:
    out.mkdir(parents=True, exist_ok=True)
    seeds = cfg.ints("run.seeds")
    modes = cfg.list("link.modes")
    tasks = [(cfg.values, cfg.preset, mode, s) for s in seeds for mode in modes]
    results = _pool_map(soliton_sweep_task, tasks, workers)
    rows, walls = [], []
    for chunk in results:
        for mode, p_dbm, l2, seed, res, wall in chunk:
            rows.append(ResultRow("soliton-l2-sweep", mode, p_dbm, l2, seed, res.mi_bits, res.eta,
                                  res.ci_low, res.ci_high, _wall(cfg, wall)))
            walls.append(wall)
    spec = sol.SolitonSpec(cfg.float("soliton.t0_ps"), tuple(cfg.floats("soliton.etas")))
    zp = sol.soliton_period(spec, cfg.fiber())
    write_csv(out / "soliton_l2_sweep.csv", rows, _meta(cfg, "soliton-l2-sweep", z_p_km=f"{zp:.6g}"))
    _timing_sidecar(out, "soliton_l2_sweep", rows, walls)
    _maybe_plot(cfg, "plot_l2_curves", out / "soliton_l2_sweep.png", rows, "MI in bit/symbol", zp)
    return rows


def sweep_argmax(rows: list[ResultRow], mode: str, seed: int) -> tuple[float, float, float]:
    """``(l2 at maximum, MI there, MI at the first grid point)`` for one curve."""
    curve = sorted((r for r in rows if r.mode == mode and r.seed == seed), key=lambda r: r.l2_km)
    best = max(curve, key=lambda r: r.mi_bits)
    return best.l2_km, best.mi_bits, curve[0].mi_bits


# -- autoencoder runs --------------------------------------------------------------


def mode_label(variant: str, mode: str) -> str:
    return variant if mode == "baseline" else f"{variant}-{mode}"


def _ae_params(cfg: ExperimentConfig, variant: str, seed: int) -> TransceiverParams:
    return init_params(cfg.int("tx.M"), variant, cfg.int("ae.window_k"), cfg.int("ae.hidden"),
                       cfg.int("ae.demapper_hidden"), seed)


def ae_task(args):
    """Train and evaluate one transceiver; returns ``(row fields, parameter count, losses)``."""
    values, preset, variant, mode, power, l2, seed = args
    cfg = ExperimentConfig.build(preset, values)
    tc = cfg.train_config(mode, l2, power, seed)
    t0 = time.perf_counter()
    res = train(tc, _ae_params(cfg, variant, seed))
    m = evaluate(res.params, tc, cfg.int("eval.frames"))
    return {"variant": variant, "mode": mode, "power": power, "l2": l2, "seed": seed, "metrics": m,
            "n_params": res.params.n_params(), "wall": time.perf_counter() - t0,
            "final_loss": float(np.mean(res.losses[-max(1, len(res.losses) // 20):])) if len(res.losses) else math.nan}


def _ae_row(cfg, scenario, r, l2=None):
    m = r["metrics"]
    return ResultRow(scenario, mode_label(r["variant"], r["mode"]), float(r["power"]),
                     float(r["l2"] if l2 is None else l2), int(r["seed"]), m.mi_bits, m.eta,
                     m.ci_low, m.ci_high, _wall(cfg, r["wall"]))


def paired_gain(result, baseline) -> float:
    """``eta(result) - eta(baseline)``, refusing unpaired runs."""
    if result["seed"] != baseline["seed"]:
        raise PairingError("gain requires runs sharing a seed")
    if result["n_params"] != baseline["n_params"]:
        raise PairingError(f"parameter counts differ ({result['n_params']} vs {baseline['n_params']})")
    if result["power"] != baseline["power"] or result["variant"] != baseline["variant"]:
        raise PairingError("gain requires equal launch power and transceiver variant")
    return result["metrics"].eta - baseline["metrics"].eta


def run_ae_l2_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[ResultRow]:
    out.mkdir(parents=True, exist_ok=True)
    variant = cfg.str("ae.variant")
    seeds = cfg.ints("run.seeds")
    powers = cfg.floats("ae.l2_sweep_powers_dbm")
    modes = [m for m in cfg.list("link.modes") if m != "baseline"]
    l2s = cfg.floats("link.l2_grid_km")
    tasks = []
    for s in seeds:
        for p in powers:
            tasks.append((cfg.values, cfg.preset, variant, "baseline", p, 0.0, s))
            tasks += [(cfg.values, cfg.preset, variant, m, p, l2, s) for m in modes for l2 in l2s]
    results = _pool_map(ae_task, tasks, workers)
    base = {(r["seed"], r["power"]): r for r in results if r["mode"] == "baseline"}
    rows, gains = [], []
    for r in results:
        if r["mode"] == "baseline":
            rows.append(_ae_row(cfg, "ae-l2-sweep", r))
            continue
        b = base[(r["seed"], r["power"])]
        rows.append(_ae_row(cfg, "ae-l2-sweep", r))
        gains.append((r["mode"], r["power"], r["l2"], r["seed"], r["metrics"].eta, b["metrics"].eta,
                      paired_gain(r, b), r["n_params"]))
    meta = _meta(cfg, "ae-l2-sweep", variant=variant)
    write_csv(out / "ae_l2_sweep.csv", rows, meta)
    write_csv(out / "ae_l2_gain.csv", gains, meta,
              columns=["mode", "power_dbm", "l2_km", "seed", "eta", "eta_baseline", "delta_eta", "n_params"])
    _timing_sidecar(out, "ae_l2_sweep", rows, [r["wall"] for r in results])
    _maybe_plot(cfg, "plot_gain_curves", out / "ae_l2_gain.png", gains)
    return rows


def run_ae_power_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[ResultRow]:
    """Classical baselines plus every AE variant with and without diversity."""
    out.mkdir(parents=True, exist_ok=True)
    seeds = cfg.ints("run.seeds")
    powers = cfg.floats("tx.power_grid_dbm")
    l2 = cfg.float("link.l2_km")
    modes = cfg.list("link.modes")
    tasks = []
    for s in seeds:
        for p in powers:
            for v in cfg.list("ae.variants"):
                for m in modes:
                    if v == "AEP" and m != "baseline":
                        continue  # no receive-side stage to use a second path
                    tasks.append((cfg.values, cfg.preset, v, m, p, 0.0 if m == "baseline" else l2, s))
    results = _pool_map(ae_task, tasks, workers)
    rows = _baseline_rows(cfg, workers, "ae-power-sweep")
    rows += [_ae_row(cfg, "ae-power-sweep", r) for r in results]
    rows.sort(key=lambda r: (r.seed, r.power_dbm))
    write_csv(out / "ae_power_sweep.csv", rows, _meta(cfg, "ae-power-sweep", l2_km=l2))
    _maybe_plot(cfg, "plot_power_curves", out / "ae_power_sweep.png", rows)
    return rows


# -- classical baselines -------------------------------------------------------------


BASELINE_KINDS = ("CDC", "DBP-full", "DBP-reduced")


def baseline_symbols(cfg: ExperimentConfig, kind: str, power: float, seed: int, n_frames: int | None = None):
    """Labels and descaled symbol estimates of a classical receiver, per frame."""
    tc = cfg.train_config("baseline", 0.0, power, seed)
    topo, grid = tc.topology, tc.grid
    fiber = topo.fiber
    const = default_constellation(cfg.int("tx.M"))
    reduced = cfg.opt_float("dbp.reduced_hz")
    dcfg = DbpConfig(cfg.float("dbp.steps_per_km"), reduced if kind == "DBP-reduced" else None,
                     cfg.float("dbp.split_fraction"))
    amp = math.sqrt(tc.power_w)
    labels, est = [], []
    for f in range(cfg.int("eval.frames") if n_frames is None else n_frames):
        rng = np.random.default_rng([seed, _EVAL_TAG, f])
        idx = rng.integers(0, const.M, size=tc.n_symbols)
        x = ComplexBasebandSignal(pulse_shape(const.points[idx][None, :], grid, tc.power_w).value[0], grid)
        if kind != "CDC":
            x = split_dbp_predistort(x, fiber, topo.l1_km, dcfg)
        y1 = simulate_link(x, topo, rng).y1
        r = y1.replace(samples=y1.samples * math.sqrt(2.0))  # undo the coupler before equalizing
        if kind == "CDC":
            r = cdc(r, fiber.beta2, topo.l1_km)
        else:
            r = dbp(r, fiber, receiver_dbp_length(topo.l1_km, dcfg), dcfg)
        r = brickwall_filter(r, grid.symbol_rate)
        labels.append(idx)
        est.append(r.samples[:: r.grid.samples_per_symbol] / amp)
    return labels, est


def baseline_task(args):
    values, preset, kind, power, seed = args
    cfg = ExperimentConfig.build(preset, values)
    t0 = time.perf_counter()
    labels, est = baseline_symbols(cfg, kind, power, seed)
    sr = cfg.float("grid.symbol_rate_hz")
    m = evaluate_pairs(labels, est, cfg.int("tx.M"), sr, sr, seed=seed)
    return ResultRow("baseline-curves", kind, float(power), 0.0, int(seed), m.mi_bits, m.eta, m.ci_low,
                     m.ci_high, _wall(cfg, time.perf_counter() - t0))


def _baseline_rows(cfg, workers, scenario):
    tasks = [(cfg.values, cfg.preset, k, p, s) for s in cfg.ints("run.seeds")
             for p in cfg.floats("tx.power_grid_dbm") for k in BASELINE_KINDS]
    return [replace(r, scenario=scenario) for r in _pool_map(baseline_task, tasks, workers)]


def run_baseline_curves(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[ResultRow]:
    out.mkdir(parents=True, exist_ok=True)
    rows = _baseline_rows(cfg, workers, "baseline-curves")
    write_csv(out / "baseline_curves.csv", rows, _meta(cfg, "baseline-curves"))
    _maybe_plot(cfg, "plot_power_curves", out / "baseline_curves.png", rows)
    return rows


# -- single train / eval ---------------------------------------------------------------


def run_train(cfg: ExperimentConfig, out: Path, seed: int) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    variant, mode = cfg.str("ae.variant"), cfg.str("link.mode")
    tc = cfg.train_config(mode, None, None, seed)
    res = train(tc, _ae_params(cfg, variant, seed), log_every=max(1, tc.steps // 20))
    p = res.params
    manifest = {
        "variant": variant, "mode": mode, "M": p.constellation.M, "window_k": p.window_k,
        "seed": seed, "steps": tc.steps, "config_hash": cfg.hash(),
        "layers": {name: {"sizes": net.sizes, "activations": list(net.activations)}
                   for name, net in (("predistort", p.predistort), ("combine", p.combine),
                                     ("train_demapper", p.train_demapper)) if net is not None},
        "n_params": p.n_params(),
    }
    save_checkpoint(out / "params", p.arrays(), manifest)
    (out / "config.txt").write_text(cfg.canonical_text())
    write_csv(out / "train_loss.csv", list(enumerate(res.losses)), _meta(cfg, "train"),
              columns=["step", "loss_nats"])
    _maybe_plot(cfg, "plot_loss", out / "train_loss.png", res.losses)
    return {"checkpoint": str(out / "params.bin"), "final_loss": float(res.losses[-1]) if tc.steps else None,
            "n_params": p.n_params()}


def load_params(stem) -> TransceiverParams:
    arrays, meta = load_checkpoint(stem)
    layers = meta["layers"]
    p = init_params(meta["M"], meta["variant"], meta["window_k"],
                    layers.get("predistort", layers.get("combine"))["sizes"][1],
                    layers["train_demapper"]["sizes"][1], meta["seed"])
    return p.with_arrays(arrays)


def run_eval(cfg: ExperimentConfig, out: Path, seed: int, checkpoint=None) -> dict:
    """Evaluate a checkpoint (or the untrained identity transceiver) on held-out frames."""
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.str("link.mode")
    if checkpoint is not None:
        stem = Path(checkpoint).with_suffix("")
        params = load_params(stem)
        mode = json.loads(stem.with_suffix(".json").read_text())["mode"]
    else:
        params = _ae_params(cfg, cfg.str("ae.variant"), seed)
    tc = cfg.train_config(mode, None, None, seed)
    t0 = time.perf_counter()
    m = evaluate(params, tc, cfg.int("eval.frames"), seed=seed)
    row = ResultRow("eval", mode_label(params.variant, mode), tc.power_dbm, tc.topology.l2_km, seed,
                    m.mi_bits, m.eta, m.ci_low, m.ci_high, _wall(cfg, time.perf_counter() - t0))
    write_csv(out / "eval.csv", [row], _meta(cfg, "eval"))
    doc = json.loads(m.to_json(power_dbm=tc.power_dbm, l2_km=tc.topology.l2_km, mode=row.mode, seed=seed))
    (out / "eval.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    return doc
