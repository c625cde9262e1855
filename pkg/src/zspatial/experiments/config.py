"""Flat ``key = value`` experiment configuration with dotted sections.

Example::

    # comments start with '#'
    link.l1_km = 250
    link.l2_grid_km = 20, 60, 120
    ssfm.noise = true

A file is layered over a preset (``desk`` or ``paper``); unknown keys are
rejected so typos fail loudly.  Values keep their textual form until read
through a typed accessor.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

from ..fiber import EdfaSpec, FiberSpec, SsfmConfig
from ..link import LinkTopology
from ..signal import dbm_to_w


class ConfigError(ValueError):
    pass


_COMMON = {
    "run.seeds": "0",
    "run.workers": "1",
    "run.record_wall_time": "false",
    "run.plots": "true",
    "fiber.beta2_ps2_per_km": "-21.67",
    "fiber.gamma_per_w_km": "1.27",
    "fiber.alpha_db_per_km": "0.2",
    "fiber.f0_hz": "193.55e12",
    "fiber.nsp": "1.0",
    "edfa.gain_db": repr(10 * math.log10(2.0)),
    "edfa.nsp": "3.16",
    "ssfm.noise": "true",
    "link.mode": "SDA",
    "link.modes": "baseline, SD, SDA",
    "link.adc_noise_dbm": "none",
    "dbp.steps_per_km": "1.0",
    "dbp.split_fraction": "0.5",
    "ae.variant": "AEC",
    "ae.variants": "AEC, AEP, AEPC",
    "ae.window_k": "16",
    "ae.hidden": "128",
    "ae.demapper_hidden": "64",
    "train.lr": "3e-3",
    "train.lr_final": "1e-4",
    "train.noise": "true",
    "soliton.t0_ps": "50",
    "soliton.etas": "0.5, 1.0",
    "soliton.n_samples": "1024",
    "soliton.sample_rate_hz": "250e9",
    "soliton.step_km": "0.5",
    "soliton.z_max_km": "1000",
    "soliton.snapshots": "401",
    "soliton.band_hz": "20e9",
    "sweep.slot_ps": "640",
    "sweep.samples_per_slot": "128",
    "sweep.n_symbols": "32",
    "sweep.frames": "64",
    "sweep.adc_bandwidth_hz": "5e9",
    "sweep.adc_snr_db": "14",
    "sweep.step_km": "0.5",
    "sweep.l2_grid_km": ", ".join(str(20 * i) for i in range(28)),
    "sweep.phases": "16",
}

PRESETS = {
    "desk": {
        **_COMMON,
        "grid.symbol_rate_hz": "20e9",
        "grid.samples_per_symbol": "16",
        "grid.n_symbols": "63",
        "tx.M": "16",
        "tx.power_dbm": "6",
        "tx.power_grid_dbm": "-5, 0, 3, 6",
        "ae.l2_sweep_powers_dbm": "6",
        "link.l1_km": "250",
        "link.l2_km": "100",
        "link.l2_grid_km": "20, 100",
        "link.adc_bandwidth_hz": "20e9",
        # independent in-band receiver noise per ADC; see the README on what it implies for gains
        "link.adc_noise_dbm": "-5",
        "ssfm.step_km": "5",
        "dbp.steps_per_km": "0.2",
        "dbp.reduced_hz": "40e9",
        "train.steps": "1000",
        "train.batch": "16",
        "eval.frames": "64",
    },
    "paper": {
        **_COMMON,
        "grid.symbol_rate_hz": "20e9",
        "grid.samples_per_symbol": "50",
        "grid.n_symbols": "255",
        "tx.M": "256",
        "tx.power_dbm": "5",
        "tx.power_grid_dbm": "-5, -2.5, 0, 2.5, 5",
        "ae.l2_sweep_powers_dbm": "0, 2.5, 5",
        "link.l1_km": "1000",
        "link.l2_km": "200",
        "link.l2_grid_km": ", ".join(str(v) for v in list(range(20, 321, 20)) + [360, 400, 440, 500]),
        "link.adc_bandwidth_hz": "20e9",
        "ssfm.step_km": "1",
        "dbp.reduced_hz": "40e9",
        "train.steps": "20000",
        "train.batch": "16",
        "eval.frames": "256",
        "sweep.l2_grid_km": ", ".join(str(20 * i) for i in range(26)),
    },
}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"line {lineno}: malformed key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    values: dict

    @classmethod
    def build(cls, preset: str = "desk", overrides: dict | None = None) -> "ExperimentConfig":
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        vals = dict(PRESETS[preset])
        for k, v in (overrides or {}).items():
            if k not in vals:
                raise ConfigError(f"unknown config key {k!r}")
            vals[k] = str(v)
        return cls(preset, vals)

    @classmethod
    def load(cls, path, preset: str | None = None, overrides: dict | None = None) -> "ExperimentConfig":
        """Read a config file.  A ``preset`` key in the file selects the base
        unless ``preset`` is passed explicitly."""
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        vals = parse_config_text(text)
        file_preset = vals.pop("preset", None)
        merged = {**vals, **(overrides or {})}
        return cls.build(preset or file_preset or "desk", merged)

    def with_values(self, **kv) -> "ExperimentConfig":
        return ExperimentConfig.build(self.preset, {**self._overrides(), **{k.replace("__", "."): v for k, v in kv.items()}})

    def _overrides(self):
        base = PRESETS[self.preset]
        return {k: v for k, v in self.values.items() if base.get(k) != v}

    # -- typed access ------------------------------------------------------

    def raw(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"missing config key {key!r}") from None

    def float(self, key: str) -> float:
        try:
            return float(self.raw(key))
        except ValueError:
            raise ConfigError(f"{key} = {self.raw(key)!r} is not a number") from None

    def opt_float(self, key: str) -> float | None:
        v = self.raw(key).lower()
        return None if v in ("none", "off", "") else self.float(key)

    def int(self, key: str) -> int:
        v = self.float(key)
        if v != int(v):
            raise ConfigError(f"{key} = {self.raw(key)!r} is not an integer")
        return int(v)

    def bool(self, key: str) -> bool:
        v = self.raw(key).lower()
        if v in ("true", "yes", "on", "1"):
            return True
        if v in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key} = {self.raw(key)!r} is not a boolean")

    def str(self, key: str) -> str:
        return self.raw(key)

    def list(self, key: str) -> list[str]:
        return [s.strip() for s in self.raw(key).split(",") if s.strip()]

    def floats(self, key: str) -> list[float]:
        try:
            return [float(s) for s in self.list(key)]
        except ValueError:
            raise ConfigError(f"{key} = {self.raw(key)!r} is not a number list") from None

    def ints(self, key: str) -> list[int]:
        vals = self.floats(key)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{key} must list integers")
        return [int(v) for v in vals]

    # -- identity ----------------------------------------------------------

    def canonical_text(self) -> str:
        lines = [f"preset = {self.preset}"] + [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """Digest of the effective settings, excluding run-orchestration keys."""
        keep = {k: v for k, v in self.values.items() if k not in ("run.workers", "run.plots")}
        text = "\n".join(f"{k}={keep[k]}" for k in sorted(keep)) + f"\npreset={self.preset}\n"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # -- physical objects ---------------------------------------------------

    def fiber(self) -> FiberSpec:
        return FiberSpec(
            beta2=self.float("fiber.beta2_ps2_per_km"),
            gamma=self.float("fiber.gamma_per_w_km"),
            alpha_db_per_km=self.float("fiber.alpha_db_per_km"),
            f0=self.float("fiber.f0_hz"),
            nsp_raman=self.float("fiber.nsp"),
        )

    def topology(self, mode: str | None = None, l2_km: float | None = None) -> LinkTopology:
        noise = self.opt_float("link.adc_noise_dbm")
        return LinkTopology(
            mode=mode or self.str("link.mode"),
            l1_km=self.float("link.l1_km"),
            l2_km=self.float("link.l2_km") if l2_km is None else float(l2_km),
            adc_bandwidth=self.float("link.adc_bandwidth_hz"),
            fiber=self.fiber(),
            edfa=EdfaSpec(self.float("edfa.gain_db"), self.float("edfa.nsp")),
            ssfm=SsfmConfig(step_km=self.float("ssfm.step_km"), noise_enabled=self.bool("ssfm.noise")),
            adc_noise_w=None if noise is None else dbm_to_w(noise),
        )

    def train_config(self, mode=None, l2_km=None, power_dbm=None, seed=0):
        from ..transceiver import TrainConfig

        return TrainConfig(
            topology=self.topology(mode, l2_km),
            symbol_rate=self.float("grid.symbol_rate_hz"),
            samples_per_symbol=self.int("grid.samples_per_symbol"),
            n_symbols=self.int("grid.n_symbols"),
            batch=self.int("train.batch"),
            steps=self.int("train.steps"),
            lr=self.float("train.lr"),
            lr_final=self.opt_float("train.lr_final"),
            power_dbm=self.float("tx.power_dbm") if power_dbm is None else float(power_dbm),
            seed=int(seed),
            noise_in_training=self.bool("train.noise"),
        )
