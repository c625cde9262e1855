import math
from dataclasses import replace

import numpy as np
import pytest

from zspatial.equalizers import DbpConfig, cdc, dbp, receiver_dbp_length, split_dbp_predistort
from zspatial.fiber import EdfaSpec, FiberSpec, SsfmConfig, ssfm_propagate
from zspatial.link import LinkTopology, simulate_link
from zspatial.signal import (
    ComplexBasebandSignal, SamplingGrid, SignalError, brickwall_filter, decimate, measure_power, upsample,
)
from zspatial.solitons import SolitonSpec, soliton_period, two_soliton_from_eigenvalues

NOISELESS = FiberSpec(nsp_raman=0.0)


def shaped(rng, n_sym=31, sps=8, rs=20e9, p=1e-3):
    g = SamplingGrid.from_symbols(rs, sps, n_sym)
    s = (rng.standard_normal(n_sym) + 1j * rng.standard_normal(n_sym)) / math.sqrt(2)
    x = brickwall_filter(upsample(s, g), rs)
    return x.replace(samples=x.samples * math.sqrt(p / np.mean(np.abs(x.samples) ** 2)))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_cdc_inverts_linear_propagation(rng):
    x = shaped(rng)
    f = FiberSpec(gamma=0.0, nsp_raman=0.0)
    y = ssfm_propagate(x, f, 1000.0, SsfmConfig(1.0, noise_enabled=False))
    assert rel(cdc(y, f.beta2, 1000.0).samples, x.samples) < 1e-10


def test_cdc_examples(rng):
    x = shaped(rng)
    assert cdc(x, -21.67, 0.0) is x
    assert math.isclose(cdc(x, -21.67, 123.0).energy, x.energy, rel_tol=1e-12)


def test_same_grid_dbp_inverts_noiseless_propagation(rng):
    x = shaped(rng, p=4e-3)
    y = ssfm_propagate(x, NOISELESS, 200.0, SsfmConfig(1.0, noise_enabled=False))
    back = dbp(y, NOISELESS, 200.0, DbpConfig(n_steps_per_km=1.0))
    assert rel(back.samples, x.samples) < 1e-9


def test_dbp_with_zero_gamma_is_cdc(rng):
    x = shaped(rng)
    f = FiberSpec(gamma=0.0, nsp_raman=0.0)
    assert rel(dbp(x, f, 100.0, DbpConfig()).samples, cdc(x, f.beta2, 100.0).samples) < 1e-12


def test_reduced_rate_dbp_returns_reduced_grid(rng):
    x = shaped(rng)
    y = dbp(x, NOISELESS, 10.0, DbpConfig(oversampling_hz=x.grid.sample_rate / 4))
    assert y.grid.samples_per_symbol == 2 and y.grid.n_samples == x.grid.n_samples // 4
    with pytest.raises(SignalError):
        dbp(x, NOISELESS, 10.0, DbpConfig(oversampling_hz=x.grid.sample_rate / 3))


def test_split_dbp_recombines(rng):
    x = shaped(rng, p=4e-3)
    cfg = DbpConfig(split_fraction=0.5)
    launched = split_dbp_predistort(x, NOISELESS, 100.0, cfg)
    y = ssfm_propagate(launched, NOISELESS, 100.0, SsfmConfig(1.0, noise_enabled=False))
    rest = receiver_dbp_length(100.0, cfg)
    assert rest == 50.0
    assert rel(dbp(y, NOISELESS, rest, cfg).samples, x.samples) < 1e-9
    assert split_dbp_predistort(x, NOISELESS, 100.0, DbpConfig(split_fraction=0.0)) is x


def test_dbp_config_validation():
    with pytest.raises(SignalError):
        DbpConfig(n_steps_per_km=0)
    with pytest.raises(SignalError):
        DbpConfig(split_fraction=1.5)


def test_link_topology_validation():
    with pytest.raises(SignalError):
        LinkTopology(mode="XYZ")
    with pytest.raises(SignalError):
        LinkTopology(l1_km=0)
    with pytest.raises(SignalError):
        LinkTopology(l2_km=-1)


def _quiet(mode, l2=0.0, gamma=1.27):
    return LinkTopology(mode=mode, l1_km=50.0, l2_km=l2, adc_bandwidth=20e9,
                        fiber=FiberSpec(gamma=gamma), ssfm=SsfmConfig(1.0, noise_enabled=False),
                        edfa=EdfaSpec(nsp_edfa=0.0))


def test_sd_with_empty_second_fiber_duplicates(rng):
    x = shaped(rng)
    out = simulate_link(x, _quiet("SD", gamma=0.0), None)
    assert np.array_equal(out.y1.samples, out.y2.samples)


def test_sda_restores_power_of_second_path(rng):
    x = shaped(rng)
    out = simulate_link(x, _quiet("SDA"), None)
    assert math.isclose(measure_power(out.y2)[0], 2 * measure_power(out.y1)[0], rel_tol=1e-12)


def test_sd_equals_sda_without_gain_and_noise(rng):
    x = shaped(rng)
    sd = simulate_link(x, _quiet("SD"), None)
    t = replace(_quiet("SDA"), edfa=EdfaSpec(gain_db=0.0, nsp_edfa=0.0))
    sda = simulate_link(x, t, None)
    assert np.array_equal(sd.y2.samples, sda.y2.samples)


def test_z_bookkeeping_and_shared_grid(rng):
    x = shaped(rng)
    out = simulate_link(x, _quiet("SD", 30.0), None)
    assert out.y2.z_km - out.y1.z_km == 30.0
    assert out.y1.grid == out.y2.grid == x.grid


def test_baseline_duplicates_observation(rng):
    x = shaped(rng)
    t = replace(_quiet("baseline", 80.0), ssfm=SsfmConfig(1.0), adc_noise_w=1e-6)
    out = simulate_link(x, t, np.random.default_rng(0))
    assert out.y1 is out.y2
    assert t.second_path_km == t.l1_km


def test_link_determinism(rng):
    x = shaped(rng)
    t = LinkTopology(mode="SDA", l1_km=20.0, l2_km=10.0, ssfm=SsfmConfig(1.0), adc_noise_w=1e-7)
    a = simulate_link(x, t, np.random.default_rng(5))
    b = simulate_link(x, t, np.random.default_rng(5))
    assert np.array_equal(a.y1.samples, b.y1.samples) and np.array_equal(a.y2.samples, b.y2.samples)


def test_adc_noise_power_inside_band():
    g = SamplingGrid.from_symbols(20e9, 8, 63)
    x = ComplexBasebandSignal(np.zeros((64, g.n_samples)), g)
    t = LinkTopology(mode="SD", l1_km=1.0, l2_km=0.0, fiber=NOISELESS, ssfm=SsfmConfig(1.0), adc_noise_w=1e-6)
    out = simulate_link(x, t, np.random.default_rng(1))
    assert abs(np.mean(np.abs(out.y1.samples) ** 2) - 1e-6) / 1e-6 < 0.05
    # the two receivers draw independent noise
    assert abs(np.vdot(out.y1.samples.ravel(), out.y2.samples.ravel())) / (1e-6 * out.y1.samples.size) < 0.05


def test_soliton_half_period_compression_recovers_inband_energy():
    g = SamplingGrid(250e9, 1, 1024)
    spec = SolitonSpec(50.0, (0.5, 1.0))
    f = FiberSpec()
    x = two_soliton_from_eigenvalues(spec, f, g)
    half = round(soliton_period(spec, f) / 2)
    t = LinkTopology(mode="SD", l1_km=half, l2_km=half, adc_bandwidth=5e9, fiber=NOISELESS,
                     ssfm=SsfmConfig(1.0, noise_enabled=False))
    out = simulate_link(x, t, None)
    assert out.y2.energy > out.y1.energy
