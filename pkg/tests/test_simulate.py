import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msgmm.core import read_json
from msgmm.errors import ConfigError
from msgmm.simulate import (
    BaselineParams,
    SimConfig,
    TrueComponent,
    arma_noise,
    draw_intensity,
    generate_dataset,
    realize_sample,
    sample_catalog,
    truth_positions,
    write_dataset,
)


def test_catalog_support_and_determinism():
    cfg = SimConfig(n_components=5000)
    a = sample_catalog(cfg, np.random.default_rng(1))
    b = sample_catalog(cfg, np.random.default_rng(1))
    assert a == b
    p = np.array([c.prevalence for c in a])
    assert np.all((p > 0) & (p <= 1))
    assert all(c.abundance > 100 for c in a)
    assert all(2000.0 <= c.mass <= cfg.mz_max for c in a)


def test_abundance_is_shifted_lognormal_5_1():
    cat = sample_catalog(SimConfig(n_components=100_000), np.random.default_rng(2))
    log_excess = np.log(np.array([c.abundance for c in cat]) - 100.0)
    assert log_excess.mean() == pytest.approx(5.0, abs=0.02)
    assert log_excess.var() == pytest.approx(1.0, rel=0.02)


def test_intensity_moments():
    pe = 148.0
    x = draw_intensity(pe, np.random.default_rng(3), 1.45, size=200_000)
    assert x.mean() == pytest.approx(pe, rel=5e-3)
    assert x.var() == pytest.approx(1.45 * np.sqrt(pe), rel=0.03)


def test_all_present_with_unit_prevalence():
    cat = [TrueComponent(3000.0 + 500 * k, 1.0, 200.0) for k in range(10)]
    _, realized = realize_sample(cat, SimConfig(n_components=10), np.random.default_rng(4))
    assert [r["component"] for r in realized] == list(range(10))


def test_single_peak_area():
    cfg = SimConfig(n_components=1, noise=False, add_baseline=False)
    cat = [TrueComponent(5000.0, 1.0, 300.0)]
    s, realized = realize_sample(cat, cfg, np.random.default_rng(5))
    # each peak is its intensity times a unit-area density, so the area over m/z is the intensity
    area = np.trapezoid(s.intensity, s.mz)
    assert area == pytest.approx(realized[0]["intensity"], rel=0.01)


def test_baseline_at_zero():
    b = BaselineParams(100.0, 3000.0, 80.0, 500.0)
    assert b(0.0) == pytest.approx(20.0)
    with pytest.raises(ConfigError):
        BaselineParams(1.0, 0.0, 1.0, 1.0)


def test_arma_matches_recursion():
    ar, ma = (0.3,), (0.4, 0.3, 0.2, 0.1, 0.05, 0.02)
    n, burn = 500, 200
    got = arma_noise(n, np.random.default_rng(6), ar, ma, 2.0)
    w = np.random.default_rng(6).normal(0.0, 2.0, n + burn)
    e = np.zeros(n + burn)
    for t in range(n + burn):
        e[t] = w[t]
        if t >= 1:
            e[t] += ar[0] * e[t - 1]
        for j, b in enumerate(ma, start=1):
            if t >= j:
                e[t] += b * w[t - j]
    assert np.allclose(got, e[burn:], rtol=1e-12, atol=1e-12)


def test_arma_zero_std():
    assert np.array_equal(arma_noise(100, np.random.default_rng(0), (0.3,), (0.4,), 0.0), np.zeros(100))


def test_single_sample_dataset_is_realize_sample():
    cfg = SimConfig(n_components=20, n_samples=1, seed=9)
    spectra, truth = generate_dataset(cfg)
    children = np.random.SeedSequence(9).spawn(2)
    cat = sample_catalog(cfg, np.random.default_rng(children[0]))
    s, realized = realize_sample(cat, cfg, np.random.default_rng(children[1]))
    assert np.array_equal(spectra[0].intensity, s.intensity)
    assert truth["samples"][0] == realized


def test_dataset_files_deterministic(tmp_path):
    cfg = SimConfig(n_components=15, n_samples=3, seed=10)
    for d in ("a", "b"):
        write_dataset(*generate_dataset(cfg), tmp_path / d)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "truth.json" in names and "mean.csv" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    truth = read_json(tmp_path / "a" / "truth.json")
    assert len(truth["catalog"]) == 15
    assert truth_positions(truth).size == 15


@given(st.integers(0, 2**32 - 1))
def test_spectra_nonnegative(seed):
    spectra, _ = generate_dataset(SimConfig(n_components=10, n_samples=2, n_points=800, seed=seed))
    assert np.all(spectra.intensities >= 0)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(n_components=0)
    with pytest.raises(ConfigError):
        SimConfig(cv=0.0)
