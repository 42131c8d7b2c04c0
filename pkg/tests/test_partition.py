import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gaussians
from msgmm.core import FWHH_FACTOR, GaussianComponent, MixtureModel, Spectrum, render_scaled
from msgmm.em import EmConfig, select_model
from msgmm.errors import DataError, SplitterRejected
from msgmm.partition import (
    FALLBACK_MIN_QUALITY,
    Splitter,
    default_taper,
    extract_splitter,
    extract_splitter_segment,
    partition_segments,
    pick_clear_peaks,
    subtract_splitters,
    warp_down,
)
from msgmm.peaks import Peak, PeakList, average_cv, detect_peaks
from msgmm.pipeline import PipelineConfig, decompose, preprocess_spectra
from msgmm.postprocess import aggregate
from msgmm.simulate import SimConfig, generate_dataset

GRID = 2000.0 + 0.8 * np.arange(10000)


def test_single_clear_peak_selected():
    pl = PeakList((Peak(5000.0, 10.0, 10.0, 5.0),))
    assert len(pick_clear_peaks(pl, 0.002)) == 1


def test_close_peaks_one_selected():
    pl = PeakList((Peak(5000.0, 10.0, 10.0, 5.0), Peak(5020.0, 10.0, 10.0, 5.0)))
    assert len(pick_clear_peaks(pl, 0.002, min_gap=5.0)) == 1


def test_empty_peaklist():
    assert len(pick_clear_peaks(PeakList(), 0.002)) == 0


def test_clear_peaks_on_simulated_spectrum():
    spectra, _ = generate_dataset(SimConfig(n_components=200, n_samples=10, seed=13))
    s = preprocess_spectra(spectra, PipelineConfig())
    peaks = detect_peaks(s)
    cv = average_cv(peaks)
    clear = pick_clear_peaks(peaks, cv, 2.0, 5.0, 50.0)
    assert len(clear) > 10
    # independent scan over the accepted sequence
    assert np.all(clear.qualities >= FALLBACK_MIN_QUALITY)
    pos = clear.positions
    gaps = np.diff(pos) / (cv * pos[:-1])
    assert np.all(gaps >= 5.0)
    for a, b in zip(pos, pos[1:]):
        if (b - a) / (cv * a) > 50.0:
            # a long gap is only allowed where no qualifying peak lies within reach
            between = [p for p in peaks if a + 5.0 * cv * a <= p.position <= a + 50.0 * cv * a]
            assert all(p.quality < FALLBACK_MIN_QUALITY for p in between)


def test_splitter_segment_span():
    s = Spectrum(GRID, np.ones(GRID.size))
    seg = extract_splitter_segment(s, 5000.0, 0.002, 6.0)
    lo, hi = seg.real_range
    assert lo >= 4940.0 - 1e-9 and lo - 0.8 < 4940.0
    assert hi <= 5060.0 + 1e-9 and hi + 0.8 > 5060.0
    edge = extract_splitter_segment(s, 2001.0, 0.002, 6.0)
    assert edge.n_min == 0
    with pytest.raises(DataError):
        extract_splitter_segment(s, 1000.0, 0.002)


def test_warp_down():
    s = Spectrum(GRID, np.zeros(GRID.size))
    seg = extract_splitter_segment(s, 5000.0, 0.002)
    w = warp_down(seg, 12.0)
    assert np.all(w.intensity == 0)
    y = gaussians(GRID, [1.0], [5000.0], [20.0], areas=False)
    seg = extract_splitter_segment(Spectrum(GRID, y), 5000.0, 0.002)
    w = warp_down(seg, 12.0)
    assert w.intensity[w.pad_left] == seg.intensity[0]
    assert w.intensity[0] < 1e-3 * seg.intensity[0]
    assert np.all(np.diff(w.mz) > 0)
    assert w.real_range == seg.real_range


def test_extract_splitter_rule():
    at = MixtureModel((GaussianComponent(1.0, 5000.0, 4.0),))
    assert len(extract_splitter(at, 5000.0).components) == 1
    edge = MixtureModel((GaussianComponent(0.5, 5000.0, 4.0), GaussianComponent(0.5, 5016.0, 4.0)))
    assert [c.mu for c in extract_splitter(edge, 5000.0).components] == [5000.0]
    far = MixtureModel((GaussianComponent(1.0, 5016.0, 4.0),))
    with pytest.raises(SplitterRejected):
        extract_splitter(far, 5000.0)


def test_splitter_keeps_only_tall_peak():
    sigma = 0.002 * 5000.0 / FWHH_FACTOR
    y = gaussians(GRID, [5e4, 5e3], [5000.0, 5000.0 + 10 * sigma], [sigma, sigma])
    s = Spectrum(GRID, y)
    seg = warp_down(extract_splitter_segment(s, 5000.0, 0.002), default_taper(5000.0, 0.002))
    fit = select_model(seg, range(1, 6), 0.002, EmConfig(avg_cv=0.002))
    assert fit.K == 2
    sp = extract_splitter(fit.model, 5000.0, seg.real_range)
    assert len(sp.components) == 1 and sp.components[0].mu == pytest.approx(5000.0, abs=0.5)


@given(st.lists(st.floats(2100.0, 11900.0), min_size=1, max_size=5))
def test_extract_splitter_idempotent(mus):
    comps = tuple(GaussianComponent(1 / len(mus), m, 5.0) for m in mus)
    model = MixtureModel(comps)
    anchor = float(mus[0])
    sp = extract_splitter(model, anchor)
    again = extract_splitter(MixtureModel.from_arrays([c.alpha for c in sp.components],
                                                      [c.mu for c in sp.components],
                                                      [c.sigma for c in sp.components]), anchor)
    assert [c.mu for c in again.components] == [c.mu for c in sp.components]


def test_subtract_examples():
    y = gaussians(GRID, [1e4], [5000.0], [4.0])
    s = Spectrum(GRID, y)
    assert subtract_splitters(s, []) is s
    sp = Splitter(5000.0, (GaussianComponent(1.0, 5000.0, 4.0),), 1e4)
    residual = subtract_splitters(Spectrum(GRID, sp.render(GRID)), [sp])
    assert np.max(np.abs(residual.intensity)) < 1e-9 * y.max()


def test_hump_survives_between_splitters():
    comps = [(2e5, 4000.0, 3.4), (5e4, 4040.0, 8.0), (2e5, 4080.0, 3.4)]
    y = gaussians(GRID, *zip(*comps))
    hump = gaussians(GRID, [5e4], [4040.0], [8.0])
    sps = [Splitter(4000.0, (GaussianComponent(1.0, 4000.0, 3.4),), 2e5),
           Splitter(4080.0, (GaussianComponent(1.0, 4080.0, 3.4),), 2e5)]
    residual = subtract_splitters(Spectrum(GRID, y), sps)
    between = (GRID > 4000.0) & (GRID < 4080.0)
    assert residual.intensity[between].sum() > 0.95 * hump[between].sum()


@given(st.lists(st.tuples(st.floats(2100.0, 9900.0), st.floats(0.1, 3.0)), min_size=1, max_size=6))
def test_subtraction_never_increases(layout):
    y = gaussians(GRID, [1e4] * 3, [3000.0, 5000.0, 7000.0], [5.0, 5.0, 5.0])
    sps = [Splitter(m, (GaussianComponent(1.0, m, 5.0),), 1e4 * f) for m, f in layout]
    r = subtract_splitters(Spectrum(GRID, y), sps).intensity
    assert np.all(r >= 0) and np.all(r <= y)


def test_partition_counts():
    y = gaussians(GRID, [1e4] * 4, [3000.0, 5000.0, 7000.0, 9000.0], [30.0] * 4)
    s = Spectrum(GRID, y)
    whole = partition_segments(s, [])
    assert len(whole) == 1
    sps = [Splitter(a, (GaussianComponent(1.0, a, 5.0),), 1.0) for a in (4000.0, 6000.0, 8000.0)]
    segs = partition_segments(s, sps)
    assert len(segs) == 4
    # disjoint, each inside its cut, and only near-zero tails are trimmed
    assert all(a.n_max < b.n_min for a, b in zip(segs, segs[1:]))
    cuts = [0, *(s.nearest_index(a) for a in (4000.0, 6000.0, 8000.0)), GRID.size]
    for seg, lo, hi in zip(segs, cuts, cuts[1:]):
        assert lo <= seg.n_min and seg.n_max < hi
        part = y[lo:hi]
        outside = part.sum() - y[seg.n_min : seg.n_max + 1].sum()
        assert outside < 0.01 * part.sum()
        assert np.all(y[lo : seg.n_min] < 0.01 * part.max())


def test_end_to_end_mass():
    spectra, _ = generate_dataset(SimConfig(n_components=60, n_samples=10, seed=21))
    cfg = PipelineConfig()
    s = preprocess_spectra(spectra, cfg)
    model, diag = decompose(s, cfg)
    rendered = render_scaled(model, GRID)
    assert rendered.sum() == pytest.approx(s.intensity.sum(), rel=0.05)
    assert np.all(np.diff(model.mu) >= 0)


def test_aggregate_single_splitter():
    sp = Splitter(5000.0, (GaussianComponent(0.3, 4999.0, 4.0), GaussianComponent(0.1, 5001.0, 4.0)), 100.0)
    m = aggregate([sp], [], Spectrum(GRID, np.ones(GRID.size)))
    assert np.allclose(m.alpha, [0.75, 0.25])
    assert m.scale == pytest.approx(40.0)
    with pytest.raises(DataError, match="no components"):
        aggregate([], [], Spectrum(GRID, np.ones(GRID.size)))
