import numpy as np
import pytest

from conftest import gaussians
from msgmm.core import MixtureModel, Spectrum
from msgmm.errors import DataError
from msgmm.evaluate import sweep_parameter
from msgmm.plotting import emit_plot, emit_sweep_plot


@pytest.fixture
def overlay():
    x = 3000.0 + 0.5 * np.arange(800)
    model = MixtureModel.from_weights([600.0, 400.0], [3150.0, 3250.0], [3.0, 4.0])
    y = gaussians(x, [600.0, 400.0], [3150.0, 3250.0], [3.0, 4.0])
    return Spectrum(x, y), model


def test_svg_is_byte_identical(overlay, tmp_path):
    spectrum, model = overlay
    a = emit_plot(spectrum, model, [3150.0], tmp_path / "a.svg", title="overlay")
    b = emit_plot(spectrum, model, [3150.0], tmp_path / "b.svg", title="overlay")
    assert a.read_bytes() == b.read_bytes()


def test_component_elements(overlay, tmp_path):
    spectrum, model = overlay
    text = emit_plot(spectrum, model, None, tmp_path / "m.svg").read_text()
    assert text.count('id="component-') == 2
    assert 'id="model"' in text
    text = emit_plot(spectrum, None, [3150.0, 3250.0], tmp_path / "s.svg").read_text()
    assert 'id="component-' not in text and 'id="peaks"' in text


def test_range_restricts_components(overlay, tmp_path):
    spectrum, model = overlay
    text = emit_plot(spectrum, model, None, tmp_path / "r.svg", (3100.0, 3200.0)).read_text()
    assert text.count('id="component-') == 1


def test_plot_errors(overlay, tmp_path):
    spectrum, model = overlay
    with pytest.raises(DataError):
        emit_plot(spectrum, model, None, tmp_path / "e.svg", (3200.0, 3100.0))
    with pytest.raises(DataError):
        emit_plot(spectrum, model, None, tmp_path / "e.svg", (3100.0, 3100.2))
    with pytest.raises(DataError):
        emit_plot(spectrum, model, None, tmp_path / "no" / "such" / "dir.svg")


def test_sweep_plot(tmp_path):
    table = sweep_parameter("mz_thr", [0.0, 0.1, 0.2], lambda v: [3000.0] if v else [3000.0, 3500.0], [3000.0])
    text = emit_sweep_plot(table, tmp_path / "s.svg").read_text()
    assert 'id="f1"' in text and 'id="best"' in text
    failed = sweep_parameter("x", [1], lambda v: (_ for _ in ()).throw(DataError("no")), [3000.0])
    with pytest.raises(DataError):
        emit_sweep_plot(failed, tmp_path / "f.svg")
